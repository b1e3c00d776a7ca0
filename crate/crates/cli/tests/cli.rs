use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use sctsvm_cli::formats::{format_histories, parse_histories, read_histories};
use sctsvm_cli::RunManifest;
use sctsvm_core::types::{ClassId, ClassPair, ClassifierParams, PairHistory, TimedClassifier};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn sctsvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sctsvm")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file of a directory, by name.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = fixture("drift5.json");
    for out in [&a, &b] {
        let o = sctsvm(&["simulate", "--config", s(&cfg), "--seed", "7", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let snap = snapshot(&a);
    assert!(snap.contains_key("date_0.csv") && snap.contains_key("samples.csv") && snap.contains_key("manifest.json"));
    assert_eq!(snap, snapshot(&b));
    let m = RunManifest::read(&a.join("manifest.json")).unwrap();
    assert_eq!(m.seed, 7);
    assert_eq!(m.artifacts.len() + 1, snap.len());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = sctsvm(&["finetune", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: E_USAGE: "), "{err}");
    assert!(err.contains("Usage:"));
    assert_eq!(sctsvm(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sctsvm(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sctsvm(&["predict", "--history", "missing.json", "--date", "4", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: E_IO: "));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "# reference_date=2017-05-01\ndate,label,f1\n0,1,x\n").unwrap();
    let o = sctsvm(&["run", "--data", s(&bad), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: E_PARSE: ") && err.contains("bad.csv:3"), "{err}");
}

#[test]
fn run_on_the_canned_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let data = fixture("drift5.csv");
    let o = sctsvm(&["run", "--data", s(&data), "--window", "4", "--nt", "5", "--C", "50", "--F", "20", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("trial,seed,date,method,overall_acc,acc_1,acc_2,acc_3,acc_4,acc_5"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][2], rows[0][3], rows[1][3]), ("40", "sct", "dir"));
    for r in &rows {
        let acc: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.command, "run");
    assert_eq!(m.artifacts, vec!["results.csv".to_string()]);
    assert!(!m.argv.iter().any(|a| a.contains("--out")));
}

#[test]
fn replay_reproduces_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let data = fixture("drift5.csv");
    let o = sctsvm(&["run", "--data", s(&data), "--nt", "5", "--trials", "2", "--seed", "3", "--out", s(&a)]);
    assert!(o.status.success());
    let o = sctsvm(&["replay", "--manifest", s(&a.join("manifest.json")), "--out", s(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn bootstrap_predict_finetune_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let sim = t.join("sim");
    assert!(sctsvm(&["simulate", "--config", s(&fixture("drift5.json")), "--out", s(&sim)]).status.success());
    let dates: Vec<PathBuf> = [0, 10, 20, 30].iter().map(|d| sim.join(format!("date_{d}.csv"))).collect();
    let mut args = vec!["bootstrap".to_string()];
    for d in &dates {
        args.push("--data".into());
        args.push(s(d).into());
    }
    args.extend(["--out".into(), s(&t.join("boot")).into()]);
    let o = Command::new(env!("CARGO_BIN_EXE_sctsvm")).args(&args).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hs = read_histories(&t.join("boot/history.json"), None).unwrap();
    assert_eq!(hs.len(), 10);
    assert!(hs.values().all(|h| h.dates() == vec![0, 10, 20, 30]));

    let o = sctsvm(&["predict", "--history", s(&t.join("boot/history.json")), "--date", "40", "--order", "auto", "--out", s(&t.join("pred"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trend: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.join("pred/trend.json")).unwrap()).unwrap();
    assert_eq!(trend.as_array().unwrap().len(), 10);

    let o = sctsvm(&[
        "finetune",
        "--predicted",
        s(&t.join("pred/predicted.json")),
        "--data",
        s(&sim.join("date_40.csv")),
        "--C",
        "50",
        "--F",
        "20",
        "--out",
        s(&t.join("ft")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let kkt: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.join("ft/kkt.json")).unwrap()).unwrap();
    for p in kkt.as_array().unwrap() {
        for key in ["stationarity", "feasibility", "complementarity"] {
            assert!(p["kkt"][key].as_f64().unwrap() <= 1e-6);
        }
    }
    let tuned = read_histories(&t.join("ft/finetuned.json"), None).unwrap();
    assert!(tuned.values().all(|h| h.latest().unwrap().date == 40));
}

#[test]
fn perturb_stays_in_band() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    let o = sctsvm(&["perturb", "--data", s(&fixture("drift5.csv")), "--band", "0.6:0.7", "--seed", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hs = read_histories(&out.join("history.json"), None).unwrap();
    for h in hs.values() {
        assert_eq!(h.len(), 5);
        for e in h.entries() {
            assert!((0.6..=0.7).contains(&e.accuracy.unwrap()));
        }
    }
}

#[test]
fn benchmark_writes_long_format() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bm");
    let o = sctsvm(&[
        "benchmark",
        "--data",
        s(&fixture("drift5.csv")),
        "--nt-list",
        "5",
        "--f-list",
        "0.01,20",
        "--order-list",
        "1,2",
        "--trials",
        "2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("benchmark.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("method,nt,F,C,order,trial,date,overall_acc,acc_1"));
    // 2 F × 2 orders × 2 trials SCT rows, plus one Dir row per trial
    assert_eq!(lines.iter().filter(|l| l.starts_with("sct,")).count(), 8);
    assert_eq!(lines.iter().filter(|l| l.starts_with("dir,")).count(), 2);
}

fn arb_history() -> impl Strategy<Value = BTreeMap<ClassPair, PairHistory>> {
    let value = prop_oneof![-1e6..1e6f64, -1.0..1.0f64, (-300i32..300).prop_map(|e| 10f64.powi(e))];
    (1usize..5, 1usize..6).prop_flat_map(move |(m, n)| {
        let entry = (prop::collection::vec(value.clone(), m), value.clone(), proptest::option::of(0.0..=1.0f64));
        prop::collection::vec(entry, n).prop_map(move |es| {
            let pair = ClassPair::new(ClassId(2), ClassId(5)).unwrap();
            let entries = es
                .into_iter()
                .enumerate()
                .map(|(i, (w, b, acc))| {
                    let t = TimedClassifier::new(ClassifierParams::new(w, b).unwrap(), 16 * i as i64 - 30);
                    match acc {
                        Some(a) => t.with_accuracy(a),
                        None => t,
                    }
                });
            BTreeMap::from([(pair, PairHistory::from_entries(pair, n, entries).unwrap())])
        })
    })
}

proptest! {
    #[test]
    fn history_json_round_trip(hs in arb_history()) {
        let text = format_histories(&hs).unwrap();
        let back = parse_histories(&text, Path::new("h.json"), None).unwrap();
        for (pair, h) in &hs {
            let g = &back[pair];
            prop_assert_eq!(h.dates(), g.dates());
            for (a, b) in h.stacked().iter().zip(g.stacked()) {
                let rel = (a - &b).amax() / (1.0 + a.amax());
                prop_assert!(rel <= 1e-12);
            }
        }
    }
}

//! Sample CSV and classifier-history JSON files.
//!
//! Samples:
//!
//! ```text
//! # reference_date=2017-05-01
//! date,label,f1,f2,f3
//! 0,1,0.051,0.083,0.25
//! ```
//!
//! Dates are integer days after the reference date. A file may hold several
//! dates; rows are grouped per date in file order.
//!
//! Histories:
//!
//! ```text
//! { "m": 3, "pairs": [ { "pos": 1, "neg": 2,
//!     "entries": [ { "date": 0, "w": [..], "b": .., "accuracy": null } ] } ] }
//! ```
//!
//! Every real number is written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use sctsvm_core::types::{ClassId, ClassPair, ClassifierParams, LabeledDataset, PairHistory, TimedClassifier};

use crate::error::{CliError, Result};

const REFERENCE_PREFIX: &str = "# reference_date=";

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub reference_date: NaiveDate,
    /// One dataset per distinct date, ascending.
    pub datasets: Vec<LabeledDataset>,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<SampleFile> {
    parse_samples(&read_text(path)?, path)
}

pub fn parse_samples(text: &str, path: &Path) -> Result<SampleFile> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let reference = first
        .trim_end_matches('\r')
        .strip_prefix(REFERENCE_PREFIX)
        .ok_or_else(|| CliError::parse(path, 1, format!("expected `{REFERENCE_PREFIX}<YYYY-MM-DD>`")))?;
    let reference_date = NaiveDate::parse_from_str(reference.trim(), "%Y-%m-%d")
        .map_err(|e| CliError::parse(path, 1, format!("bad reference date `{reference}`: {e}")))?;

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CliError::parse(path, 2, e.to_string()))?
        .clone();
    let m = header.len().saturating_sub(2);
    let expected: Vec<String> = ["date".to_string(), "label".to_string()]
        .into_iter()
        .chain((1..=m).map(|j| format!("f{j}")))
        .collect();
    if m == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::parse(path, 2, format!("header must be `{}` with at least one feature", expected.join(","))));
    }

    let mut groups: BTreeMap<i64, (Vec<Vec<f64>>, Vec<ClassId>)> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize + 1);
            CliError::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize + 1);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let date: i64 = field(0)
            .parse()
            .map_err(|_| CliError::parse(path, line, format!("bad date `{}`", field(0))))?;
        let label: u32 = field(1)
            .parse()
            .map_err(|_| CliError::parse(path, line, format!("bad label `{}`", field(1))))?;
        let row = (0..m)
            .map(|j| match field(j + 2).parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::parse(path, line, format!("bad value `{}` in f{}", field(j + 2), j + 1))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let g = groups.entry(date).or_default();
        g.0.push(row);
        g.1.push(ClassId(label));
    }
    if groups.is_empty() {
        return Err(CliError::parse(path, 2, "no samples"));
    }
    let datasets = groups
        .into_iter()
        .map(|(date, (rows, labels))| LabeledDataset::from_rows(&rows, labels, date).map_err(CliError::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleFile {
        reference_date,
        datasets,
    })
}

pub fn format_samples(reference_date: NaiveDate, datasets: &[LabeledDataset]) -> String {
    let m = datasets.first().map_or(0, |d| d.dim());
    let mut out = format!("{REFERENCE_PREFIX}{}\ndate,label", reference_date.format("%Y-%m-%d"));
    for j in 1..=m {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for d in datasets {
        for i in 0..d.len() {
            let _ = write!(out, "{},{}", d.date(), d.labels()[i]);
            for j in 0..m {
                let _ = write!(out, ",{}", d.features()[(i, j)]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_samples(path: &Path, reference_date: NaiveDate, datasets: &[LabeledDataset]) -> Result<()> {
    write_text(path, &format_samples(reference_date, datasets))
}

/// A real number serialized with 17 significant digits.
struct Exact(f64);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

#[derive(Serialize)]
struct EntryOut {
    date: i64,
    w: Vec<Exact>,
    b: Exact,
    accuracy: Option<Exact>,
}

#[derive(Serialize)]
struct PairOut {
    pos: ClassId,
    neg: ClassId,
    entries: Vec<EntryOut>,
}

#[derive(Serialize)]
struct HistoryOut {
    m: usize,
    pairs: Vec<PairOut>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryIn {
    date: i64,
    w: Vec<f64>,
    b: f64,
    accuracy: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairIn {
    pos: ClassId,
    neg: ClassId,
    entries: Vec<EntryIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryIn {
    m: usize,
    pairs: Vec<PairIn>,
}

pub fn format_histories(histories: &BTreeMap<ClassPair, PairHistory>) -> Result<String> {
    let m = histories.values().find_map(|h| h.dim()).unwrap_or(0);
    let doc = HistoryOut {
        m,
        pairs: histories
            .iter()
            .map(|(pair, h)| PairOut {
                pos: pair.pos(),
                neg: pair.neg(),
                entries: h
                    .entries()
                    .iter()
                    .map(|e| EntryOut {
                        date: e.date,
                        w: e.params.w().iter().map(|&v| Exact(v)).collect(),
                        b: Exact(e.params.b()),
                        accuracy: e.accuracy.map(Exact),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Json {
        path: "<history>".into(),
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_histories(path: &Path, histories: &BTreeMap<ClassPair, PairHistory>) -> Result<()> {
    write_text(path, &format_histories(histories)?)
}

/// Parses a history document. `window` caps each pair's history; `None`
/// keeps every stored entry.
pub fn parse_histories(text: &str, path: &Path, window: Option<usize>) -> Result<BTreeMap<ClassPair, PairHistory>> {
    let json_err = |message: String| CliError::Json {
        path: path.into(),
        message,
    };
    let doc: HistoryIn = serde_json::from_str(text).map_err(|e| json_err(e.to_string()))?;
    let mut out = BTreeMap::new();
    for p in doc.pairs {
        if p.pos >= p.neg {
            return Err(json_err(format!("pair ({}, {}) must list the smaller class as pos", p.pos, p.neg)));
        }
        let pair = ClassPair::new(p.pos, p.neg)?;
        let size = window.unwrap_or(p.entries.len()).max(1);
        let mut h = PairHistory::new(pair, size)?;
        for e in p.entries {
            if e.w.len() != doc.m {
                return Err(json_err(format!("pair {pair}: entry at date {} has {} weights, expected {}", e.date, e.w.len(), doc.m)));
            }
            let mut t = TimedClassifier::new(ClassifierParams::new(e.w, e.b)?, e.date);
            if let Some(a) = e.accuracy {
                if !(0.0..=1.0).contains(&a) {
                    return Err(json_err(format!("pair {pair}: accuracy {a} outside [0, 1]")));
                }
                t = t.with_accuracy(a);
            }
            h.push(t)?;
        }
        if out.insert(pair, h).is_some() {
            return Err(json_err(format!("pair {pair} listed twice")));
        }
    }
    Ok(out)
}

pub fn read_histories(path: &Path, window: Option<usize>) -> Result<BTreeMap<ClassPair, PairHistory>> {
    parse_histories(&read_text(path)?, path, window)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: "<output>".into(),
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Json {
        path: path.into(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 5, 1).unwrap()
    }

    #[test]
    fn samples_round_trip() {
        let a = LabeledDataset::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-7, 4.0]], vec![ClassId(1), ClassId(2)], 0).unwrap();
        let b = LabeledDataset::from_rows(&[vec![0.2, 0.3]], vec![ClassId(2)], 10).unwrap();
        let text = format_samples(date(), &[a.clone(), b.clone()]);
        assert!(text.starts_with("# reference_date=2017-05-01\ndate,label,f1,f2\n"));
        let back = parse_samples(&text, Path::new("x.csv")).unwrap();
        assert_eq!(back.reference_date, date());
        assert_eq!(back.datasets, vec![a, b]);
    }

    #[test]
    fn samples_errors_carry_lines() {
        let p = Path::new("s.csv");
        assert!(matches!(parse_samples("date,label,f1\n", p), Err(CliError::Parse { line: 1, .. })));
        let bad = "# reference_date=2017-05-01\ndate,label,f1\n0,1,0.5\n0,x,0.5\n";
        match parse_samples(bad, p) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let header = "# reference_date=2017-05-01\ndate,label,x1\n0,1,0.5\n";
        assert!(parse_samples(header, p).is_err());
        let nan = "# reference_date=2017-05-01\ndate,label,f1\n0,1,NaN\n";
        assert!(parse_samples(nan, p).is_err());
    }

    #[test]
    fn history_round_trip_is_exact() {
        let pair = ClassPair::new(ClassId(1), ClassId(3)).unwrap();
        let entries = vec![
            TimedClassifier::new(ClassifierParams::new(vec![0.1, 1.0 / 3.0], -2.0 / 7.0).unwrap(), 0).with_accuracy(0.65),
            TimedClassifier::new(ClassifierParams::new(vec![1e-300, -123456.789], 5e10).unwrap(), 16),
        ];
        let hs = BTreeMap::from([(pair, PairHistory::from_entries(pair, 4, entries).unwrap())]);
        let text = format_histories(&hs).unwrap();
        assert!(text.contains("3.3333333333333331e-1"));
        let back = parse_histories(&text, Path::new("h.json"), Some(4)).unwrap();
        assert_eq!(back, hs);
    }

    #[test]
    fn history_rejects_flipped_pairs() {
        let text = r#"{"m":1,"pairs":[{"pos":2,"neg":1,"entries":[]}]}"#;
        assert!(parse_histories(text, Path::new("h.json"), None).is_err());
        let text = r#"{"m":2,"pairs":[{"pos":1,"neg":2,"entries":[{"date":0,"w":[1.0],"b":0.0,"accuracy":null}]}]}"#;
        assert!(parse_histories(text, Path::new("h.json"), None).is_err());
    }
}

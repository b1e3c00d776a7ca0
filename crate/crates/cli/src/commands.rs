use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use sctsvm_core::linsvm::{train_soft_margin, SvmConfig};
use sctsvm_core::pipeline::{bootstrap_histories, run_sequence, DateOutcome, OrderPolicy, PipelineConfig};
use sctsvm_core::scenario::{generate, landsat_like, paper_like, perturb_to_band, ScenarioConfig};
use sctsvm_core::tasvm::{fine_tune, kkt_report, FineTuneConfig, KktReport, SolveForm};
use sctsvm_core::trend::{predict_classifier, select_order, TrendModel};
use sctsvm_core::types::{make_binary_view, ClassId, ClassPair, LabeledDataset, PairHistory, TimedClassifier};
use sctsvm_core::SctError;

use crate::error::{CliError, Result};
use crate::formats::{read_histories, read_json, read_samples, to_json, write_histories, write_samples, write_text};
use crate::manifest::RunManifest;

/// Candidate orders tried by `--order auto`.
const AUTO_CANDIDATES: [usize; 3] = [1, 2, 3];

#[derive(Debug, Parser)]
#[command(name = "sctsvm", version, about = "Sequential classifier training with trend-aware SVMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate per-date sample CSVs from a drift scenario.
    Simulate(SimulateArgs),
    /// Train a classifier history from fully labeled dates.
    Bootstrap(BootstrapArgs),
    /// Predict classifiers for a target date from a history.
    Predict(PredictArgs),
    /// Fine-tune predicted classifiers on labeled samples.
    Finetune(FinetuneArgs),
    /// Run the sequential pipeline and the direct baseline over a dated CSV.
    Run(RunArgs),
    /// Sweep settings and write a long-format accuracy table.
    Benchmark(BenchmarkArgs),
    /// Build a history of classifiers degraded into an accuracy band.
    Perturb(PerturbArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Fixture {
    Paper,
    Landsat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderArg {
    Fixed(usize),
    Auto,
}

impl OrderArg {
    fn policy(self) -> OrderPolicy {
        match self {
            OrderArg::Fixed(order) => OrderPolicy::Fixed { order },
            OrderArg::Auto => OrderPolicy::Auto {
                candidates: AUTO_CANDIDATES.to_vec(),
            },
        }
    }

    fn label(self) -> String {
        match self {
            OrderArg::Fixed(r) => r.to_string(),
            OrderArg::Auto => "auto".into(),
        }
    }
}

fn parse_order(s: &str) -> std::result::Result<OrderArg, String> {
    if s == "auto" {
        return Ok(OrderArg::Auto);
    }
    s.parse()
        .map(OrderArg::Fixed)
        .map_err(|_| format!("expected a polynomial order or `auto`, got `{s}`"))
}

fn parse_band(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(format!("band must satisfy 0 <= lo <= hi <= 1, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormArg {
    Dual,
    Primal,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
    pub config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_enum)]
    pub fixture: Option<Fixture>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "2017-01-01")]
    pub reference_date: NaiveDate,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Sample CSVs; may be repeated.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// History length per pair; defaults to the number of dates.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long = "C", default_value_t = 50.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub history: PathBuf,
    /// Target date, in days after the reference date.
    #[arg(long, allow_hyphen_values = true)]
    pub date: i64,
    #[arg(long, default_value = "1", value_parser = parse_order)]
    pub order: OrderArg,
    /// Keep only the latest entries of each history.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Predicted classifiers; the latest entry of each pair is used.
    #[arg(long)]
    pub predicted: PathBuf,
    /// Labeled samples of the target date.
    #[arg(long)]
    pub data: PathBuf,
    /// Date to use when the sample file holds several.
    #[arg(long, allow_hyphen_values = true)]
    pub date: Option<i64>,
    #[arg(long = "C", default_value_t = 50.0)]
    pub c: f64,
    #[arg(long = "F", default_value_t = 20.0)]
    pub f: f64,
    #[arg(long, value_enum, default_value = "dual")]
    pub form: FormArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub window: usize,
    /// Labeled samples per class on each target date.
    #[arg(long, default_value_t = 5)]
    pub nt: usize,
    #[arg(long = "C", default_value_t = 50.0)]
    pub c: f64,
    #[arg(long = "F", default_value_t = 20.0)]
    pub f: f64,
    #[arg(long, default_value = "1", value_parser = parse_order)]
    pub order: OrderArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trial `t` uses seed `seed + t`.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Leading dates treated as fully labeled; defaults to
    /// min(window, dates - 1).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub nt_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub f_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub c_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1", value_parser = parse_order)]
    pub order_list: Vec<OrderArg>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 4)]
    pub window: usize,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Fully labeled dates to build the degraded history from.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "0.6:0.7", value_parser = parse_band)]
    pub band: (f64, f64),
    #[arg(long, default_value_t = 200)]
    pub max_attempts: usize,
    /// Initial noise scale; 0 picks one from the classifier norm.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long = "C", default_value_t = 50.0)]
    pub c: f64,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Output directory that remembers what was written to it.
struct Outputs {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        write_text(&p, text)
    }

    fn finish(self, mut manifest: RunManifest) -> Result<()> {
        manifest.artifacts = self.artifacts;
        manifest.write(&self.dir)
    }
}

fn config_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| CliError::Json {
        path: "<config>".into(),
        message: e.to_string(),
    })
}

/// Reads sample files and merges them into one date-ordered sequence.
fn load_datasets(paths: &[PathBuf]) -> Result<(NaiveDate, Vec<LabeledDataset>)> {
    let mut reference = None;
    let mut by_date: BTreeMap<i64, LabeledDataset> = BTreeMap::new();
    for p in paths {
        let file = read_samples(p)?;
        match reference {
            None => reference = Some(file.reference_date),
            Some(r) if r != file.reference_date => {
                return Err(CliError::Core(SctError::Validation(format!(
                    "{}: reference date {} differs from {r}",
                    p.display(),
                    file.reference_date
                ))))
            }
            _ => {}
        }
        for d in file.datasets {
            let date = d.date();
            if by_date.insert(date, d).is_some() {
                return Err(CliError::Core(SctError::Validation(format!("date {date} appears in more than one file"))));
            }
        }
    }
    let datasets: Vec<LabeledDataset> = by_date.into_values().collect();
    if let Some(first) = datasets.first() {
        if let Some(bad) = datasets.iter().find(|d| d.dim() != first.dim()) {
            return Err(CliError::Core(SctError::Dimension {
                expected: first.dim(),
                found: bad.dim(),
            }));
        }
    }
    Ok((reference.expect("at least one file"), datasets))
}

/// Runs a parsed command. `argv` is recorded in the manifest.
pub fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a, argv),
        Command::Bootstrap(a) => bootstrap(a, argv),
        Command::Predict(a) => predict(a, argv),
        Command::Finetune(a) => finetune(a, argv),
        Command::Run(a) => run(a, argv),
        Command::Benchmark(a) => benchmark(a, argv),
        Command::Perturb(a) => perturb(a, argv),
        Command::Replay(a) => replay(a),
    }
}

fn simulate(a: SimulateArgs, argv: Vec<String>) -> Result<()> {
    let mut cfg: ScenarioConfig = match (&a.config, a.fixture) {
        (Some(p), _) => read_json(p)?,
        (None, Some(Fixture::Paper)) => paper_like(0),
        (None, Some(Fixture::Landsat)) => landsat_like(0),
        (None, None) => return Err(CliError::Usage("either --config or --fixture is required".into())),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let data = generate(&cfg)?;
    let mut out = Outputs::create(&a.out)?;
    for d in &data {
        let p = out.path(&format!("date_{}.csv", d.date()));
        write_samples(&p, a.reference_date, std::slice::from_ref(d))?;
    }
    let p = out.path("samples.csv");
    write_samples(&p, a.reference_date, &data)?;
    out.finish(RunManifest::new("simulate", argv, config_value(&cfg)?, cfg.seed))
}

fn bootstrap(a: BootstrapArgs, argv: Vec<String>) -> Result<()> {
    let (_, data) = load_datasets(&a.data)?;
    let window = a.window.unwrap_or(data.len().max(2));
    let mut cfg = PipelineConfig::new(window, 1, a.c, 1.0).with_seed(a.seed);
    cfg.bootstrap_c = a.c;
    cfg.validate()?;
    let hs = bootstrap_histories(&data, &cfg)?;
    let mut out = Outputs::create(&a.out)?;
    let p = out.path("history.json");
    write_histories(&p, &hs)?;
    out.finish(RunManifest::new("bootstrap", argv, config_value(&cfg)?, a.seed))
}

#[derive(Serialize)]
struct PairTrend {
    pos: ClassId,
    neg: ClassId,
    model: TrendModel,
}

#[derive(Serialize)]
struct PredictConfig {
    date: i64,
    order: OrderPolicy,
    window: Option<usize>,
}

/// Trend order for one history, clamped to what the history supports.
fn resolve_order(h: &PairHistory, order: OrderArg, date: i64) -> Result<usize> {
    let n = h.len();
    if n < 2 {
        return Err(CliError::Core(SctError::InsufficientPoints { needed: 2, got: n }));
    }
    Ok(match order {
        OrderArg::Fixed(r) => r.min(n - 1),
        OrderArg::Auto => match select_order(h, &AUTO_CANDIDATES, date) {
            Ok(r) => r,
            Err(SctError::InsufficientPoints { .. }) => 1.min(n - 1),
            Err(e) => return Err(e.into()),
        },
    })
}

fn predict(a: PredictArgs, argv: Vec<String>) -> Result<()> {
    let hs = read_histories(&a.history, a.window)?;
    let mut predicted = BTreeMap::new();
    let mut trends = Vec::new();
    for (&pair, h) in &hs {
        let r = resolve_order(h, a.order, a.date)?;
        let (params, model) = predict_classifier(h, r, a.date)?;
        predicted.insert(pair, PairHistory::from_entries(pair, 1, [TimedClassifier::new(params, a.date)])?);
        trends.push(PairTrend {
            pos: pair.pos(),
            neg: pair.neg(),
            model,
        });
    }
    let mut out = Outputs::create(&a.out)?;
    let p = out.path("predicted.json");
    write_histories(&p, &predicted)?;
    out.text("trend.json", &to_json(&trends)?)?;
    let cfg = PredictConfig {
        date: a.date,
        order: a.order.policy(),
        window: a.window,
    };
    out.finish(RunManifest::new("predict", argv, config_value(&cfg)?, a.seed))
}

#[derive(Serialize)]
struct PairKkt {
    pos: ClassId,
    neg: ClassId,
    /// Left as predicted because a class had no samples.
    carried: bool,
    kkt: Option<KktReport>,
    primal_objective: Option<f64>,
    dual_objective: Option<f64>,
    duality_gap: Option<f64>,
    free_support_vectors: Option<usize>,
    bias_fallback: Option<bool>,
    qp_iterations: Option<usize>,
}

fn finetune(a: FinetuneArgs, argv: Vec<String>) -> Result<()> {
    let predicted = read_histories(&a.predicted, None)?;
    let file = read_samples(&a.data)?;
    let samples = match (a.date, file.datasets.len()) {
        (Some(date), _) => file
            .datasets
            .into_iter()
            .find(|d| d.date() == date)
            .ok_or_else(|| CliError::Core(SctError::Validation(format!("no samples for date {date}"))))?,
        (None, 1) => file.datasets.into_iter().next().expect("one dataset"),
        (None, n) => return Err(CliError::Usage(format!("sample file holds {n} dates; pick one with --date"))),
    };
    let form = match a.form {
        FormArg::Dual => SolveForm::Dual,
        FormArg::Primal => SolveForm::Primal,
    };
    let cfg = if a.c > 0.0 && a.f > 0.0 {
        FineTuneConfig::new(a.c, a.f)?
    } else {
        FineTuneConfig::diagnostic(a.c, a.f)?
    }
    .with_form(form);
    let qp = Default::default();
    let present = samples.classes();

    let mut tuned = BTreeMap::new();
    let mut reports = Vec::new();
    for (&pair, h) in &predicted {
        let start = h.latest().ok_or(SctError::EmptyHistory)?;
        if !present.contains(&pair.pos()) || !present.contains(&pair.neg()) {
            tuned.insert(pair, PairHistory::from_entries(pair, 1, [start.clone()])?);
            reports.push(PairKkt {
                pos: pair.pos(),
                neg: pair.neg(),
                carried: true,
                kkt: None,
                primal_objective: None,
                dual_objective: None,
                duality_gap: None,
                free_support_vectors: None,
                bias_fallback: None,
                qp_iterations: None,
            });
            continue;
        }
        let v = make_binary_view(&samples, pair.pos(), pair.neg())?;
        let r = fine_tune(&start.params, &v, &cfg, &qp)?;
        let kkt = kkt_report(&r, &start.params, &v, &cfg);
        let entry = TimedClassifier::new(r.params.clone(), samples.date());
        tuned.insert(pair, PairHistory::from_entries(pair, 1, [entry])?);
        reports.push(PairKkt {
            pos: pair.pos(),
            neg: pair.neg(),
            carried: false,
            kkt: Some(kkt),
            primal_objective: Some(r.primal_objective),
            dual_objective: Some(r.dual_objective),
            duality_gap: Some(r.duality_gap),
            free_support_vectors: Some(r.free_support_vectors),
            bias_fallback: Some(r.bias_fallback),
            qp_iterations: Some(r.qp_iterations),
        });
    }
    let mut out = Outputs::create(&a.out)?;
    let p = out.path("finetuned.json");
    write_histories(&p, &tuned)?;
    out.text("kkt.json", &to_json(&reports)?)?;
    out.finish(RunManifest::new("finetune", argv, config_value(&cfg)?, a.seed))
}

fn default_bootstrap(window: usize, dates: usize) -> usize {
    window.min(dates.saturating_sub(1))
}

fn all_classes(data: &[LabeledDataset]) -> Vec<ClassId> {
    let set: BTreeSet<ClassId> = data.iter().flat_map(|d| d.labels().iter().copied()).collect();
    set.into_iter().collect()
}

fn class_columns(out: &mut String, classes: &[ClassId]) {
    for c in classes {
        let _ = write!(out, ",acc_{c}");
    }
    out.push('\n');
}

/// `,overall,acc_1,...`; classes without test rows stay empty.
fn accuracy_cells(out: &mut String, r: &sctsvm_core::eval::TrialReport, classes: &[ClassId]) {
    let _ = write!(out, ",{}", r.overall);
    for c in classes {
        match r.per_class.get(c) {
            Some(v) => {
                let _ = write!(out, ",{v}");
            }
            None => out.push(','),
        }
    }
    out.push('\n');
}

#[derive(Serialize)]
struct RunConfig {
    bootstrap: usize,
    trials: usize,
    pipeline: PipelineConfig,
}

fn run(a: RunArgs, argv: Vec<String>) -> Result<()> {
    let (_, data) = load_datasets(std::slice::from_ref(&a.data))?;
    let bootstrap = a.bootstrap.unwrap_or(default_bootstrap(a.window, data.len()));
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let base = PipelineConfig::new(a.window, a.nt, a.c, a.f)
        .with_seed(a.seed)
        .with_order(a.order.policy());
    base.validate()?;
    let classes = all_classes(&data);
    let mut csv = String::from("trial,seed,date,method,overall_acc");
    class_columns(&mut csv, &classes);
    for t in 0..a.trials {
        let seed = a.seed.wrapping_add(t as u64);
        let outcomes = run_sequence(&data, bootstrap, &base.clone().with_seed(seed))?;
        for o in &outcomes {
            for (method, r) in [("sct", &o.sct), ("dir", &o.dir)] {
                let _ = write!(csv, "{t},{seed},{},{method}", o.date);
                accuracy_cells(&mut csv, r, &classes);
            }
        }
    }
    let mut out = Outputs::create(&a.out)?;
    out.text("results.csv", &csv)?;
    let cfg = RunConfig {
        bootstrap,
        trials: a.trials,
        pipeline: base,
    };
    out.finish(RunManifest::new("run", argv, config_value(&cfg)?, a.seed))
}

#[derive(Serialize)]
struct BenchmarkConfig {
    nt: Vec<usize>,
    f: Vec<f64>,
    c: Vec<f64>,
    order: Vec<String>,
    trials: usize,
    window: usize,
    bootstrap: usize,
}

struct Cell {
    nt: usize,
    c: f64,
    f: f64,
    order: OrderArg,
    trial: usize,
    /// Dir-SVM does not depend on F or the order; only one cell per
    /// (nt, C, trial) reports it.
    emit_dir: bool,
}

fn benchmark(a: BenchmarkArgs, argv: Vec<String>) -> Result<()> {
    let (_, data) = load_datasets(std::slice::from_ref(&a.data))?;
    let bootstrap = a.bootstrap.unwrap_or(default_bootstrap(a.window, data.len()));
    if a.trials == 0 || a.nt_list.is_empty() || a.f_list.is_empty() || a.c_list.is_empty() || a.order_list.is_empty() {
        return Err(CliError::Usage("benchmark needs at least one value per list and one trial".into()));
    }
    let mut cells = Vec::new();
    for &nt in &a.nt_list {
        for &c in &a.c_list {
            for (fi, &f) in a.f_list.iter().enumerate() {
                for (oi, &order) in a.order_list.iter().enumerate() {
                    for trial in 0..a.trials {
                        cells.push(Cell {
                            nt,
                            c,
                            f,
                            order,
                            trial,
                            emit_dir: fi == 0 && oi == 0,
                        });
                    }
                }
            }
        }
    }
    let results: Vec<Vec<DateOutcome>> = cells
        .par_iter()
        .map(|cell| {
            let cfg = PipelineConfig::new(a.window, cell.nt, cell.c, cell.f)
                .with_seed(a.seed.wrapping_add(cell.trial as u64))
                .with_order(cell.order.policy());
            run_sequence(&data, bootstrap, &cfg).map_err(CliError::from)
        })
        .collect::<Result<_>>()?;

    let classes = all_classes(&data);
    let mut csv = String::from("method,nt,F,C,order,trial,date,overall_acc");
    class_columns(&mut csv, &classes);
    for (cell, outcomes) in cells.iter().zip(&results) {
        for o in outcomes {
            let _ = write!(csv, "sct,{},{},{},{},{},{}", cell.nt, cell.f, cell.c, cell.order.label(), cell.trial, o.date);
            accuracy_cells(&mut csv, &o.sct, &classes);
            if cell.emit_dir {
                let _ = write!(csv, "dir,{},,{},,{},{}", cell.nt, cell.c, cell.trial, o.date);
                accuracy_cells(&mut csv, &o.dir, &classes);
            }
        }
    }
    let mut out = Outputs::create(&a.out)?;
    out.text("benchmark.csv", &csv)?;
    let cfg = BenchmarkConfig {
        nt: a.nt_list.clone(),
        f: a.f_list.clone(),
        c: a.c_list.clone(),
        order: a.order_list.iter().map(|o| o.label()).collect(),
        trials: a.trials,
        window: a.window,
        bootstrap,
    };
    out.finish(RunManifest::new("benchmark", argv, config_value(&cfg)?, a.seed))
}

#[derive(Serialize)]
struct PerturbConfig {
    band: (f64, f64),
    max_attempts: usize,
    noise: f64,
    c: f64,
    window: usize,
}

/// Seed of the perturbation for date `di`, pair `pi`.
fn perturb_seed(seed: u64, di: usize, pi: usize) -> u64 {
    seed ^ (((di as u64) << 32) | pi as u64)
}

fn perturb(a: PerturbArgs, argv: Vec<String>) -> Result<()> {
    let (_, data) = load_datasets(std::slice::from_ref(&a.data))?;
    let window = a.window.unwrap_or(data.len().max(2));
    let svm = SvmConfig::new(a.c)?;
    let qp = Default::default();
    let classes: BTreeSet<ClassId> = all_classes(&data).into_iter().collect();
    let pairs = ClassPair::all(&classes);
    let mut hs: BTreeMap<ClassPair, PairHistory> = pairs
        .iter()
        .map(|&p| PairHistory::new(p, window).map(|h| (p, h)))
        .collect::<std::result::Result<_, _>>()?;
    for (di, d) in data.iter().enumerate() {
        let present = d.classes();
        for (pi, &pair) in pairs.iter().enumerate() {
            if !present.contains(&pair.pos()) || !present.contains(&pair.neg()) {
                continue;
            }
            let v = make_binary_view(d, pair.pos(), pair.neg())?;
            let opt = train_soft_margin(&v, &svm, &qp)?;
            let t = perturb_to_band(&opt, &v, a.band, a.noise, perturb_seed(a.seed, di, pi), a.max_attempts, d.date())?;
            hs.get_mut(&pair).expect("pair listed").push(t)?;
        }
    }
    hs.retain(|_, h| !h.is_empty());
    let mut out = Outputs::create(&a.out)?;
    let p = out.path("history.json");
    write_histories(&p, &hs)?;
    let cfg = PerturbConfig {
        band: a.band,
        max_attempts: a.max_attempts,
        noise: a.noise,
        c: a.c,
        window,
    };
    out.finish(RunManifest::new("perturb", argv, config_value(&cfg)?, a.seed))
}

fn replay(a: ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    if m.command == "replay" {
        return Err(CliError::Usage("cannot replay a replay".into()));
    }
    let mut args = vec!["sctsvm".to_string()];
    args.extend(m.argv.iter().cloned());
    args.push("--out".into());
    args.push(a.out.to_string_lossy().into_owned());
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Usage(format!("manifest command line: {}", first_line(&e.to_string()))))?;
    execute(cli, m.argv)
}

pub(crate) fn first_line(msg: &str) -> &str {
    let line = msg.lines().next().unwrap_or("");
    line.strip_prefix("error: ").unwrap_or(line)
}

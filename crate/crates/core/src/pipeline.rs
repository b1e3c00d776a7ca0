//! Sequential classifier training over a dated image stream.
//!
//! Each step predicts a classifier for every class pair from its history,
//! fine-tunes it on a few labeled samples of the incoming image, and appends
//! the result to the history. Multiclass labels come from one-against-one
//! voting.

use std::collections::{BTreeMap, BTreeSet};

use rand::{seq::index::sample, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SctError};
use crate::eval::{confusion_and_accuracy, TrialReport};
use crate::linsvm::{decision_value, train_soft_margin, SvmConfig};
use crate::qp::QpConfig;
use crate::tasvm::{fine_tune, grid_search, FineTuneConfig, GridSpec};
use crate::trend::{predict_classifier, select_order};
use crate::types::{make_binary_view, ClassId, ClassPair, ClassifierParams, LabeledDataset, PairHistory, TimedClassifier};

/// Polynomial order used for the trend of each pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderPolicy {
    Fixed { order: usize },
    PerPair { default: usize, pairs: Vec<PairOrder> },
    /// Leave-one-out selection among `candidates`.
    Auto { candidates: Vec<usize> },
}

impl Default for OrderPolicy {
    fn default() -> Self {
        OrderPolicy::Fixed { order: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOrder {
    pub pos: ClassId,
    pub neg: ClassId,
    pub order: usize,
}

/// Fine-tuning weights: fixed, or chosen per pair by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weights {
    /// `f = 0` reduces fine-tuning to a plain SVM on the samples.
    Fixed { c: f64, f: f64 },
    Grid { grid: GridSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of classifiers kept per pair.
    pub window: usize,
    pub order: OrderPolicy,
    pub weights: Weights,
    /// Labeled samples drawn per class from each incoming image.
    pub nt: usize,
    pub seed: u64,
    /// SVM weight for classifiers trained on fully labeled images.
    pub bootstrap_c: f64,
    #[serde(default)]
    pub qp: QpConfig,
}

impl PipelineConfig {
    pub fn new(window: usize, nt: usize, c: f64, f: f64) -> Self {
        Self {
            window,
            order: OrderPolicy::default(),
            weights: Weights::Fixed { c, f },
            nt,
            seed: 0,
            bootstrap_c: c,
            qp: QpConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_order(mut self, order: OrderPolicy) -> Self {
        self.order = order;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(SctError::InvalidArgument("window must be at least 2".into()));
        }
        if self.nt == 0 {
            return Err(SctError::InvalidArgument("nt must be at least 1".into()));
        }
        if !(self.bootstrap_c > 0.0 && self.bootstrap_c.is_finite()) {
            return Err(SctError::InvalidArgument("bootstrap C must be positive".into()));
        }
        match &self.weights {
            Weights::Fixed { c, f } => {
                FineTuneConfig::diagnostic(*c, *f)?;
                if *c <= 0.0 {
                    return Err(SctError::InvalidArgument("C must be positive".into()));
                }
            }
            Weights::Grid { grid } => {
                if grid.c_values.is_empty() || grid.f_values.is_empty() {
                    return Err(SctError::InvalidArgument("empty weight grid".into()));
                }
            }
        }
        if let OrderPolicy::Auto { candidates } = &self.order {
            if candidates.is_empty() {
                return Err(SctError::InvalidArgument("no candidate orders".into()));
            }
        }
        Ok(())
    }

    /// Requested order for `pair`, before clamping to the history length.
    fn requested_order(&self, pair: ClassPair) -> Option<usize> {
        match &self.order {
            OrderPolicy::Fixed { order } => Some(*order),
            OrderPolicy::PerPair { default, pairs } => Some(
                pairs
                    .iter()
                    .find(|p| ClassPair::new(p.pos, p.neg).ok() == Some(pair))
                    .map_or(*default, |p| p.order),
            ),
            OrderPolicy::Auto { .. } => None,
        }
    }
}

/// One binary classifier per class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassModel {
    classes: BTreeSet<ClassId>,
    classifiers: BTreeMap<ClassPair, ClassifierParams>,
}

impl MulticlassModel {
    /// Requires exactly one classifier per pair of `classes`.
    pub fn new(classes: BTreeSet<ClassId>, classifiers: BTreeMap<ClassPair, ClassifierParams>) -> Result<Self> {
        let expected = ClassPair::all(&classes);
        if classes.is_empty() || expected.len() != classifiers.len() || expected.iter().any(|p| !classifiers.contains_key(p)) {
            return Err(SctError::Validation(format!(
                "model needs one classifier per pair of {} classes, got {}",
                classes.len(),
                classifiers.len()
            )));
        }
        let dims: BTreeSet<usize> = classifiers.values().map(|c| c.dim()).collect();
        if dims.len() > 1 {
            return Err(SctError::Validation("classifiers disagree on feature dimension".into()));
        }
        Ok(Self { classes, classifiers })
    }

    pub fn classes(&self) -> &BTreeSet<ClassId> {
        &self.classes
    }

    pub fn classifiers(&self) -> &BTreeMap<ClassPair, ClassifierParams> {
        &self.classifiers
    }

    pub fn dim(&self) -> Option<usize> {
        self.classifiers.values().next().map(|c| c.dim())
    }

    /// Votes per class for `x`; a zero decision value votes for the positive class.
    pub fn votes(&self, x: &[f64]) -> Result<BTreeMap<ClassId, usize>> {
        let mut votes: BTreeMap<ClassId, usize> = self.classes.iter().map(|&c| (c, 0)).collect();
        for (pair, c) in &self.classifiers {
            let winner = if decision_value(c, x)? >= 0.0 { pair.pos() } else { pair.neg() };
            *votes.get_mut(&winner).expect("pair classes belong to the model") += 1;
        }
        Ok(votes)
    }
}

/// Majority vote over all pairs; ties go to the smallest class id.
pub fn classify_multiclass(model: &MulticlassModel, x: &[f64]) -> Result<ClassId> {
    if let Some(m) = model.dim() {
        if x.len() != m {
            return Err(SctError::Dimension {
                expected: m,
                found: x.len(),
            });
        }
    }
    let votes = model.votes(x)?;
    let mut best = None;
    for (&c, &v) in &votes {
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((c, v)),
        }
    }
    Ok(best.expect("model has at least one class").0)
}

/// Labels every row of `d`.
pub fn classify_dataset(model: &MulticlassModel, d: &LabeledDataset) -> Result<Vec<ClassId>> {
    (0..d.len()).map(|i| classify_multiclass(model, &d.row(i))).collect()
}

/// Trains a plain SVM per pair and date and collects the per-pair histories.
///
/// Pairs missing one of their classes at some date skip that date.
pub fn bootstrap_histories(datasets: &[LabeledDataset], cfg: &PipelineConfig) -> Result<BTreeMap<ClassPair, PairHistory>> {
    if datasets.len() < 2 {
        return Err(SctError::InsufficientPoints {
            needed: 2,
            got: datasets.len(),
        });
    }
    if datasets.windows(2).any(|w| w[1].date() <= w[0].date()) {
        return Err(SctError::Validation("dataset dates must be strictly increasing".into()));
    }
    let m = datasets[0].dim();
    if let Some(d) = datasets.iter().find(|d| d.dim() != m) {
        return Err(SctError::Dimension { expected: m, found: d.dim() });
    }
    let classes: BTreeSet<ClassId> = datasets.iter().flat_map(|d| d.classes()).collect();
    let svm = SvmConfig::new(cfg.bootstrap_c)?;
    let pairs = ClassPair::all(&classes);
    let histories = pairs
        .par_iter()
        .map(|&pair| {
            let mut h = PairHistory::new(pair, cfg.window)?;
            for d in datasets {
                let v = make_binary_view(d, pair.pos(), pair.neg())?;
                if !v.has_both_labels() {
                    continue;
                }
                let p = train_soft_margin(&v, &svm, &cfg.qp)?;
                h.push(TimedClassifier::new(p, d.date()))?;
            }
            Ok((pair, h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(histories.into_iter().collect())
}

/// Rows drawn for fine-tuning, in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub indices: Vec<usize>,
    /// Classes with fewer than `nt` labeled rows; all of their rows were taken.
    pub short_classes: Vec<ClassId>,
}

/// Uniform sampling without replacement of `nt` rows per class.
pub fn sample_training(d: &LabeledDataset, nt: usize, seed: u64) -> TrainingSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(d.date() as u64);
    let mut indices = Vec::new();
    let mut short_classes = Vec::new();
    for class in d.classes() {
        let rows = d.indices_of(class);
        if rows.len() <= nt {
            if rows.len() < nt {
                short_classes.push(class);
            }
            indices.extend(rows);
        } else {
            indices.extend(sample(&mut rng, rows.len(), nt).into_iter().map(|k| rows[k]));
        }
    }
    indices.sort_unstable();
    TrainingSample { indices, short_classes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStep {
    pub pos: ClassId,
    pub neg: ClassId,
    /// Trend order after clamping to the history length.
    pub order: usize,
    pub c: f64,
    pub f: f64,
    pub predicted: ClassifierParams,
    pub fine_tuned: ClassifierParams,
    pub bias_fallback: bool,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub date: i64,
    pub train_indices: Vec<usize>,
    pub short_classes: Vec<ClassId>,
    /// Pairs left unchanged because a class had no training rows.
    pub carried: Vec<ClassPair>,
    pub pairs: Vec<PairStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub model: MulticlassModel,
    pub histories: BTreeMap<ClassPair, PairHistory>,
    pub report: StepReport,
}

/// Predicts, fine-tunes and records one classifier per pair for `incoming`.
pub fn step(histories: &BTreeMap<ClassPair, PairHistory>, incoming: &LabeledDataset, cfg: &PipelineConfig) -> Result<StepOutput> {
    let sample = sample_training(incoming, cfg.nt, cfg.seed);
    step_with_sample(histories, incoming, &sample, cfg)
}

/// [`step`] with an explicit training sample.
pub fn step_with_sample(
    histories: &BTreeMap<ClassPair, PairHistory>,
    incoming: &LabeledDataset,
    sample: &TrainingSample,
    cfg: &PipelineConfig,
) -> Result<StepOutput> {
    cfg.validate()?;
    if histories.is_empty() {
        return Err(SctError::EmptyHistory);
    }
    let train = incoming.subset(&sample.indices)?;
    let present = train.classes();
    let outcomes = histories
        .par_iter()
        .map(|(&pair, h)| step_pair(pair, h, &train, &present, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut updated = BTreeMap::new();
    let mut classifiers = BTreeMap::new();
    let mut classes = BTreeSet::new();
    let mut carried = Vec::new();
    let mut pairs = Vec::new();
    for (pair, h, detail) in outcomes {
        classes.insert(pair.pos());
        classes.insert(pair.neg());
        classifiers.insert(pair, h.latest().expect("non-empty history").params.clone());
        match detail {
            Some(d) => pairs.push(d),
            None => carried.push(pair),
        }
        updated.insert(pair, h);
    }
    Ok(StepOutput {
        model: MulticlassModel::new(classes, classifiers)?,
        histories: updated,
        report: StepReport {
            date: incoming.date(),
            train_indices: sample.indices.clone(),
            short_classes: sample.short_classes.clone(),
            carried,
            pairs,
        },
    })
}

fn step_pair(
    pair: ClassPair,
    h: &PairHistory,
    train: &LabeledDataset,
    present: &BTreeSet<ClassId>,
    cfg: &PipelineConfig,
) -> Result<(ClassPair, PairHistory, Option<PairStep>)> {
    if h.len() < 2 {
        return Err(SctError::InsufficientPoints { needed: 2, got: h.len() });
    }
    if h.dim() != Some(train.dim()) {
        return Err(SctError::Dimension {
            expected: train.dim(),
            found: h.dim().unwrap_or(0),
        });
    }
    let mut history = if h.window() == cfg.window {
        h.clone()
    } else {
        PairHistory::from_entries(pair, cfg.window, h.entries().iter().cloned())?
    };
    if !present.contains(&pair.pos()) || !present.contains(&pair.neg()) {
        return Ok((pair, history, None));
    }
    let n = history.len();
    let order = match (&cfg.order, cfg.requested_order(pair)) {
        (_, Some(r)) => r.min(n - 1),
        (OrderPolicy::Auto { candidates }, None) => match select_order(&history, candidates, train.date()) {
            Ok(r) => r,
            Err(SctError::InsufficientPoints { .. }) => 1.min(n - 1),
            Err(e) => return Err(e),
        },
        _ => unreachable!("only the automatic policy leaves the order open"),
    };
    let (predicted, _) = predict_classifier(&history, order, train.date())?;
    let v = make_binary_view(train, pair.pos(), pair.neg())?;
    let (c, f) = match &cfg.weights {
        Weights::Fixed { c, f } => (*c, *f),
        Weights::Grid { grid } => {
            let g = grid_search(&predicted, &v, grid, &cfg.qp)?;
            (g.c, g.f)
        }
    };
    let ft_cfg = if f > 0.0 { FineTuneConfig::new(c, f)? } else { FineTuneConfig::diagnostic(c, f)? };
    let r = fine_tune(&predicted, &v, &ft_cfg, &cfg.qp)?;
    history.push(TimedClassifier::new(r.params.clone(), train.date()))?;
    let detail = PairStep {
        pos: pair.pos(),
        neg: pair.neg(),
        order,
        c,
        f,
        predicted,
        fine_tuned: r.params,
        bias_fallback: r.bias_fallback,
        duality_gap: r.duality_gap,
    };
    Ok((pair, history, Some(detail)))
}

/// Baseline: plain SVMs trained on the samples of the current image only.
///
/// Pairs with a class absent from `train` are left out; so are their classes
/// when they cannot be paired with anything.
pub fn dir_svm(train: &LabeledDataset, c: f64, qp: &QpConfig) -> Result<MulticlassModel> {
    let classes = train.classes();
    let svm = SvmConfig::new(c)?;
    let pairs = ClassPair::all(&classes);
    let trained = pairs
        .par_iter()
        .map(|&pair| {
            let v = make_binary_view(train, pair.pos(), pair.neg())?;
            Ok((pair, train_soft_margin(&v, &svm, qp)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    if classes.len() == 1 {
        return Err(SctError::InvalidArgument("baseline needs at least 2 classes".into()));
    }
    MulticlassModel::new(classes, trained)
}

/// Accuracy of both methods at one target date.
#[derive(Debug, Clone, PartialEq)]
pub struct DateOutcome {
    pub date: i64,
    pub sct: TrialReport,
    pub dir: TrialReport,
    pub report: StepReport,
}

/// Bootstraps histories from the first `bootstrap` datasets, then steps
/// through the rest. Both methods train on the same samples and are scored on
/// the remaining rows of each target image.
pub fn run_sequence(datasets: &[LabeledDataset], bootstrap: usize, cfg: &PipelineConfig) -> Result<Vec<DateOutcome>> {
    cfg.validate()?;
    if bootstrap < 2 || bootstrap >= datasets.len() {
        return Err(SctError::InvalidArgument(format!(
            "need at least 2 bootstrap dates and one target, got {bootstrap} of {}",
            datasets.len()
        )));
    }
    let mut histories = bootstrap_histories(&datasets[..bootstrap], cfg)?;
    let dir_c = match &cfg.weights {
        Weights::Fixed { c, .. } => *c,
        Weights::Grid { .. } => cfg.bootstrap_c,
    };
    let mut out = Vec::new();
    for d in &datasets[bootstrap..] {
        let sample = sample_training(d, cfg.nt, cfg.seed);
        let step = step_with_sample(&histories, d, &sample, cfg)?;
        let train = d.subset(&sample.indices)?;
        let dir = dir_svm(&train, dir_c, &cfg.qp)?;
        let test_rows: Vec<usize> = {
            let taken: BTreeSet<usize> = sample.indices.iter().copied().collect();
            (0..d.len()).filter(|i| !taken.contains(i)).collect()
        };
        let test = if test_rows.is_empty() { d.clone() } else { d.subset(&test_rows)? };
        let sct = confusion_and_accuracy(&classify_dataset(&step.model, &test)?, test.labels())?.with_seed(cfg.seed);
        let dir = confusion_and_accuracy(&classify_dataset(&dir, &test)?, test.labels())?.with_seed(cfg.seed);
        out.push(DateOutcome {
            date: d.date(),
            sct,
            dir,
            report: step.report,
        });
        histories = step.histories;
    }
    Ok(out)
}

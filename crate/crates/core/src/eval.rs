//! Accuracy metrics and diagnostics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SctError};
use crate::types::{ClassId, ClassifierParams, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    /// Classes indexing the confusion matrix, ascending.
    pub classes: Vec<ClassId>,
    /// `confusion[t][p]` counts samples of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<u64>>,
    /// Recall per true class; classes without test samples are omitted.
    pub per_class: BTreeMap<ClassId, f64>,
    pub overall: f64,
    pub seed: u64,
}

impl TrialReport {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub fn confusion_and_accuracy(pred: &[ClassId], truth: &[ClassId]) -> Result<TrialReport> {
    if pred.len() != truth.len() {
        return Err(SctError::Dimension {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(SctError::InvalidArgument("no samples to score".into()));
    }
    let mut classes: Vec<ClassId> = pred.iter().chain(truth).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let index = |c: ClassId| classes.binary_search(&c).expect("class collected above");
    let k = classes.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[index(t)][index(p)] += 1;
    }
    let mut per_class = BTreeMap::new();
    let mut hits = 0u64;
    for (i, row) in confusion.iter().enumerate() {
        let total: u64 = row.iter().sum();
        hits += row[i];
        if total > 0 {
            per_class.insert(classes[i], row[i] as f64 / total as f64);
        }
    }
    Ok(TrialReport {
        overall: hits as f64 / truth.len() as f64,
        classes,
        confusion,
        per_class,
        seed: 0,
    })
}

/// Euclidean distance between stacked parameter vectors.
pub fn param_distance(a: &ClassifierParams, b: &ClassifierParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(SctError::Dimension {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok((a.stacked() - b.stacked()).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    /// Set when the feature or the dates have zero variance; `value` is then 0.
    pub degenerate: bool,
}

/// Pearson correlation between one feature of one class and the sensing
/// date, pooling every sample of that class across datasets.
pub fn feature_date_correlation(datasets: &[LabeledDataset], class: ClassId, feature: usize) -> Result<Correlation> {
    let mut xs = Vec::new();
    let mut ds = Vec::new();
    for d in datasets {
        if feature >= d.dim() {
            return Err(SctError::Dimension {
                expected: feature + 1,
                found: d.dim(),
            });
        }
        for i in d.indices_of(class) {
            xs.push(d.features()[(i, feature)]);
            ds.push(d.date() as f64);
        }
    }
    if xs.is_empty() {
        return Err(SctError::ClassMissing(class));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let md = ds.iter().sum::<f64>() / n;
    let (mut sxx, mut sdd, mut sxd) = (0.0, 0.0, 0.0);
    for (x, d) in xs.iter().zip(&ds) {
        sxx += (x - mx) * (x - mx);
        sdd += (d - md) * (d - md);
        sxd += (x - mx) * (d - md);
    }
    let scale = 1e-14 * n;
    if sxx <= scale * mx.abs().max(1.0).powi(2) || sdd == 0.0 {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        value: (sxd / (sxx.sqrt() * sdd.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    if n == 0 {
        return MetricSummary { mean: f64::NAN, std: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MetricSummary { mean, std }
}

/// Runs `run(base_seed + i)` for `i < trials` in parallel and summarizes every
/// named metric. Metrics missing from some trials are summarized over the
/// trials that report them.
pub fn repeated_trials<F>(run: F, trials: usize, base_seed: u64) -> Result<BTreeMap<String, MetricSummary>>
where
    F: Fn(u64) -> Result<BTreeMap<String, f64>> + Sync,
{
    if trials == 0 {
        return Err(SctError::InvalidArgument("trials must be at least 1".into()));
    }
    let outputs: Vec<BTreeMap<String, f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| run(base_seed + i))
        .collect::<Result<_>>()?;
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for out in outputs {
        for (k, v) in out {
            pooled.entry(k).or_default().push(v);
        }
    }
    Ok(pooled.into_iter().map(|(k, v)| (k, summarize(&v))).collect())
}

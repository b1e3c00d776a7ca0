//! Domain types shared by every stage of the pipeline.
//!
//! A binary linear classifier is `f(x) = w·x + b`. Its parameters are handled
//! in stacked form `p = (w₁, …, w_m, b)` whenever they are treated as a point
//! in parameter space. Class pairs are always stored in canonical order: the
//! smaller class id is the positive (+1) class.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SctError};

/// Integer class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for ClassId {
    fn from(v: u32) -> Self {
        ClassId(v)
    }
}

/// Canonically ordered class pair; `pos < neg` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassPair {
    pos: ClassId,
    neg: ClassId,
}

impl ClassPair {
    /// Builds the canonical pair from two distinct ids, in any order.
    pub fn new(a: ClassId, b: ClassId) -> Result<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(Self { pos: a, neg: b }),
            std::cmp::Ordering::Greater => Ok(Self { pos: b, neg: a }),
            std::cmp::Ordering::Equal => Err(SctError::InvalidArgument(format!(
                "class pair needs two distinct classes, got {a} twice"
            ))),
        }
    }

    pub fn pos(&self) -> ClassId {
        self.pos
    }

    pub fn neg(&self) -> ClassId {
        self.neg
    }

    /// All canonical pairs over a set of classes, in lexicographic order.
    pub fn all(classes: &BTreeSet<ClassId>) -> Vec<ClassPair> {
        let ids: Vec<ClassId> = classes.iter().copied().collect();
        let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                out.push(ClassPair { pos: a, neg: b });
            }
        }
        out
    }
}

impl fmt::Display for ClassPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.pos, self.neg)
    }
}

/// Parameters `(w, b)` of a binary linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    w: Vec<f64>,
    b: f64,
}

impl ClassifierParams {
    pub fn new(w: Vec<f64>, b: f64) -> Result<Self> {
        if w.is_empty() {
            return Err(SctError::Validation("weight vector must be non-empty".into()));
        }
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(SctError::Validation("classifier parameters must be finite".into()));
        }
        Ok(Self { w, b })
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// The classifier with `(w, b)` negated.
    pub fn negated(&self) -> Self {
        Self {
            w: self.w.iter().map(|v| -v).collect(),
            b: -self.b,
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_vec(stack_params(self))
    }
}

/// Stacks `(w, b)` into `p = (w₁, …, w_m, b)`.
pub fn stack_params(c: &ClassifierParams) -> Vec<f64> {
    let mut p = Vec::with_capacity(c.w.len() + 1);
    p.extend_from_slice(&c.w);
    p.push(c.b);
    p
}

/// Inverse of [`stack_params`]: the last entry is the bias.
pub fn unstack_params(p: &[f64]) -> Result<ClassifierParams> {
    if p.len() < 2 {
        return Err(SctError::Dimension {
            expected: 2,
            found: p.len(),
        });
    }
    let (w, b) = p.split_at(p.len() - 1);
    ClassifierParams::new(w.to_vec(), b[0])
}

/// A classifier together with the sensing date it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedClassifier {
    pub params: ClassifierParams,
    /// Days relative to the dataset's reference date.
    pub date: i64,
    /// Accuracy measured on the classifier's own image, when known.
    pub accuracy: Option<f64>,
}

impl TimedClassifier {
    pub fn new(params: ClassifierParams, date: i64) -> Self {
        Self {
            params,
            date,
            accuracy: None,
        }
    }

    pub fn with_accuracy(mut self, accuracy: f64) -> Self {
        self.accuracy = Some(accuracy);
        self
    }
}

/// Sliding window of the most recent classifiers trained for one class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairHistory {
    pair: ClassPair,
    window: usize,
    entries: Vec<TimedClassifier>,
}

impl PairHistory {
    pub fn new(pair: ClassPair, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(SctError::InvalidArgument("history window must be positive".into()));
        }
        Ok(Self {
            pair,
            window,
            entries: Vec::new(),
        })
    }

    /// Builds a history from existing entries, keeping the newest `window`.
    pub fn from_entries(
        pair: ClassPair,
        window: usize,
        entries: impl IntoIterator<Item = TimedClassifier>,
    ) -> Result<Self> {
        let mut h = Self::new(pair, window)?;
        for e in entries {
            h.push(e)?;
        }
        Ok(h)
    }

    pub fn pair(&self) -> ClassPair {
        self.pair
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Entries ordered from oldest to newest.
    pub fn entries(&self) -> &[TimedClassifier] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Feature dimension of the stored classifiers, if any are stored.
    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.params.dim())
    }

    pub fn latest(&self) -> Option<&TimedClassifier> {
        self.entries.last()
    }

    /// Appends a classifier, evicting the oldest entry once the window is full.
    ///
    /// Dates must be strictly increasing and dimensions must agree. An entry
    /// equal to the exact negation of the newest stored classifier is
    /// rejected: it means the pair orientation flipped upstream.
    pub fn push(&mut self, entry: TimedClassifier) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.date <= last.date {
                return Err(SctError::Validation(format!(
                    "history {} dates must increase: {} after {}",
                    self.pair, entry.date, last.date
                )));
            }
            if entry.params.dim() != last.params.dim() {
                return Err(SctError::Dimension {
                    expected: last.params.dim(),
                    found: entry.params.dim(),
                });
            }
            if is_negation(&last.params, &entry.params) {
                return Err(SctError::Validation(format!(
                    "history {}: new classifier is the negation of the stored one (orientation flip)",
                    self.pair
                )));
            }
        }
        self.entries.push(entry);
        if self.entries.len() > self.window {
            let excess = self.entries.len() - self.window;
            self.entries.drain(..excess);
        }
        Ok(())
    }

    /// Stacked parameter vectors, oldest first.
    pub fn stacked(&self) -> Vec<DVector<f64>> {
        self.entries.iter().map(|e| e.params.stacked()).collect()
    }

    pub fn dates(&self) -> Vec<i64> {
        self.entries.iter().map(|e| e.date).collect()
    }
}

fn is_negation(a: &ClassifierParams, b: &ClassifierParams) -> bool {
    let pa = stack_params(a);
    let pb = stack_params(b);
    let scale = pa.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return false;
    }
    pa.iter()
        .zip(&pb)
        .all(|(x, y)| (x + y).abs() <= 1e-12 * scale)
}

/// Labeled samples from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: Vec<ClassId>,
    date: i64,
}

impl LabeledDataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<ClassId>, date: i64) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(SctError::Validation("dataset needs at least one row and one feature".into()));
        }
        if labels.len() != features.nrows() {
            return Err(SctError::Dimension {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SctError::Validation("feature values must be finite".into()));
        }
        Ok(Self {
            features,
            labels,
            date,
        })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<ClassId>, date: i64) -> Result<Self> {
        let m = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(SctError::Dimension {
                expected: m,
                found: bad.len(),
            });
        }
        let features = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(features, labels, date)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn date(&self) -> i64 {
        self.date
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn classes(&self) -> BTreeSet<ClassId> {
        self.labels.iter().copied().collect()
    }

    /// Row indices carrying the given label, in row order.
    pub fn indices_of(&self, class: ClassId) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset made of the given rows (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(rows.iter());
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.date)
    }
}

/// A two-class view of a dataset with labels mapped to ±1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryView {
    features: DMatrix<f64>,
    y: Vec<f64>,
    pair: ClassPair,
}

impl BinaryView {
    /// Builds a view directly from features and ±1 labels.
    pub fn new(features: DMatrix<f64>, y: Vec<f64>, pair: ClassPair) -> Result<Self> {
        if y.len() != features.nrows() {
            return Err(SctError::Dimension {
                expected: features.nrows(),
                found: y.len(),
            });
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(SctError::Validation("binary labels must be +1 or -1".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SctError::Validation("feature values must be finite".into()));
        }
        Ok(Self { features, y, pair })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn pair(&self) -> ClassPair {
        self.pair
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn count_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn count_negative(&self) -> usize {
        self.y.len() - self.count_positive()
    }

    /// True when both labels occur.
    pub fn has_both_labels(&self) -> bool {
        self.count_positive() > 0 && self.count_negative() > 0
    }
}

/// Restricts a dataset to the rows of one class pair, mapping `pos` to +1.
///
/// Row order is preserved. The ids are taken as given: `pos` maps to +1 even
/// when it is the larger id, so callers that need canonical orientation pass
/// `pair.pos(), pair.neg()`.
pub fn make_binary_view(d: &LabeledDataset, pos: ClassId, neg: ClassId) -> Result<BinaryView> {
    let pair = ClassPair::new(pos, neg)?;
    let rows: Vec<usize> = (0..d.len())
        .filter(|&i| d.labels[i] == pos || d.labels[i] == neg)
        .collect();
    let features = d.features.select_rows(rows.iter());
    let y = rows
        .iter()
        .map(|&i| if d.labels[i] == pos { 1.0 } else { -1.0 })
        .collect();
    Ok(BinaryView { features, y, pair })
}

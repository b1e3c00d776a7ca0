//! Classifier prediction from the temporal trend of previous classifiers.
//!
//! The stacked parameter vectors of a pair history are mean-centered and
//! rotated onto their principal axes. The first principal score of each
//! classifier is regressed on its sensing date with a polynomial, the fit is
//! evaluated at the target date, and the result is mapped back to parameter
//! space with every other principal score set to zero.
//!
//! Scores are computed as `q = Gᵀ p̄` and mapped back with `p̄ = G q`, where
//! the columns of `G` are the right singular vectors of the centered history
//! matrix sorted by decreasing singular value. Each column is signed so that
//! its largest-magnitude entry is positive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SctError};
use crate::types::{ClassifierParams, PairHistory};

/// Everything the predictor fitted for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    /// Mean of the stacked history vectors.
    pub mean: Vec<f64>,
    /// Principal axes, one entry per column of `G`, strongest first.
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// Polynomial coefficients `a₀…a_r` on the date axis shifted so that the
    /// target date is zero.
    pub coeffs: Vec<f64>,
    pub order: usize,
    /// History dates, oldest first.
    pub dates: Vec<i64>,
    pub target_date: i64,
    /// First principal score of each history entry, oldest first.
    pub scores: Vec<f64>,
    /// First principal score of the prediction.
    pub predicted_score: f64,
}

impl TrendModel {
    /// The orthogonal matrix `G` with the principal axes as columns.
    pub fn basis(&self) -> DMatrix<f64> {
        let k = self.mean.len();
        DMatrix::from_fn(k, k, |i, j| self.components[j][i])
    }
}

/// Subtracts the history mean from every stacked classifier.
pub fn center_history(h: &PairHistory) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    center(&h.stacked())
}

fn center(points: &[DVector<f64>]) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let first = points.first().ok_or(SctError::EmptyHistory)?;
    let mut mean = DVector::zeros(first.len());
    for p in points {
        mean += p;
    }
    mean /= points.len() as f64;
    let centered = points.iter().map(|p| p - &mean).collect();
    Ok((mean, centered))
}

/// Principal axes of a centered set of vectors as the columns of an
/// orthogonal matrix. A set with no variance yields the identity.
pub fn fit_pca(centered: &[DVector<f64>]) -> DMatrix<f64> {
    let Some(first) = centered.first() else {
        return DMatrix::identity(0, 0);
    };
    let k = first.len();
    let n = centered.len();
    let p = DMatrix::from_fn(n, k, |i, j| centered[i][j]);
    let (axes, _) = principal_axes(&p);
    complete_basis(axes, k)
}

/// Right singular vectors with non-negligible singular values, strongest first.
fn principal_axes(p: &DMatrix<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
    let (n, k) = p.shape();
    if n == 0 || k == 0 || p.amax() == 0.0 {
        return (Vec::new(), Vec::new());
    }
    let svd = p.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let sv = svd.singular_values;
    let smax = sv.max();
    let tol = 1e-12 * smax * (n.max(k) as f64);
    let mut order: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > tol).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let axes = order.iter().map(|&i| vt.row(i).transpose()).collect();
    let values = order.iter().map(|&i| sv[i]).collect();
    (axes, values)
}

/// Extends orthonormal `axes` to a full basis of ℝᵏ with Gram–Schmidt over
/// the standard basis, then applies the sign convention.
fn complete_basis(mut axes: Vec<DVector<f64>>, k: usize) -> DMatrix<f64> {
    for i in 0..k {
        if axes.len() == k {
            break;
        }
        let mut v = DVector::zeros(k);
        v[i] = 1.0;
        for _ in 0..2 {
            for a in &axes {
                let proj = a.dot(&v);
                v.axpy(-proj, a, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            axes.push(v / norm);
        }
    }
    let mut g = DMatrix::zeros(k, k);
    for (j, a) in axes.iter().enumerate() {
        let mut col = a.clone();
        let lead = col.iter().enumerate().fold((0, 0.0_f64), |best, (i, v)| {
            if v.abs() > best.1.abs() {
                (i, *v)
            } else {
                best
            }
        });
        if col[lead.0] < 0.0 {
            col.neg_mut();
        }
        g.set_column(j, &col);
    }
    g
}

/// Least-squares polynomial coefficients `a₀…a_r` of `score ≈ Σ aₖ dateᵏ`.
pub fn fit_trend(scores: &[f64], dates: &[i64], r: usize) -> Result<Vec<f64>> {
    if scores.len() != dates.len() {
        return Err(SctError::Dimension {
            expected: dates.len(),
            found: scores.len(),
        });
    }
    let n = dates.len();
    if n < r + 1 {
        return Err(SctError::InsufficientPoints { needed: r + 1, got: n });
    }
    let mut sorted = dates.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(SctError::InvalidArgument("dates must be distinct".into()));
    }
    // fit on dates scaled into [-1, 1] for conditioning, then rescale
    let scale = dates.iter().map(|d| d.unsigned_abs()).max().unwrap_or(0).max(1) as f64;
    let v = DMatrix::from_fn(n, r + 1, |i, k| (dates[i] as f64 / scale).powi(k as i32));
    let y = DVector::from_column_slice(scores);
    let svd = v.svd(true, true);
    let smax = svd.singular_values.max();
    let a = svd
        .solve(&y, 1e-13 * smax)
        .map_err(|e| SctError::InvalidArgument(e.to_string()))?;
    Ok((0..=r).map(|k| a[k] / scale.powi(k as i32)).collect())
}

/// Evaluates `Σ aₖ tᵏ` with Horner's rule.
pub fn eval_poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, a| acc * t + a)
}

/// Predicts the classifier for `target_date` from the history's trend.
pub fn predict_classifier(
    h: &PairHistory,
    r: usize,
    target_date: i64,
) -> Result<(ClassifierParams, TrendModel)> {
    let points = h.stacked();
    let (mean, centered) = center(&points)?;
    let k = mean.len();
    let n = centered.len();
    if n < r + 1 {
        return Err(SctError::InsufficientPoints { needed: r + 1, got: n });
    }
    let pmat = DMatrix::from_fn(n, k, |i, j| centered[i][j]);
    let (axes, singular_values) = principal_axes(&pmat);
    let g = complete_basis(axes, k);
    let lead = g.column(0).into_owned();
    let scores: Vec<f64> = centered.iter().map(|c| lead.dot(c)).collect();
    let dates = h.dates();
    let shifted: Vec<i64> = dates.iter().map(|d| d - target_date).collect();
    let coeffs = fit_trend(&scores, &shifted, r)?;
    let predicted_score = eval_poly(&coeffs, 0.0);
    let p = &mean + &lead * predicted_score;
    let params = ClassifierParams::new(p.rows(0, k - 1).iter().copied().collect(), p[k - 1])?;
    let model = TrendModel {
        mean: mean.iter().copied().collect(),
        components: (0..k).map(|j| g.column(j).iter().copied().collect()).collect(),
        singular_values,
        coeffs,
        order: r,
        dates,
        target_date,
        scores,
        predicted_score,
    };
    Ok((params, model))
}

/// Picks the candidate order with the smallest leave-one-out prediction
/// error of the first principal score. Ties go to the smaller order.
///
/// Candidates that leave fewer than one point beyond the fit (`N < r + 2`)
/// are skipped; an error is returned when none remain.
pub fn select_order(h: &PairHistory, candidates: &[usize], target_date: i64) -> Result<usize> {
    let n = h.len();
    let mut admissible: Vec<usize> = candidates.iter().copied().filter(|&r| n >= r + 2).collect();
    admissible.sort_unstable();
    admissible.dedup();
    if admissible.is_empty() {
        let needed = candidates.iter().copied().min().unwrap_or(0) + 2;
        return Err(SctError::InsufficientPoints { needed, got: n });
    }
    let (_, centered) = center_history(h)?;
    let g = fit_pca(&centered);
    let lead = g.column(0).into_owned();
    let scores: Vec<f64> = centered.iter().map(|c| lead.dot(c)).collect();
    let dates: Vec<i64> = h.dates().iter().map(|d| d - target_date).collect();
    let energy: f64 = scores.iter().map(|s| s * s).sum();
    let tie = 1e-10 * energy;

    let mut best: Option<(usize, f64)> = None;
    for &r in &admissible {
        let err = loo_error(&scores, &dates, r)?;
        match best {
            Some((_, e)) if err >= e - tie => {}
            _ => best = Some((r, err)),
        }
    }
    Ok(best.expect("at least one admissible order").0)
}

fn loo_error(scores: &[f64], dates: &[i64], r: usize) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..scores.len() {
        let s: Vec<f64> = scores.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| *v).collect();
        let d: Vec<i64> = dates.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| *v).collect();
        let a = fit_trend(&s, &d, r)?;
        let e = scores[i] - eval_poly(&a, dates[i] as f64);
        total += e * e;
    }
    Ok(total)
}

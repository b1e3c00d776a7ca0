//! Standard soft-margin linear SVM trained through its dual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SctError};
use crate::qp::{solve_qp, QpConfig, QpProblem};
use crate::types::{BinaryView, ClassifierParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Weight of the hinge-loss term.
    pub c: f64,
    /// Threshold separating free support vectors from bounded ones; `None`
    /// means `1e-6·C`.
    pub sv_tol: Option<f64>,
}

impl SvmConfig {
    pub fn new(c: f64) -> Result<Self> {
        let cfg = Self { c, sv_tol: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sv_tol(&self) -> f64 {
        self.sv_tol.unwrap_or(1e-6 * self.c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SctError::InvalidArgument(format!("C must be positive, got {}", self.c)));
        }
        let tol = self.sv_tol();
        if !(tol > 0.0 && tol < self.c / 2.0) {
            return Err(SctError::InvalidArgument(format!(
                "sv_tol must lie in (0, C/2), got {tol}"
            )));
        }
        Ok(())
    }
}

/// Everything the dual solve produces, for diagnostics and cross-checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution {
    pub params: ClassifierParams,
    pub alphas: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub free_support_vectors: usize,
    /// True when no free support vector existed and the bias came from the
    /// KKT interval instead.
    pub bias_fallback: bool,
    pub qp_iterations: usize,
    pub qp_kkt_residual: f64,
}

impl SvmSolution {
    pub fn duality_gap(&self) -> f64 {
        self.primal_objective - self.dual_objective
    }
}

/// Trains a soft-margin linear SVM and returns its parameters.
pub fn train_soft_margin(v: &BinaryView, cfg: &SvmConfig, qp: &QpConfig) -> Result<ClassifierParams> {
    train_soft_margin_detailed(v, cfg, qp).map(|s| s.params)
}

pub fn train_soft_margin_detailed(v: &BinaryView, cfg: &SvmConfig, qp: &QpConfig) -> Result<SvmSolution> {
    cfg.validate()?;
    if v.count_positive() == 0 {
        return Err(SctError::ClassMissing(v.pair().pos()));
    }
    if v.count_negative() == 0 {
        return Err(SctError::ClassMissing(v.pair().neg()));
    }
    let n = v.len();
    let x = v.features();
    let y = DVector::from_column_slice(v.y());

    // rows yᵢxᵢ
    let yx = DMatrix::from_fn(n, x.ncols(), |i, j| y[i] * x[(i, j)]);
    let q = &yx * yx.transpose();
    let problem = QpProblem::new(q, DVector::from_element(n, -1.0))
        .with_equalities(DMatrix::from_row_slice(1, n, v.y()), DVector::zeros(1))
        .with_bounds(DVector::zeros(n), DVector::from_element(n, cfg.c));
    let sol = solve_qp(&problem, qp)?;
    if !sol.is_optimal() {
        return Err(SctError::Solver {
            status: sol.status,
            iterations: sol.iterations,
        });
    }
    let alphas: Vec<f64> = sol.z.iter().map(|a| a.clamp(0.0, cfg.c)).collect();
    let w: Vec<f64> = (0..x.ncols())
        .map(|j| (0..n).map(|i| alphas[i] * yx[(i, j)]).sum())
        .collect();

    let tol = cfg.sv_tol();
    let margins: Vec<f64> = (0..n).map(|i| dot_row(x, i, &w)).collect();
    let free: Vec<usize> = (0..n)
        .filter(|&i| alphas[i] > tol && alphas[i] < cfg.c - tol)
        .collect();
    let (b, bias_fallback) = if free.is_empty() {
        (kkt_interval_bias(&alphas, v.y(), &margins, cfg.c, tol), true)
    } else {
        let sum: f64 = free.iter().map(|&i| v.y()[i] - margins[i]).sum();
        (sum / free.len() as f64, false)
    };

    let params = ClassifierParams::new(w, b)?;
    let primal_objective = primal_objective(&params, v, cfg.c);
    let wn2: f64 = params.w().iter().map(|a| a * a).sum();
    let dual_objective = alphas.iter().sum::<f64>() - 0.5 * wn2;
    Ok(SvmSolution {
        params,
        alphas,
        primal_objective,
        dual_objective,
        free_support_vectors: free.len(),
        bias_fallback,
        qp_iterations: sol.iterations,
        qp_kkt_residual: sol.kkt_residual,
    })
}

/// Midpoint of the bias interval allowed by the KKT conditions when every
/// multiplier sits at a bound.
fn kkt_interval_bias(alphas: &[f64], y: &[f64], margins: &[f64], c: f64, tol: f64) -> f64 {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..alphas.len() {
        let at_zero = alphas[i] <= tol;
        let at_c = alphas[i] >= c - tol;
        // α = 0 requires yᵢ f(xᵢ) ≥ 1, α = C requires yᵢ f(xᵢ) ≤ 1
        let edge = y[i] - margins[i];
        match (at_zero, at_c, y[i] > 0.0) {
            (true, _, true) | (_, true, false) => lo = lo.max(edge),
            (true, _, false) | (_, true, true) => hi = hi.min(edge),
            _ => {}
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

fn dot_row(x: &DMatrix<f64>, i: usize, w: &[f64]) -> f64 {
    w.iter().enumerate().map(|(j, wj)| wj * x[(i, j)]).sum()
}

/// `½‖w‖² + C Σ max(0, 1 − yᵢ f(xᵢ))`.
pub fn primal_objective(c: &ClassifierParams, v: &BinaryView, weight: f64) -> f64 {
    let x = v.features();
    let hinge: f64 = (0..v.len())
        .map(|i| (1.0 - v.y()[i] * (dot_row(x, i, c.w()) + c.b())).max(0.0))
        .sum();
    0.5 * c.w().iter().map(|a| a * a).sum::<f64>() + weight * hinge
}

/// `wᵀx + b`.
pub fn decision_value(c: &ClassifierParams, x: &[f64]) -> Result<f64> {
    if x.len() != c.dim() {
        return Err(SctError::Dimension {
            expected: c.dim(),
            found: x.len(),
        });
    }
    Ok(c.w().iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c.b())
}

/// Predicted label, `+1` or `-1`. A zero decision value maps to `+1`.
pub fn classify_binary(c: &ClassifierParams, x: &[f64]) -> Result<i8> {
    Ok(if decision_value(c, x)? >= 0.0 { 1 } else { -1 })
}

/// Fraction of rows of the view labeled correctly.
pub fn accuracy(c: &ClassifierParams, v: &BinaryView) -> Result<f64> {
    if v.dim() != c.dim() {
        return Err(SctError::Dimension {
            expected: c.dim(),
            found: v.dim(),
        });
    }
    if v.is_empty() {
        return Err(SctError::InvalidArgument("accuracy of an empty view".into()));
    }
    let x = v.features();
    let correct = (0..v.len())
        .filter(|&i| {
            let f = dot_row(x, i, c.w()) + c.b();
            let label = if f >= 0.0 { 1.0 } else { -1.0 };
            label == v.y()[i]
        })
        .count();
    Ok(correct as f64 / v.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ClassId, ClassPair};
    use proptest::prelude::*;

    fn view(rows: &[[f64; 2]], y: &[f64]) -> BinaryView {
        let x = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        BinaryView::new(x, y.to_vec(), ClassPair::new(ClassId(1), ClassId(2)).unwrap()).unwrap()
    }

    fn params(w: &[f64], b: f64) -> ClassifierParams {
        ClassifierParams::new(w.to_vec(), b).unwrap()
    }

    #[test]
    fn two_point_hard_margin() {
        let v = view(&[[1.0, 1.0], [-1.0, -1.0]], &[1.0, -1.0]);
        let s = train_soft_margin_detailed(&v, &SvmConfig::new(100.0).unwrap(), &QpConfig::default()).unwrap();
        assert!((s.params.w()[0] - 0.5).abs() < 1e-8);
        assert!((s.params.w()[1] - 0.5).abs() < 1e-8);
        assert!(s.params.b().abs() < 1e-8);
    }

    #[test]
    fn two_point_offset() {
        let v = view(&[[2.0, 0.0], [0.0, 0.0]], &[1.0, -1.0]);
        let c = train_soft_margin(&v, &SvmConfig::new(100.0).unwrap(), &QpConfig::default()).unwrap();
        assert!((c.w()[0] - 1.0).abs() < 1e-8);
        assert!(c.w()[1].abs() < 1e-8);
        assert!((c.b() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn symmetric_data_has_zero_bias() {
        let pos = [[1.0, 2.0], [2.0, 0.5], [0.3, 1.5], [1.5, 1.5]];
        let mut rows = pos.to_vec();
        rows.extend(pos.iter().map(|r| [-r[0], -r[1]]));
        let mut y = vec![1.0; 4];
        y.extend(vec![-1.0; 4]);
        let v = view(&rows, &y);
        let c = train_soft_margin(&v, &SvmConfig::new(1.0).unwrap(), &QpConfig::default()).unwrap();
        assert!(c.b().abs() < 1e-8, "b = {}", c.b());
    }

    #[test]
    fn single_label_is_class_missing() {
        let v = view(&[[1.0, 1.0], [2.0, 2.0]], &[1.0, 1.0]);
        let err = train_soft_margin(&v, &SvmConfig::new(1.0).unwrap(), &QpConfig::default());
        assert!(matches!(err, Err(SctError::ClassMissing(ClassId(2)))));
    }

    #[test]
    fn config_validation() {
        assert!(SvmConfig::new(0.0).is_err());
        assert!(SvmConfig::new(-1.0).is_err());
        let bad = SvmConfig { c: 1.0, sv_tol: Some(0.6) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn decision_examples() {
        let c = params(&[1.0, 2.0], -1.0);
        assert_eq!(decision_value(&c, &[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(decision_value(&c, &[0.0, 0.0]).unwrap(), -1.0);
        assert!(decision_value(&c, &[1.0]).is_err());
        assert_eq!(classify_binary(&c, &[1.0, 1.0]).unwrap(), 1);
        // decision value exactly zero goes to +1
        assert_eq!(classify_binary(&c, &[1.0, 0.0]).unwrap(), 1);
        assert_eq!(classify_binary(&c, &[0.0, 0.0]).unwrap(), -1);
    }

    proptest! {
        #[test]
        fn decision_is_antisymmetric(
            w in prop::collection::vec(-10.0f64..10.0, 3),
            b in -10.0f64..10.0,
            x in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let c = params(&w, b);
            let f = decision_value(&c, &x).unwrap();
            let g = decision_value(&c.negated(), &x).unwrap();
            prop_assert_eq!(f, -g);
        }

        #[test]
        fn classify_agrees_with_sign(
            w in prop::collection::vec(-10.0f64..10.0, 2),
            b in -10.0f64..10.0,
            x in prop::collection::vec(-10.0f64..10.0, 2),
        ) {
            let c = params(&w, b);
            let f = decision_value(&c, &x).unwrap();
            let label = classify_binary(&c, &x).unwrap();
            prop_assert_eq!(label, if f >= 0.0 { 1 } else { -1 });
        }
    }
}

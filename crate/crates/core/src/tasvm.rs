//! Fine-tuning a predicted classifier with a few labeled samples.
//!
//! The fine-tuned weights trade off three terms:
//!
//! ```text
//! minimize   ½‖w‖² + C Σᵢ ξᵢ + F Σⱼ μⱼ
//! subject to yᵢ(wᵀxᵢ + b) ≥ 1 − ξᵢ,  ξᵢ ≥ 0
//!            |wⱼ − wⱼ*| ≤ μⱼ,        μⱼ ≥ 0
//! ```
//!
//! where `w*` are the predicted weights. The bias is not tied to the
//! prediction. The default solve goes through the dual
//!
//! ```text
//! minimize   ½‖Σᵢ αᵢyᵢxᵢ − γ + δ‖² − Σᵢ αᵢ + w*ᵀ(γ − δ)
//! subject to 0 ≤ αᵢ ≤ C,  γⱼ, δⱼ ≥ 0,  γⱼ + δⱼ ≤ F,  Σᵢ αᵢyᵢ = 0
//! ```
//!
//! and recovers `w = Σᵢ αᵢyᵢxᵢ − γ + δ`, with `b` averaged over the free
//! support vectors. The primal can be solved directly as a cross-check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SctError};
use crate::qp::{solve_qp, solve_qp_from, QpConfig, QpProblem, QpSolution};
use crate::types::{BinaryView, ClassifierParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveForm {
    Primal,
    #[default]
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    /// Weight of the hinge loss on the current samples.
    pub c: f64,
    /// Weight of the deviation from the predicted weights.
    pub f: f64,
    /// Free support vector threshold; `None` means `1e-6·C`.
    pub sv_tol: Option<f64>,
    pub solve_form: SolveForm,
    /// Allows `C = 0` or `F = 0` for reduction checks.
    pub diagnostic: bool,
}

impl FineTuneConfig {
    pub fn new(c: f64, f: f64) -> Result<Self> {
        let cfg = Self {
            c,
            f,
            sv_tol: None,
            solve_form: SolveForm::Dual,
            diagnostic: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration that accepts zero weights.
    pub fn diagnostic(c: f64, f: f64) -> Result<Self> {
        let cfg = Self {
            c,
            f,
            sv_tol: None,
            solve_form: SolveForm::Dual,
            diagnostic: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_form(mut self, form: SolveForm) -> Self {
        self.solve_form = form;
        self
    }

    pub fn sv_tol(&self) -> f64 {
        self.sv_tol.unwrap_or(1e-6 * self.c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| {
            if self.diagnostic {
                v >= 0.0 && v.is_finite()
            } else {
                v > 0.0 && v.is_finite()
            }
        };
        if !ok(self.c) || !ok(self.f) {
            return Err(SctError::InvalidArgument(format!(
                "C and F must be positive (C = {}, F = {})",
                self.c, self.f
            )));
        }
        if self.c > 0.0 {
            let tol = self.sv_tol();
            if !(tol > 0.0 && tol < self.c / 2.0) {
                return Err(SctError::InvalidArgument(format!(
                    "sv_tol must lie in (0, C/2), got {tol}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneResult {
    pub params: ClassifierParams,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// Scaled KKT residual reported by the QP solver.
    pub kkt_residual: f64,
    pub free_support_vectors: usize,
    /// Set when no free support vector existed and the bias came from the
    /// hinge-loss line search.
    pub bias_fallback: bool,
    pub qp_iterations: usize,
}

/// Fine-tunes `predicted` on the samples of `v`.
pub fn fine_tune(
    predicted: &ClassifierParams,
    v: &BinaryView,
    cfg: &FineTuneConfig,
    qp: &QpConfig,
) -> Result<FineTuneResult> {
    cfg.validate()?;
    if predicted.dim() != v.dim() {
        return Err(SctError::Dimension {
            expected: v.dim(),
            found: predicted.dim(),
        });
    }
    if cfg.c > 0.0 {
        if v.count_positive() == 0 {
            return Err(SctError::ClassMissing(v.pair().pos()));
        }
        if v.count_negative() == 0 {
            return Err(SctError::ClassMissing(v.pair().neg()));
        }
    }
    match cfg.solve_form {
        SolveForm::Dual => solve_dual(predicted, v, cfg, qp),
        SolveForm::Primal => solve_primal(predicted, v, cfg, qp),
    }
}

fn check(sol: &QpSolution) -> Result<()> {
    if sol.is_optimal() {
        Ok(())
    } else {
        Err(SctError::Solver {
            status: sol.status,
            iterations: sol.iterations,
        })
    }
}

fn solve_dual(
    predicted: &ClassifierParams,
    v: &BinaryView,
    cfg: &FineTuneConfig,
    qp: &QpConfig,
) -> Result<FineTuneResult> {
    let n = v.len();
    let m = v.dim();
    let k = n + 2 * m;
    let x = v.features();
    let y = v.y();
    let w_star = predicted.w();

    // p_w = M z with M = [ (YX)ᵀ | −I | I ]
    let mut mmat = DMatrix::zeros(m, k);
    for i in 0..n {
        for j in 0..m {
            mmat[(j, i)] = y[i] * x[(i, j)];
        }
    }
    for j in 0..m {
        mmat[(j, n + j)] = -1.0;
        mmat[(j, n + m + j)] = 1.0;
    }
    let q = mmat.transpose() * &mmat;
    let mut c = DVector::zeros(k);
    for i in 0..n {
        c[i] = -1.0;
    }
    for j in 0..m {
        c[n + j] = w_star[j];
        c[n + m + j] = -w_star[j];
    }
    let mut a_eq = DMatrix::zeros(1, k);
    for i in 0..n {
        a_eq[(0, i)] = y[i];
    }
    let mut a_in = DMatrix::zeros(m, k);
    for j in 0..m {
        a_in[(j, n + j)] = 1.0;
        a_in[(j, n + m + j)] = 1.0;
    }
    let mut upper = DVector::from_element(k, cfg.f);
    for i in 0..n {
        upper[i] = cfg.c;
    }
    let problem = QpProblem::new(q, c)
        .with_equalities(a_eq, DVector::zeros(1))
        .with_inequalities(a_in, DVector::from_element(m, cfg.f))
        .with_bounds(DVector::zeros(k), upper);
    let sol = solve_qp(&problem, qp)?;
    check(&sol)?;

    let alphas: Vec<f64> = (0..n).map(|i| sol.z[i].clamp(0.0, cfg.c)).collect();
    let gammas: Vec<f64> = (0..m).map(|j| sol.z[n + j].clamp(0.0, cfg.f)).collect();
    let deltas: Vec<f64> = (0..m).map(|j| sol.z[n + m + j].clamp(0.0, cfg.f)).collect();
    let w = recover_weights(v, &alphas, &gammas, &deltas);

    let tol = cfg.sv_tol();
    let free: Vec<usize> = (0..n)
        .filter(|&i| cfg.c > 0.0 && alphas[i] > tol && alphas[i] < cfg.c - tol)
        .collect();
    let (b, bias_fallback) = if free.is_empty() {
        let b = if n == 0 { predicted.b() } else { hinge_optimal_bias(v, &w) };
        (b, true)
    } else {
        let sum: f64 = free.iter().map(|&i| y[i] - dot_row(x, i, &w)).sum();
        (sum / free.len() as f64, false)
    };
    finish(predicted, v, cfg, w, b, alphas, gammas, deltas, &sol, free.len(), bias_fallback)
}

fn solve_primal(
    predicted: &ClassifierParams,
    v: &BinaryView,
    cfg: &FineTuneConfig,
    qp: &QpConfig,
) -> Result<FineTuneResult> {
    let n = v.len();
    let m = v.dim();
    // variables: w (m), b, ξ (n), μ (m)
    let ib = m;
    let ixi = m + 1;
    let imu = m + 1 + n;
    let k = 2 * m + 1 + n;
    let x = v.features();
    let y = v.y();
    let w_star = predicted.w();

    let mut q = DMatrix::zeros(k, k);
    for j in 0..m {
        q[(j, j)] = 1.0;
    }
    let mut c = DVector::zeros(k);
    for i in 0..n {
        c[ixi + i] = cfg.c;
    }
    for j in 0..m {
        c[imu + j] = cfg.f;
    }
    let rows = n + 2 * m;
    let mut a_in = DMatrix::zeros(rows, k);
    let mut b_in = DVector::zeros(rows);
    for i in 0..n {
        // −yᵢ(wᵀxᵢ + b) − ξᵢ ≤ −1
        for j in 0..m {
            a_in[(i, j)] = -y[i] * x[(i, j)];
        }
        a_in[(i, ib)] = -y[i];
        a_in[(i, ixi + i)] = -1.0;
        b_in[i] = -1.0;
    }
    for j in 0..m {
        // wⱼ − μⱼ ≤ wⱼ*   and   −wⱼ − μⱼ ≤ −wⱼ*
        a_in[(n + j, j)] = 1.0;
        a_in[(n + j, imu + j)] = -1.0;
        b_in[n + j] = w_star[j];
        a_in[(n + m + j, j)] = -1.0;
        a_in[(n + m + j, imu + j)] = -1.0;
        b_in[n + m + j] = -w_star[j];
    }
    let mut lower = DVector::from_element(k, f64::NEG_INFINITY);
    for i in ixi..k {
        lower[i] = 0.0;
    }
    let problem = QpProblem::new(q, c)
        .with_inequalities(a_in, b_in)
        .with_bounds(lower, DVector::from_element(k, f64::INFINITY));

    // feasible start at the prediction
    let b0 = if n == 0 { predicted.b() } else { hinge_optimal_bias(v, w_star) };
    let mut start = DVector::zeros(k);
    for j in 0..m {
        start[j] = w_star[j];
    }
    start[ib] = b0;
    for i in 0..n {
        start[ixi + i] = (1.0 - y[i] * (dot_row(x, i, w_star) + b0)).max(0.0);
    }
    let sol = solve_qp_from(&problem, qp, &start)?;
    check(&sol)?;

    let w: Vec<f64> = (0..m).map(|j| sol.z[j]).collect();
    let b = sol.z[ib];
    let lam = &sol.in_multipliers;
    let alphas: Vec<f64> = (0..n).map(|i| lam[i].clamp(0.0, cfg.c)).collect();
    let gammas: Vec<f64> = (0..m).map(|j| lam[n + j].clamp(0.0, cfg.f)).collect();
    let deltas: Vec<f64> = (0..m).map(|j| lam[n + m + j].clamp(0.0, cfg.f)).collect();
    let tol = cfg.sv_tol();
    let free = (0..n)
        .filter(|&i| cfg.c > 0.0 && alphas[i] > tol && alphas[i] < cfg.c - tol)
        .count();
    finish(predicted, v, cfg, w, b, alphas, gammas, deltas, &sol, free, false)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    predicted: &ClassifierParams,
    v: &BinaryView,
    cfg: &FineTuneConfig,
    w: Vec<f64>,
    b: f64,
    alphas: Vec<f64>,
    gammas: Vec<f64>,
    deltas: Vec<f64>,
    sol: &QpSolution,
    free_support_vectors: usize,
    bias_fallback: bool,
) -> Result<FineTuneResult> {
    let params = ClassifierParams::new(w, b)?;
    let primal = objective(&params, predicted, v, cfg);
    let dual = dual_objective(&alphas, &gammas, &deltas, predicted, v);
    Ok(FineTuneResult {
        params,
        alphas,
        gammas,
        deltas,
        primal_objective: primal,
        dual_objective: dual,
        duality_gap: primal - dual,
        kkt_residual: sol.kkt_residual,
        free_support_vectors,
        bias_fallback,
        qp_iterations: sol.iterations,
    })
}

fn dot_row(x: &DMatrix<f64>, i: usize, w: &[f64]) -> f64 {
    w.iter().enumerate().map(|(j, wj)| wj * x[(i, j)]).sum()
}

/// `wⱼ = Σᵢ αᵢyᵢxᵢⱼ − γⱼ + δⱼ`.
pub fn recover_weights(v: &BinaryView, alphas: &[f64], gammas: &[f64], deltas: &[f64]) -> Vec<f64> {
    let x = v.features();
    (0..v.dim())
        .map(|j| {
            let s: f64 = (0..v.len()).map(|i| alphas[i] * v.y()[i] * x[(i, j)]).sum();
            s - gammas[j] + deltas[j]
        })
        .collect()
}

/// Bias minimizing `Σ max(0, 1 − yᵢ(wᵀxᵢ + b))` for fixed `w`.
///
/// The loss is convex and piecewise linear with breakpoints at
/// `b = yᵢ − wᵀxᵢ`; the midpoint of the minimizing breakpoints is returned.
pub fn hinge_optimal_bias(v: &BinaryView, w: &[f64]) -> f64 {
    let x = v.features();
    let y = v.y();
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    let margins: Vec<f64> = (0..n).map(|i| dot_row(x, i, w)).collect();
    let loss = |b: f64| -> f64 {
        (0..n)
            .map(|i| (1.0 - y[i] * (margins[i] + b)).max(0.0))
            .sum()
    };
    let mut bps: Vec<f64> = (0..n).map(|i| y[i] - margins[i]).collect();
    bps.sort_by(f64::total_cmp);
    let values: Vec<f64> = bps.iter().map(|&b| loss(b)).collect();
    let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * (1.0 + best.abs());
    let minimizers: Vec<f64> = bps
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v <= best + tie)
        .map(|(&b, _)| b)
        .collect();
    0.5 * (minimizers[0] + minimizers[minimizers.len() - 1])
}

/// Minimal slacks implied by `p`: `ξᵢ = max(0, 1 − yᵢ f(xᵢ))`, `μⱼ = |wⱼ − wⱼ*|`.
pub fn slacks(p: &ClassifierParams, predicted: &ClassifierParams, v: &BinaryView) -> (Vec<f64>, Vec<f64>) {
    let x = v.features();
    let xi = (0..v.len())
        .map(|i| (1.0 - v.y()[i] * (dot_row(x, i, p.w()) + p.b())).max(0.0))
        .collect();
    let mu = p
        .w()
        .iter()
        .zip(predicted.w())
        .map(|(a, b)| (a - b).abs())
        .collect();
    (xi, mu)
}

/// `½Σwⱼ² + CΣξᵢ + FΣμⱼ`.
pub fn primal_objective(p: &ClassifierParams, xi: &[f64], mu: &[f64], cfg: &FineTuneConfig) -> f64 {
    0.5 * p.w().iter().map(|a| a * a).sum::<f64>()
        + cfg.c * xi.iter().sum::<f64>()
        + cfg.f * mu.iter().sum::<f64>()
}

/// Primal objective at `p` with the minimal slacks.
pub fn objective(p: &ClassifierParams, predicted: &ClassifierParams, v: &BinaryView, cfg: &FineTuneConfig) -> f64 {
    let (xi, mu) = slacks(p, predicted, v);
    primal_objective(p, &xi, &mu, cfg)
}

/// Dual objective `Σαᵢ − ½‖w‖² + w*ᵀ(δ − γ)` with `w` recovered from the multipliers.
pub fn dual_objective(
    alphas: &[f64],
    gammas: &[f64],
    deltas: &[f64],
    predicted: &ClassifierParams,
    v: &BinaryView,
) -> f64 {
    let w = recover_weights(v, alphas, gammas, deltas);
    let prior: f64 = (0..w.len())
        .map(|j| predicted.w()[j] * (deltas[j] - gammas[j]))
        .sum();
    alphas.iter().sum::<f64>() - 0.5 * w.iter().map(|a| a * a).sum::<f64>() + prior
}

/// Largest violations of the optimality conditions of a fine-tuned result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Weight stationarity and `Σαᵢyᵢ = 0`.
    pub stationarity: f64,
    /// Multiplier bounds `0 ≤ α ≤ C`, `γ, δ ≥ 0`, `γ + δ ≤ F`.
    pub feasibility: f64,
    /// Complementary slackness of every constraint.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

pub fn kkt_report(
    result: &FineTuneResult,
    predicted: &ClassifierParams,
    v: &BinaryView,
    cfg: &FineTuneConfig,
) -> KktReport {
    let p = &result.params;
    let (a, g, d) = (&result.alphas, &result.gammas, &result.deltas);
    let x = v.features();
    let y = v.y();
    let m = v.dim();
    let n = v.len();

    let recovered = recover_weights(v, a, g, d);
    let mut stationarity: f64 = (0..m)
        .map(|j| (p.w()[j] - recovered[j]).abs())
        .fold(0.0, f64::max);
    let balance: f64 = (0..n).map(|i| a[i] * y[i]).sum();
    stationarity = stationarity.max(balance.abs());

    let mut feasibility: f64 = 0.0;
    for &ai in a.iter() {
        feasibility = feasibility.max(-ai).max(ai - cfg.c);
    }
    for j in 0..m {
        feasibility = feasibility.max(-g[j]).max(-d[j]).max(g[j] + d[j] - cfg.f);
    }

    let (xi, mu) = slacks(p, predicted, v);
    let mut comp: f64 = 0.0;
    for i in 0..n {
        let yf = y[i] * (dot_row(x, i, p.w()) + p.b());
        let beta = cfg.c - a[i];
        comp = comp.max((a[i] * (yf - 1.0 + xi[i])).abs());
        comp = comp.max((beta * xi[i]).abs());
    }
    for j in 0..m {
        let dev = p.w()[j] - predicted.w()[j];
        let eps = cfg.f - g[j] - d[j];
        comp = comp.max((g[j] * (mu[j] - dev)).abs());
        comp = comp.max((d[j] * (dev + mu[j])).abs());
        comp = comp.max((eps * mu[j]).abs());
    }
    KktReport {
        stationarity,
        feasibility: feasibility.max(0.0),
        complementarity: comp,
    }
}

/// Candidate weights for the cross-validated grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub f_values: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let v = vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];
        Self {
            c_values: v.clone(),
            f_values: v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub c: f64,
    pub f: f64,
    pub cv_accuracy: f64,
}

/// Chooses `(C, F)` by cross-validated accuracy of the fine-tuned classifier.
///
/// Five folds are used when the view has at least ten rows, leave-one-out
/// otherwise. Rows are dealt to folds in label order so both labels spread
/// across folds. Ties keep the earliest grid entry (F outer, C inner, both
/// in the given order).
pub fn grid_search(predicted: &ClassifierParams, v: &BinaryView, grid: &GridSpec, qp: &QpConfig) -> Result<GridChoice> {
    let n = v.len();
    if !v.has_both_labels() || n < 2 {
        return Err(SctError::InvalidArgument("grid search needs both labels".into()));
    }
    let folds = if n >= 10 { 5 } else { n };
    let mut order: Vec<usize> = (0..n).filter(|&i| v.y()[i] > 0.0).collect();
    order.extend((0..n).filter(|&i| v.y()[i] < 0.0));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let mut best: Option<GridChoice> = None;
    for &f in &grid.f_values {
        for &c in &grid.c_values {
            let cfg = FineTuneConfig::new(c, f)?;
            let mut correct = 0usize;
            let mut tested = 0usize;
            for fold in 0..folds {
                let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
                let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
                let tv = BinaryView::new(
                    v.features().select_rows(train.iter()),
                    train.iter().map(|&i| v.y()[i]).collect(),
                    v.pair(),
                )?;
                if !tv.has_both_labels() {
                    continue;
                }
                let r = fine_tune(predicted, &tv, &cfg, qp)?;
                for &i in &test {
                    let f = dot_row(v.features(), i, r.params.w()) + r.params.b();
                    let label = if f >= 0.0 { 1.0 } else { -1.0 };
                    correct += usize::from(label == v.y()[i]);
                    tested += 1;
                }
            }
            let acc = if tested == 0 { 0.0 } else { correct as f64 / tested as f64 };
            if best.map(|b| acc > b.cv_accuracy).unwrap_or(true) {
                best = Some(GridChoice { c, f, cv_accuracy: acc });
            }
        }
    }
    best.ok_or_else(|| SctError::InvalidArgument("empty grid".into()))
}

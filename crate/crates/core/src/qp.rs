//! Dense convex quadratic programming.
//!
//! Solves
//!
//! ```text
//! minimize    ½ zᵀQz + cᵀz
//! subject to  A_eq z  = b_eq
//!             A_in z ≤ b_in
//!             lower ≤ z ≤ upper
//! ```
//!
//! with a primal active-set method. Simple bounds are handled by fixing
//! variables rather than carrying them as general rows, so the linear algebra
//! per iteration only involves the free variables. Directions are computed in
//! the null space of the working constraints; directions of zero curvature are
//! followed with an exact line search, which lets the method handle the
//! singular Hessians of SVM-type duals without special casing. A feasible
//! start is found with an auxiliary linear phase when the supplied start is
//! infeasible.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SctError};

/// Diagonal shift added to a singular Hessian.
pub const REGULARIZATION: f64 = 1e-10;
/// Hessians whose smallest eigenvalue falls below this are regularized.
pub const MIN_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem; add constraints with the `with_*` builders.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let k = c.len();
        Self {
            q,
            c,
            a_eq: DMatrix::zeros(0, k),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, k),
            b_in: DVector::zeros(0),
            lower: DVector::from_element(k, f64::NEG_INFINITY),
            upper: DVector::from_element(k, f64::INFINITY),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    /// Number of variables.
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.q * z)) + self.c.dot(z)
    }

    /// Largest constraint violation at `z` (equalities, inequalities, bounds).
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        if self.a_eq.nrows() > 0 {
            let r = &self.a_eq * z - &self.b_eq;
            v = v.max(r.amax());
        }
        if self.a_in.nrows() > 0 {
            let r = &self.a_in * z - &self.b_in;
            v = v.max(r.max().max(0.0));
        }
        for i in 0..z.len() {
            v = v.max(self.lower[i] - z[i]).max(z[i] - self.upper[i]);
        }
        v
    }

    fn validate(&self) -> Result<()> {
        let k = self.dim();
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(SctError::Validation(format!("malformed QP: {what}")))
            }
        };
        check(self.q.nrows() == k && self.q.ncols() == k, "Q must be k×k")?;
        check(self.a_eq.ncols() == k && self.a_eq.nrows() == self.b_eq.len(), "equality shapes")?;
        check(self.a_in.ncols() == k && self.a_in.nrows() == self.b_in.len(), "inequality shapes")?;
        check(self.lower.len() == k && self.upper.len() == k, "bound lengths")?;
        check(
            self.q.iter().chain(self.c.iter()).all(|v| v.is_finite()),
            "Q and c must be finite",
        )?;
        check(
            self.a_eq.iter().chain(self.b_eq.iter()).chain(self.a_in.iter()).chain(self.b_in.iter()).all(|v| v.is_finite()),
            "constraint data must be finite",
        )?;
        check(
            (0..k).all(|i| !self.lower[i].is_nan() && !self.upper[i].is_nan() && self.lower[i] <= self.upper[i]),
            "lower ≤ upper must hold componentwise",
        )?;
        let scale = 1.0 + self.q.amax();
        for i in 0..k {
            for j in 0..i {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > 1e-10 * scale {
                    return Err(SctError::Validation("malformed QP: Q is not symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpConfig {
    pub feas_tol: f64,
    pub kkt_tol: f64,
    /// Iteration cap; `None` means `50·k` (at least 100).
    pub max_iter: Option<usize>,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            kkt_tol: 1e-8,
            max_iter: None,
        }
    }
}

impl QpConfig {
    fn iteration_cap(&self, k: usize) -> usize {
        self.max_iter.unwrap_or_else(|| (50 * k).max(100))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Objective of the original (unregularized) problem at `z`.
    pub objective: f64,
    pub status: QpStatus,
    /// Largest KKT violation relative to `1 + ‖c‖∞ + ‖Qz‖∞`.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Diagonal shift that was added to `Q`, zero when none was needed.
    pub regularization: f64,
    /// Lagrange multipliers of the equality rows.
    pub eq_multipliers: DVector<f64>,
    /// Lagrange multipliers of the inequality rows (zero for inactive rows).
    pub in_multipliers: DVector<f64>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Solves the problem starting from the origin projected onto the bounds.
pub fn solve_qp(p: &QpProblem, cfg: &QpConfig) -> Result<QpSolution> {
    let start = DVector::zeros(p.dim());
    solve_qp_from(p, cfg, &start)
}

/// Solves the problem from a caller-supplied start (projected onto the bounds).
pub fn solve_qp_from(p: &QpProblem, cfg: &QpConfig, start: &DVector<f64>) -> Result<QpSolution> {
    p.validate()?;
    if start.len() != p.dim() {
        return Err(SctError::Dimension {
            expected: p.dim(),
            found: start.len(),
        });
    }
    let k = p.dim();
    let cap = cfg.iteration_cap(k);
    let mut z0 = start.clone();
    for i in 0..k {
        z0[i] = z0[i].clamp(p.lower[i], p.upper[i]);
        if !z0[i].is_finite() {
            z0[i] = 0.0;
        }
    }

    let mut iterations = 0;
    if p.max_violation(&z0) > cfg.feas_tol {
        let (z, its, ok) = phase_one(p, cfg, &z0, cap);
        iterations += its;
        if !ok {
            let objective = p.objective(&z);
            return Ok(QpSolution {
                z,
                objective,
                status: QpStatus::Infeasible,
                kkt_residual: f64::INFINITY,
                iterations,
                regularization: 0.0,
                eq_multipliers: DVector::zeros(p.a_eq.nrows()),
                in_multipliers: DVector::zeros(p.a_in.nrows()),
            });
        }
        z0 = z;
    }

    let regularization = if needs_regularization(&p.q) {
        REGULARIZATION
    } else {
        0.0
    };
    let mut q = p.q.clone();
    for i in 0..k {
        q[(i, i)] += regularization;
    }

    let mut solver = ActiveSet::new(p, q, z0, cfg.feas_tol);
    let outcome = solver.run(cfg.kkt_tol, cap.saturating_sub(iterations).max(1));
    iterations += solver.iterations;
    let kkt_residual = solver.kkt_residual();
    let (eq_multipliers, in_multipliers) = solver.row_multipliers();
    let z = solver.z;
    let objective = p.objective(&z);
    let status = match outcome {
        Outcome::Converged => {
            if kkt_residual <= cfg.kkt_tol && p.max_violation(&z) <= cfg.feas_tol {
                QpStatus::Optimal
            } else {
                QpStatus::IterationLimit
            }
        }
        Outcome::Unbounded => QpStatus::Unbounded,
        Outcome::IterationLimit => QpStatus::IterationLimit,
    };
    Ok(QpSolution {
        z,
        objective,
        status,
        kkt_residual,
        iterations,
        regularization,
        eq_multipliers,
        in_multipliers,
    })
}

fn needs_regularization(q: &DMatrix<f64>) -> bool {
    let k = q.nrows();
    if k == 0 {
        return false;
    }
    let mut shifted = q.clone();
    for i in 0..k {
        shifted[(i, i)] -= MIN_EIGENVALUE;
    }
    Cholesky::new(shifted).is_none()
}

/// Minimizes total constraint violation from `z0` to find a feasible point.
fn phase_one(p: &QpProblem, cfg: &QpConfig, z0: &DVector<f64>, cap: usize) -> (DVector<f64>, usize, bool) {
    let k = p.dim();
    let e = p.a_eq.nrows();
    let qn = p.a_in.nrows();
    let kk = k + 2 * e + qn;

    // variables: z, s⁺ (e), s⁻ (e), t (q)
    let mut c = DVector::zeros(kk);
    for i in k..kk {
        c[i] = 1.0;
    }
    let mut a_eq = DMatrix::zeros(e, kk);
    for r in 0..e {
        for j in 0..k {
            a_eq[(r, j)] = p.a_eq[(r, j)];
        }
        a_eq[(r, k + r)] = 1.0;
        a_eq[(r, k + e + r)] = -1.0;
    }
    let mut a_in = DMatrix::zeros(qn, kk);
    for r in 0..qn {
        for j in 0..k {
            a_in[(r, j)] = p.a_in[(r, j)];
        }
        a_in[(r, k + 2 * e + r)] = -1.0;
    }
    let mut lower = DVector::zeros(kk);
    let mut upper = DVector::from_element(kk, f64::INFINITY);
    for j in 0..k {
        lower[j] = p.lower[j];
        upper[j] = p.upper[j];
    }
    let aux = QpProblem::new(DMatrix::zeros(kk, kk), c)
        .with_equalities(a_eq, p.b_eq.clone())
        .with_inequalities(a_in, p.b_in.clone())
        .with_bounds(lower, upper);

    let mut start = DVector::zeros(kk);
    start.rows_mut(0, k).copy_from(z0);
    if e > 0 {
        let r = &p.b_eq - &p.a_eq * z0;
        for i in 0..e {
            start[k + i] = r[i].max(0.0);
            start[k + e + i] = (-r[i]).max(0.0);
        }
    }
    if qn > 0 {
        let r = &p.a_in * z0 - &p.b_in;
        for i in 0..qn {
            start[k + 2 * e + i] = r[i].max(0.0);
        }
    }

    let mut solver = ActiveSet::new(&aux, aux.q.clone(), start, cfg.feas_tol);
    let outcome = solver.run(cfg.kkt_tol, cap);
    let z = solver.z.rows(0, k).into_owned();
    let feasible = !matches!(outcome, Outcome::Unbounded) && p.max_violation(&z) <= cfg.feas_tol;
    (z, solver.iterations, feasible)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Converged,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Blocker {
    Bound(usize, Side),
    Row(usize),
}

struct ActiveSet<'a> {
    p: &'a QpProblem,
    q: DMatrix<f64>,
    z: DVector<f64>,
    g: DVector<f64>,
    fixed: Vec<Option<Side>>,
    /// Inequality rows currently treated as equalities, kept sorted.
    work: Vec<usize>,
    iterations: usize,
}

struct Multipliers {
    /// Equality rows followed by working inequality rows.
    rows: DVector<f64>,
    /// `g + A_Wᵀλ` over all variables; on fixed variables this is the bound multiplier.
    reduced: DVector<f64>,
}

impl<'a> ActiveSet<'a> {
    fn new(p: &'a QpProblem, q: DMatrix<f64>, z: DVector<f64>, feas_tol: f64) -> Self {
        let k = p.dim();
        let mut z = z;
        let mut fixed = vec![None; k];
        for i in 0..k {
            if (z[i] - p.lower[i]).abs() <= feas_tol {
                z[i] = p.lower[i];
                fixed[i] = Some(Side::Lower);
            } else if (z[i] - p.upper[i]).abs() <= feas_tol {
                z[i] = p.upper[i];
                fixed[i] = Some(Side::Upper);
            }
        }
        let mut work = Vec::new();
        if p.a_in.nrows() > 0 {
            let r = &p.a_in * &z - &p.b_in;
            for j in 0..r.len() {
                if r[j].abs() <= feas_tol {
                    work.push(j);
                }
            }
        }
        let g = &q * &z + &p.c;
        Self {
            p,
            q,
            z,
            g,
            fixed,
            work,
            iterations: 0,
        }
    }

    fn free(&self) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| self.fixed[i].is_none()).collect()
    }

    /// Working constraint rows (equalities first) restricted to `cols`.
    fn working_rows(&self, cols: &[usize]) -> DMatrix<f64> {
        let e = self.p.a_eq.nrows();
        let w = e + self.work.len();
        DMatrix::from_fn(w, cols.len(), |r, c| {
            if r < e {
                self.p.a_eq[(r, cols[c])]
            } else {
                self.p.a_in[(self.work[r - e], cols[c])]
            }
        })
    }

    fn scale(&self) -> f64 {
        let qz = &self.g - &self.p.c;
        1.0 + self.p.c.amax() + qz.amax()
    }

    fn refresh_gradient(&mut self) {
        self.g = &self.q * &self.z + &self.p.c;
    }

    fn run(&mut self, kkt_tol: f64, cap: usize) -> Outcome {
        let mut at_minimum = false;
        while self.iterations < cap {
            self.iterations += 1;
            if self.iterations % 25 == 0 {
                self.refresh_gradient();
            }
            let free = self.free();
            if !at_minimum {
                if let Some((d, flat)) = self.direction(&free) {
                    match self.step(&free, &d, flat) {
                        StepResult::Unbounded => return Outcome::Unbounded,
                        StepResult::Blocked => at_minimum = false,
                        StepResult::Full => at_minimum = !flat,
                        StepResult::LineMin => at_minimum = false,
                    }
                    continue;
                }
            }
            // Stationary on the current working set: release the constraint
            // with the most negative multiplier, if any.
            let mult = self.multipliers(&free);
            let tol = kkt_tol * self.scale();
            match self.most_negative(&mult, tol) {
                None => {
                    self.refresh_gradient();
                    return Outcome::Converged;
                }
                Some(Blocker::Bound(i, _)) => {
                    self.fixed[i] = None;
                    at_minimum = false;
                }
                Some(Blocker::Row(j)) => {
                    self.work.retain(|&r| r != j);
                    at_minimum = false;
                }
            }
        }
        self.refresh_gradient();
        Outcome::IterationLimit
    }

    /// Search direction on the free variables, or `None` when the current
    /// point minimizes over the working set. The flag marks a zero-curvature
    /// direction.
    fn direction(&self, free: &[usize]) -> Option<(DVector<f64>, bool)> {
        if free.is_empty() {
            return None;
        }
        let f = free.len();
        let gf = DVector::from_fn(f, |i, _| self.g[free[i]]);
        let a = self.working_rows(free);
        let z_basis = null_space(&a, f)?;
        let qf = DMatrix::from_fn(f, f, |i, j| self.q[(free[i], free[j])]);
        let h = z_basis.transpose() * &qf * &z_basis;
        let h = (&h + h.transpose()) * 0.5;
        let gr = z_basis.transpose() * &gf;
        let eig = SymmetricEigen::new(h);
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let kappa = (1e-10 * lmax).max(10.0 * REGULARIZATION).max(1e-14);
        let t = eig.eigenvectors.transpose() * &gr;
        let gtol = 1e-12 * (1.0 + gf.amax());

        let nz = t.len();
        let mut flat = DVector::zeros(nz);
        let mut has_flat = false;
        for i in 0..nz {
            if eig.eigenvalues[i] <= kappa && t[i].abs() > gtol {
                flat[i] = -t[i];
                has_flat = true;
            }
        }
        let (u, is_flat) = if has_flat {
            (flat, true)
        } else {
            let mut u = DVector::zeros(nz);
            for i in 0..nz {
                if eig.eigenvalues[i] > kappa {
                    u[i] = -t[i] / eig.eigenvalues[i];
                }
            }
            (u, false)
        };
        let d = &z_basis * (&eig.eigenvectors * u);
        let zmax = free.iter().map(|&i| self.z[i].abs()).fold(0.0, f64::max);
        if d.amax() <= 1e-14 * (1.0 + zmax) {
            return None;
        }
        // Descent check: rounding can produce an ascent direction when the
        // gradient is already negligible.
        if gf.dot(&d) >= 0.0 {
            return None;
        }
        Some((d, is_flat))
    }

    fn step(&mut self, free: &[usize], d: &DVector<f64>, flat: bool) -> StepResult {
        let f = free.len();
        // curvature along d
        // Curvature of the unregularized objective: a flat direction of the
        // original problem must end on a constraint or the problem is unbounded.
        let qf = DMatrix::from_fn(f, f, |i, j| self.p.q[(free[i], free[j])]);
        let qd = &qf * d;
        let curv = d.dot(&qd);
        let slope = DVector::from_fn(f, |i, _| self.g[free[i]]).dot(d);
        let line_min = if curv > 0.0 { -slope / curv } else { f64::INFINITY };
        let nominal = if flat { line_min } else { 1.0 };

        let mut best = nominal;
        let mut blocker: Option<Blocker> = None;
        let consider = |s: f64, b: Blocker, best: &mut f64, blocker: &mut Option<Blocker>| {
            let s = s.max(0.0);
            if s < *best * (1.0 - 1e-12) || (blocker.is_none() && s <= *best) {
                *best = s;
                *blocker = Some(b);
            }
        };
        for (idx, &i) in free.iter().enumerate() {
            let di = d[idx];
            if di < 0.0 && self.p.lower[i].is_finite() {
                consider((self.p.lower[i] - self.z[i]) / di, Blocker::Bound(i, Side::Lower), &mut best, &mut blocker);
            } else if di > 0.0 && self.p.upper[i].is_finite() {
                consider((self.p.upper[i] - self.z[i]) / di, Blocker::Bound(i, Side::Upper), &mut best, &mut blocker);
            }
        }
        let qn = self.p.a_in.nrows();
        if qn > 0 {
            let dnorm = d.norm();
            for j in 0..qn {
                if self.work.binary_search(&j).is_ok() {
                    continue;
                }
                let mut ad = 0.0;
                let mut az = 0.0;
                let mut anorm = 0.0;
                for (idx, &i) in free.iter().enumerate() {
                    let a = self.p.a_in[(j, i)];
                    ad += a * d[idx];
                    anorm += a * a;
                }
                if ad <= 1e-14 * anorm.sqrt() * dnorm {
                    continue;
                }
                for i in 0..self.z.len() {
                    az += self.p.a_in[(j, i)] * self.z[i];
                }
                consider((self.p.b_in[j] - az) / ad, Blocker::Row(j), &mut best, &mut blocker);
            }
        }
        if !best.is_finite() {
            return StepResult::Unbounded;
        }

        for (idx, &i) in free.iter().enumerate() {
            self.z[i] += best * d[idx];
        }
        // incremental gradient update: g += s·Q[:, free]·d
        for (idx, &i) in free.iter().enumerate() {
            let coef = best * d[idx];
            if coef != 0.0 {
                let col = self.q.column(i);
                self.g.axpy(coef, &col, 1.0);
            }
        }
        match blocker {
            Some(Blocker::Bound(i, side)) => {
                let target = match side {
                    Side::Lower => self.p.lower[i],
                    Side::Upper => self.p.upper[i],
                };
                let snap = target - self.z[i];
                self.z[i] = target;
                if snap != 0.0 {
                    let col = self.q.column(i);
                    self.g.axpy(snap, &col, 1.0);
                }
                self.fixed[i] = Some(side);
                StepResult::Blocked
            }
            Some(Blocker::Row(j)) => {
                let pos = self.work.binary_search(&j).unwrap_or_else(|e| e);
                self.work.insert(pos, j);
                StepResult::Blocked
            }
            None if flat => StepResult::LineMin,
            None => StepResult::Full,
        }
    }

    fn multipliers(&self, free: &[usize]) -> Multipliers {
        let k = self.z.len();
        let all: Vec<usize> = (0..k).collect();
        let a_full = self.working_rows(&all);
        let w = a_full.nrows();
        let rows = if w == 0 || free.is_empty() {
            DVector::zeros(w)
        } else {
            let a_free = self.working_rows(free);
            let gf = DVector::from_fn(free.len(), |i, _| -self.g[free[i]]);
            let at = a_free.transpose();
            let svd = at.svd(true, true);
            let smax = svd.singular_values.max();
            let eps = (1e-12 * smax).max(1e-300);
            svd.solve(&gf, eps).unwrap_or_else(|_| DVector::zeros(w))
        };
        let reduced = if w == 0 {
            self.g.clone()
        } else {
            &self.g + a_full.transpose() * &rows
        };
        Multipliers { rows, reduced }
    }

    fn most_negative(&self, m: &Multipliers, tol: f64) -> Option<Blocker> {
        let e = self.p.a_eq.nrows();
        let mut worst = -tol;
        let mut pick = None;
        // Bounds are indexed before inequality rows; the first strictly most
        // negative entry wins, so ties go to the lowest index.
        for i in 0..self.z.len() {
            let eta = match self.fixed[i] {
                Some(_) if self.p.lower[i] == self.p.upper[i] => continue,
                Some(Side::Lower) => m.reduced[i],
                Some(Side::Upper) => -m.reduced[i],
                None => continue,
            };
            if eta < worst {
                worst = eta;
                pick = Some(Blocker::Bound(i, self.fixed[i].unwrap()));
            }
        }
        for (slot, &j) in self.work.iter().enumerate() {
            let lam = m.rows[e + slot];
            if lam < worst {
                worst = lam;
                pick = Some(Blocker::Row(j));
            }
        }
        pick
    }

    fn row_multipliers(&self) -> (DVector<f64>, DVector<f64>) {
        let m = self.multipliers(&self.free());
        let e = self.p.a_eq.nrows();
        let eq = m.rows.rows(0, e).into_owned();
        let mut inq = DVector::zeros(self.p.a_in.nrows());
        for (slot, &j) in self.work.iter().enumerate() {
            inq[j] = m.rows[e + slot];
        }
        (eq, inq)
    }

    fn kkt_residual(&self) -> f64 {
        let free = self.free();
        let m = self.multipliers(&free);
        let e = self.p.a_eq.nrows();
        let mut r: f64 = 0.0;
        for &i in &free {
            r = r.max(m.reduced[i].abs());
        }
        for i in 0..self.z.len() {
            match self.fixed[i] {
                Some(_) if self.p.lower[i] == self.p.upper[i] => {}
                Some(Side::Lower) => r = r.max(-m.reduced[i]),
                Some(Side::Upper) => r = r.max(m.reduced[i]),
                None => {}
            }
        }
        for slot in 0..self.work.len() {
            r = r.max(-m.rows[e + slot]);
        }
        r.max(0.0) / self.scale()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StepResult {
    Full,
    LineMin,
    Blocked,
    Unbounded,
}

/// Orthonormal basis of `{d : A d = 0}` in ℝ^f, or `None` if it is trivial.
fn null_space(a: &DMatrix<f64>, f: usize) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::identity(f, f));
    }
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let mut proj = DMatrix::identity(f, f);
    if smax > 0.0 {
        let tol = 1e-10 * smax * (a.nrows().max(f) as f64);
        for (r, &s) in svd.singular_values.iter().enumerate() {
            if s > tol {
                let v = vt.row(r).transpose();
                proj -= &v * v.transpose();
            }
        }
    }
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<usize> = (0..f).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if cols.is_empty() {
        return None;
    }
    Some(eig.eigenvectors.select_columns(cols.iter()))
}

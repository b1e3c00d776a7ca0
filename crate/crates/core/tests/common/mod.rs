//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random PSD matrix `BᵀB` with `rank` rows in `B`.
pub fn random_psd(rng: &mut ChaCha8Rng, k: usize, rank: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(rank, k, |_, _| rng.random_range(-1.0..1.0));
    b.transpose() * b
}

/// Projects `v` onto `{lo ≤ z ≤ hi, aᵀz = b}`.
///
/// With an equality row the projection is `clamp(v − t·a)` for the `t` that
/// satisfies the row; `aᵀz(t)` is piecewise linear and non-increasing in `t`,
/// so the root is found exactly between sorted breakpoints.
pub fn project_box_hyperplane(
    v: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    eq: Option<(&DVector<f64>, f64)>,
) -> DVector<f64> {
    let k = v.len();
    let Some((a, b)) = eq else {
        return DVector::from_fn(k, |i, _| v[i].clamp(lo[i], hi[i]));
    };
    let at = |t: f64| DVector::from_fn(k, |i, _| (v[i] - t * a[i]).clamp(lo[i], hi[i]));
    let h = |t: f64| a.dot(&at(t)) - b;
    let mut bps: Vec<f64> = Vec::with_capacity(2 * k);
    for i in 0..k {
        if a[i] != 0.0 {
            bps.push((v[i] - lo[i]) / a[i]);
            bps.push((v[i] - hi[i]) / a[i]);
        }
    }
    bps.sort_by(f64::total_cmp);
    let mut lo_t = bps[0] - 1.0;
    let mut hi_t = bps[bps.len() - 1] + 1.0;
    for &t in &bps {
        if h(t) > 0.0 {
            lo_t = t;
        } else {
            hi_t = t;
            break;
        }
    }
    // h is linear between adjacent breakpoints
    let (hl, hh) = (h(lo_t), h(hi_t));
    let t = if hl == hh { lo_t } else { lo_t + hl * (hi_t - lo_t) / (hl - hh) };
    at(t)
}

/// Accelerated projected gradient with adaptive restart, run until the
/// gradient-mapping residual at the iterate drops below `tol`.
pub fn projected_gradient(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    eq: Option<(&DVector<f64>, f64)>,
    tol: f64,
) -> DVector<f64> {
    let lmax = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lmax;
    let mut z = project_box_hyperplane(&DVector::zeros(c.len()), lo, hi, eq);
    let mut fz = objective(q, c, &z);
    let mut y = z.clone();
    let mut t = 1.0_f64;
    for it in 0..1_000_000 {
        if it % 10 == 0 {
            let gz = q * &z + c;
            let mapped = project_box_hyperplane(&(&z - gz * step), lo, hi, eq);
            if (&z - mapped).amax() * lmax < tol {
                break;
            }
        }
        let g = q * &y + c;
        let z_next = project_box_hyperplane(&(&y - g * step), lo, hi, eq);
        let f_next = objective(q, c, &z_next);
        if f_next > fz + 1e-15 * fz.abs() {
            y = z.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &z_next + (&z_next - &z) * ((t - 1.0) / t_next);
        t = t_next;
        z = z_next;
        fz = f_next;
    }
    z
}

pub fn objective(q: &DMatrix<f64>, c: &DVector<f64>, z: &DVector<f64>) -> f64 {
    0.5 * z.dot(&(q * z)) + c.dot(z)
}

/// A random box-constrained problem, optionally with one equality row.
pub struct RandomQp {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    pub eq: Option<(DVector<f64>, f64)>,
}

/// `ridge` is added to the diagonal; zero keeps the Hessian possibly singular.
pub fn random_box_qp(rng: &mut ChaCha8Rng, k: usize, with_eq: bool, ridge: f64) -> RandomQp {
    let rank = rng.random_range(1..=k);
    let mut q = random_psd(rng, k, rank);
    for i in 0..k {
        q[(i, i)] += ridge;
    }
    let c = DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0));
    let lo = DVector::from_fn(k, |_, _| rng.random_range(-2.0..0.0));
    let hi = DVector::from_fn(k, |i, _| lo[i] + rng.random_range(0.5..3.0));
    let eq = if with_eq {
        let a = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        // pick b from a point inside the box so the problem is feasible
        let inside = DVector::from_fn(k, |i, _| 0.5 * (lo[i] + hi[i]));
        let b = a.dot(&inside);
        Some((a, b))
    } else {
        None
    };
    RandomQp { q, c, lo, hi, eq }
}

/// Exact minimum of a box-constrained QP with at most one equality row, by
/// enumerating which variables sit at a bound. For each face the stationarity
/// system is solved in the least-squares sense and kept when it is consistent
/// and feasible. Exponential in `k`; only for tiny problems.
pub fn enumerate_faces(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    eq: Option<(&DVector<f64>, f64)>,
) -> f64 {
    let k = c.len();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(k as u32) {
        let mut state = vec![0u8; k];
        let mut r = code;
        for s in state.iter_mut() {
            *s = (r % 3) as u8;
            r /= 3;
        }
        let free: Vec<usize> = (0..k).filter(|&i| state[i] == 2).collect();
        let bound: Vec<usize> = (0..k).filter(|&i| state[i] != 2).collect();
        let mut z = DVector::from_fn(k, |i, _| match state[i] {
            0 => lo[i],
            1 => hi[i],
            _ => 0.0,
        });
        let f = free.len();
        let e = usize::from(eq.is_some());
        // [Q_FF a_F; a_Fᵀ 0] [z_F; ν] = [−c_F − Q_FB z_B; b − a_Bᵀ z_B]
        let mut m = DMatrix::zeros(f + e, f + e);
        let mut rhs = DVector::zeros(f + e);
        for (ii, &i) in free.iter().enumerate() {
            for (jj, &j) in free.iter().enumerate() {
                m[(ii, jj)] = q[(i, j)];
            }
            rhs[ii] = -c[i] - bound.iter().map(|&j| q[(i, j)] * z[j]).sum::<f64>();
        }
        if let Some((a, b)) = eq {
            for (ii, &i) in free.iter().enumerate() {
                m[(ii, f)] = a[i];
                m[(f, ii)] = a[i];
            }
            rhs[f] = b - bound.iter().map(|&j| a[j] * z[j]).sum::<f64>();
        }
        if f + e > 0 {
            let svd = m.clone().svd(true, true);
            let smax = svd.singular_values.max().max(1e-300);
            let Ok(sol) = svd.solve(&rhs, 1e-10 * smax) else {
                continue;
            };
            if (&m * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
                continue;
            }
            for (ii, &i) in free.iter().enumerate() {
                z[i] = sol[ii];
            }
        }
        let feasible = (0..k).all(|i| z[i] >= lo[i] - 1e-9 && z[i] <= hi[i] + 1e-9)
            && eq.map(|(a, b)| (a.dot(&z) - b).abs() <= 1e-9).unwrap_or(true);
        if feasible {
            best = best.min(objective(q, c, &z));
        }
    }
    best
}

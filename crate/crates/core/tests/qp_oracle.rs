mod common;

use common::{enumerate_faces, objective, project_box_hyperplane, projected_gradient, random_box_qp, rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sctsvm_core::qp::{solve_qp, QpConfig, QpProblem, QpStatus};

fn to_problem(r: &common::RandomQp) -> QpProblem {
    let mut p = QpProblem::new(r.q.clone(), r.c.clone()).with_bounds(r.lo.clone(), r.hi.clone());
    if let Some((a, b)) = &r.eq {
        p = p.with_equalities(DMatrix::from_row_slice(1, a.len(), a.as_slice()), DVector::from_element(1, *b));
    }
    p
}

#[test]
fn matches_projected_gradient_on_random_box_problems() {
    let mut g = rng(2024);
    for case in 0..30 {
        let r = random_box_qp(&mut g, 4, false, 0.05);
        let sol = solve_qp(&to_problem(&r), &QpConfig::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        let oracle = projected_gradient(&r.q, &r.c, &r.lo, &r.hi, None, 1e-8);
        let f_oracle = objective(&r.q, &r.c, &oracle);
        assert!(
            (sol.objective - f_oracle).abs() <= 1e-5,
            "case {case}: solver {} oracle {}",
            sol.objective,
            f_oracle
        );
    }
}

#[test]
fn matches_projected_gradient_with_equality() {
    let mut g = rng(77);
    for case in 0..20 {
        let k = g.random_range(2..=6);
        let r = random_box_qp(&mut g, k, true, 0.05);
        let sol = solve_qp(&to_problem(&r), &QpConfig::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        let (a, b) = r.eq.as_ref().unwrap();
        let oracle = projected_gradient(&r.q, &r.c, &r.lo, &r.hi, Some((a, *b)), 1e-8);
        let f_oracle = objective(&r.q, &r.c, &oracle);
        assert!(
            (sol.objective - f_oracle).abs() <= 1e-5,
            "case {case}: solver {} oracle {}",
            sol.objective,
            f_oracle
        );
    }
}

#[test]
fn optimal_solutions_are_feasible_and_beat_random_feasible_points() {
    let mut g = rng(9);
    let cfg = QpConfig::default();
    for case in 0..5 {
        let r = random_box_qp(&mut g, 5, case % 2 == 1, 0.0);
        let p = to_problem(&r);
        let sol = solve_qp(&p, &cfg).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(p.max_violation(&sol.z) <= cfg.feas_tol);
        assert!(sol.kkt_residual <= cfg.kkt_tol);
        let eq = r.eq.as_ref().map(|(a, b)| (a, *b));
        for _ in 0..1000 {
            let v = DVector::from_fn(5, |_, _| g.random_range(-3.0..3.0));
            let z = project_box_hyperplane(&v, &r.lo, &r.hi, eq);
            assert!(sol.objective <= objective(&r.q, &r.c, &z) + 1e-7);
        }
    }
}

#[test]
fn singular_hessians_match_face_enumeration() {
    let mut g = rng(31);
    for case in 0..40 {
        let k = g.random_range(2..=6);
        let r = random_box_qp(&mut g, k, case % 2 == 0, 0.0);
        let sol = solve_qp(&to_problem(&r), &QpConfig::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        let eq = r.eq.as_ref().map(|(a, b)| (a, *b));
        let exact = enumerate_faces(&r.q, &r.c, &r.lo, &r.hi, eq);
        assert!(
            (sol.objective - exact).abs() <= 1e-7 * (1.0 + exact.abs()),
            "case {case}: solver {} exact {}",
            sol.objective,
            exact
        );
    }
}

#[test]
fn general_inequalities_match_penalized_reference() {
    // min ½|z − t|² s.t. Σz ≤ 1, z ≥ 0: the projection of t onto a simplex-like set
    let t = DVector::from_column_slice(&[0.9, 0.6, -0.2, 0.4]);
    let p = QpProblem::new(DMatrix::identity(4, 4), -&t)
        .with_inequalities(DMatrix::from_element(1, 4, 1.0), DVector::from_element(1, 1.0))
        .with_bounds(DVector::zeros(4), DVector::from_element(4, f64::INFINITY));
    let sol = solve_qp(&p, &QpConfig::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    // sorted-threshold projection: z = max(t − τ, 0) with Σz = 1
    // positive entries 0.9, 0.6, 0.4 → τ = (1.9 − 1)/3 = 0.3
    let expect = [0.6, 0.3, 0.0, 0.1];
    for i in 0..4 {
        assert!((sol.z[i] - expect[i]).abs() < 1e-9, "{:?}", sol.z);
    }
}

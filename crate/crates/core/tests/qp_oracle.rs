mod common;

use battery_mpcrl::qp::{kkt_residual, solve, CsrMatrix, QpProblem, QpStatus, SolverSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn interior_point_matches_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..60 {
        let n = rng.random_range(2..=25);
        let me = rng.random_range(0..=n.min(3) - 1);
        let mi = rng.random_range(0..=8);
        let p = common::random_qp(&mut rng, n, me, mi);
        let (best, x_ref) = common::enumerate_active_sets(&p).expect("feasible by construction");
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Solved, "trial {trial}");
        let obj = p.objective(&sol.x);
        assert!((obj - best).abs() <= 1e-6, "trial {trial}: {obj} vs {best}");
        let dx = sol.x.iter().zip(&x_ref).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dx < 1e-5, "trial {trial}: |x − x*| = {dx}");
        let r = kkt_residual(&p, &sol.x, &sol.lambda, &sol.mu).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-6));
        assert!(sol.mu.iter().all(|&m| m >= 0.0));
    }
}

#[test]
fn conflicting_bounds_are_reported_infeasible() {
    // x ≤ −1 and −x ≤ −1
    let p = QpProblem::new(
        CsrMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]),
        vec![0.0],
        CsrMatrix::zeros(0, 1),
        vec![],
        CsrMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, -1.0)]),
        vec![-1.0, -1.0],
    );
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    assert_ne!(sol.status, QpStatus::Solved);
}

#[test]
fn linear_program_with_box_hits_a_vertex() {
    // min −x₀ − 2x₁ s.t. x₀ + x₁ ≤ 1, x ≥ 0; optimum (0, 1).
    let p = QpProblem::new(
        CsrMatrix::zeros(2, 2),
        vec![-1.0, -2.0],
        CsrMatrix::zeros(0, 2),
        vec![],
        CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, -1.0), (2, 1, -1.0)]),
        vec![1.0, 0.0, 0.0],
    );
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    assert!(sol.is_solved());
    assert!(sol.x[0].abs() < 1e-7 && (sol.x[1] - 1.0).abs() < 1e-7, "{:?}", sol.x);
    assert!((p.objective(&sol.x) + 2.0).abs() < 1e-7);
}

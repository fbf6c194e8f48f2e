mod common;

use jcglasso::jgl::{kkt_residual, run_jgl, JglProblem};
use jcglasso::multilasso::{b_update, run_multilasso, MultiLassoProblem, SylvesterSolver};
use jcglasso::{DMatrix, PenaltyKind};
use nalgebra::DVector;
use proptest::prelude::*;

/// Solves `2 f S X T + tau X = R` through the explicit `pq x pq` system
/// `(2 f T (x) S + tau I) vec(X) = vec(R)` (column-major `vec`).
fn kronecker_solve(s: &DMatrix<f64>, t: &DMatrix<f64>, f: f64, tau: f64, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, p) = rhs.shape();
    let mut system = t.transpose().kronecker(s) * (2.0 * f);
    for i in 0..q * p {
        system[(i, i)] += tau;
    }
    let v = DVector::from_column_slice(rhs.as_slice());
    let x = system.lu().solve(&v).expect("nonsingular system");
    DMatrix::from_column_slice(q, p, x.as_slice())
}

fn sylvester_case(seed: u64, q: usize, p: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64) {
    let mut rng = common::rng(seed);
    let s_xx = common::sample_cov(q, 2 * q + 3, &mut rng);
    let theta = common::random_pd(p, &mut rng);
    let rhs = common::gaussian_matrix(q, p, &mut rng);
    (s_xx, theta, rhs, 0.1 + (seed % 7) as f64 * 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sylvester_matches_kronecker_system(seed in any::<u64>(), q in 1usize..=6, p in 1usize..=6, tau in 0.5f64..5.0) {
        prop_assume!(p * q <= 36);
        let (s_xx, theta, rhs, f) = sylvester_case(seed, q, p);
        let fast = SylvesterSolver::new(&s_xx, &theta, f, tau).solve(&rhs);
        let slow = kronecker_solve(&s_xx, &theta, f, tau, &rhs);
        prop_assert!((&fast - &slow).abs().max() <= 1e-9);
    }

    #[test]
    fn b_update_zeroes_the_derivative(seed in any::<u64>(), q in 1usize..=8, p in 1usize..=8, tau in 0.5f64..5.0) {
        let (s_xx, theta, _, f) = sylvester_case(seed, q, p);
        let mut rng = common::rng(seed.wrapping_add(1));
        let s_xy = common::gaussian_matrix(q, p, &mut rng);
        let gamma = common::gaussian_matrix(q, p, &mut rng);
        let u = common::gaussian_matrix(q, p, &mut rng) * 0.3;
        let b = b_update(&s_xx, &s_xy, &theta, &gamma, &u, f, tau);
        // d/dB of f tr(Theta S_y|x(B)) + tau/2 ||B - Gamma + U||^2
        let grad = (&s_xx * &b * &theta - &s_xy * &theta) * (2.0 * f) + (&b - &gamma + &u) * tau;
        let scale = 1.0 + b.abs().max();
        prop_assert!(grad.abs().max() <= 1e-8 * scale);
    }
}

fn jgl_case(seed: u64, k: usize, d: usize, weight: f64, alpha: f64, kind: PenaltyKind) -> JglProblem {
    let mut rng = common::rng(seed);
    let s = (0..k).map(|_| common::sample_cov(d, 3 * d, &mut rng)).collect();
    let f = vec![0.5 / k as f64; k];
    let mut problem = JglProblem::new(s, f, weight, alpha, kind);
    problem.tol_primal = 1e-9;
    problem.tol_dual = 1e-9;
    problem.max_iter = 20_000;
    problem
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn jgl_solutions_are_stationary(
        seed in any::<u64>(),
        k in 1usize..=3,
        d in 2usize..=5,
        weight in 0.0f64..0.2,
        alpha in 0.0f64..=1.0,
        fused in any::<bool>(),
    ) {
        let kind = if fused { PenaltyKind::Fused } else { PenaltyKind::Group };
        let problem = jgl_case(seed, k, d, weight, alpha, kind);
        let sol = run_jgl(&problem, None).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(kkt_residual(&sol.estimates, &problem).unwrap() <= 1e-5);
        let best = sol.best_so_far();
        prop_assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn jgl_alpha_one_kinds_coincide(seed in any::<u64>(), k in 1usize..=3, d in 2usize..=5, weight in 0.0f64..0.2) {
        let group = run_jgl(&jgl_case(seed, k, d, weight, 1.0, PenaltyKind::Group), None).unwrap();
        let fused = run_jgl(&jgl_case(seed, k, d, weight, 1.0, PenaltyKind::Fused), None).unwrap();
        for (a, b) in group.estimates.iter().zip(&fused.estimates) {
            prop_assert!((a - b).abs().max() <= 1e-6);
        }
    }

    #[test]
    fn jgl_is_equivariant_to_condition_order(seed in any::<u64>(), d in 2usize..=4, weight in 0.01f64..0.2, fused in any::<bool>()) {
        let kind = if fused { PenaltyKind::Fused } else { PenaltyKind::Group };
        let problem = jgl_case(seed, 3, d, weight, 0.5, kind);
        let mut swapped = problem.clone();
        swapped.s.reverse();
        let a = run_jgl(&problem, None).unwrap().estimates;
        let b = run_jgl(&swapped, None).unwrap().estimates;
        for (x, y) in a.iter().zip(b.iter().rev()) {
            prop_assert!((x - y).abs().max() <= 1e-6);
        }
    }

    #[test]
    fn multilasso_fixed_point_ignores_tau(seed in any::<u64>(), k in 1usize..=3, q in 1usize..=4, p in 1usize..=4, lambda in 0.0f64..0.3) {
        let mut rng = common::rng(seed);
        let s_xx: Vec<_> = (0..k).map(|_| common::sample_cov(q, 3 * q + 3, &mut rng)).collect();
        let s_xy: Vec<_> = (0..k).map(|_| common::gaussian_matrix(q, p, &mut rng) * 0.3).collect();
        let theta: Vec<_> = (0..k).map(|_| common::random_pd(p, &mut rng)).collect();
        let f = vec![0.5 / k as f64; k];
        let mut solutions = Vec::new();
        for tau in [1.0, 2.0, 5.0] {
            let mut problem = MultiLassoProblem::new(s_xx.clone(), s_xy.clone(), theta.clone(), f.clone(), lambda, 0.5);
            problem.tau = tau;
            problem.tol = 1e-12;
            problem.max_iter = 50_000;
            let sol = run_multilasso(&problem, None).unwrap();
            let hist = &sol.objective_history;
            let mut best = f64::INFINITY;
            for &v in hist {
                best = best.min(v);
            }
            prop_assert!((problem.objective(&sol.estimates) - best).abs() <= 1e-8 * (1.0 + best.abs()));
            solutions.push(sol.estimates);
        }
        for other in &solutions[1..] {
            for (a, b) in solutions[0].iter().zip(other) {
                prop_assert!((a - b).abs().max() <= 1e-6);
            }
        }
    }
}

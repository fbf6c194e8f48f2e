mod common;

use jcglasso::{fit, FitConfig, PenaltyConfig, PenaltyKind};
use proptest::prelude::*;

fn config(lambda: f64, rho: f64, nu: f64) -> FitConfig {
    let mut cfg = FitConfig::with_penalty(PenaltyConfig {
        lambda,
        rho,
        nu,
        ..PenaltyConfig::default()
    });
    cfg.em_tol = 1e-10;
    cfg.inner_tol = 1e-10;
    cfg.jgl_tol = 1e-10;
    cfg.multilasso_tol = 1e-10;
    cfg.jgl_max_iter = 20_000;
    cfg.multilasso_max_iter = 20_000;
    cfg.inner_max_iter = 200;
    cfg
}

fn max_diff(a: &[jcglasso::ModelParams], b: &[jcglasso::ModelParams]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            [
                (&x.theta - &y.theta).abs().max(),
                (&x.omega - &y.omega).abs().max(),
                (&x.b - &y.b).abs().max(),
                (&x.mu - &y.mu).abs().max(),
                (&x.xi - &y.xi).abs().max(),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn complete_data_needs_a_single_em_round(seed in any::<u64>()) {
        let data = common::random_instance(seed, 2, 50, 0.0);
        let res = fit(&data, &config(0.05, 0.05, 0.05), None).unwrap();
        prop_assert!(res.converged);
        prop_assert!(res.em_iterations <= 2);
        for (ds, st) in data.iter().zip(&res.stats) {
            for i in 0..ds.n() {
                for j in 0..ds.dim() {
                    prop_assert_eq!(st.zhat[(i, j)], ds.value(i, j));
                }
            }
        }
    }

    #[test]
    fn permuting_conditions_permutes_estimates(seed in any::<u64>(), fused in any::<bool>()) {
        let data = common::random_instance(seed, 3, 40, 0.3);
        let mut cfg = config(0.03, 0.03, 0.03);
        let kind = if fused { PenaltyKind::Fused } else { PenaltyKind::Group };
        cfg.penalty.theta_penalty_kind = kind;
        cfg.penalty.omega_penalty_kind = kind;
        let a = fit(&data, &cfg, None).unwrap();
        let mut rev = data.clone();
        rev.reverse();
        let mut b = fit(&rev, &cfg, None).unwrap().params;
        b.reverse();
        prop_assert!(max_diff(&a.params, &b) <= 1e-6);
    }

    #[test]
    fn warm_refit_is_a_fixed_point(seed in any::<u64>()) {
        let data = common::random_instance(seed, 2, 40, 0.3);
        let cfg = config(0.03, 0.03, 0.03);
        let first = fit(&data, &cfg, None).unwrap();
        let again = fit(&data, &cfg, Some(&first.params)).unwrap();
        prop_assert!(max_diff(&first.params, &again.params) <= 1e-6);
    }

    #[test]
    fn m_steps_do_not_lose_ground(seed in any::<u64>()) {
        let data = common::random_instance(seed, 3, 60, 0.3);
        let res = fit(&data, &config(0.02, 0.02, 0.02), None).unwrap();
        for (gain, q) in res.m_step_gains.iter().zip(&res.q_trace) {
            prop_assert!(*gain >= -1e-8 * q.abs().max(1.0));
        }
    }
}

#[test]
fn fits_are_deterministic() {
    let data = common::random_instance(99, 3, 40, 0.3);
    let cfg = config(0.03, 0.03, 0.03);
    let a = fit(&data, &cfg, None).unwrap();
    let b = fit(&data, &cfg, None).unwrap();
    assert_eq!(a, b);
}

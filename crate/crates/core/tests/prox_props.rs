mod common;

use jcglasso::prox::{fused_prox_across_k, logdet_prox, soft_threshold, sparse_group_prox};
use jcglasso::DMatrix;
use proptest::collection::vec;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest violation of the sparse group subgradient condition
/// `a - g in t [alpha d||g||_1 + (1 - alpha) d||g||_2]`.
fn sparse_group_violation(a: &[f64], g: &[f64], alpha: f64, t: f64) -> f64 {
    let gn = norm(g);
    if gn == 0.0 {
        let soft: Vec<f64> = a.iter().map(|&v| soft_threshold(v, alpha * t)).collect();
        return (norm(&soft) - (1.0 - alpha) * t).max(0.0);
    }
    a.iter()
        .zip(g)
        .map(|(&ai, &gi)| {
            let r = ai - gi - (1.0 - alpha) * t * gi / gn;
            if gi != 0.0 {
                (r - alpha * t * gi.signum()).abs()
            } else {
                (r.abs() - alpha * t).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Prox via the Moreau decomposition `g = a - P_C(a)` with `C` the Minkowski
/// sum of an l-infinity ball of radius `alpha t` and an l2 ball of radius
/// `(1 - alpha) t`. The projection alternates exact block minimizations.
fn moreau_oracle(a: &[f64], alpha: f64, t: f64) -> Vec<f64> {
    let (r_box, r_ball) = (alpha * t, (1.0 - alpha) * t);
    let k = a.len();
    let mut u = vec![0.0; k];
    let mut v = vec![0.0; k];
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for i in 0..k {
            let nu = (a[i] - v[i]).clamp(-r_box, r_box);
            change = change.max((nu - u[i]).abs());
            u[i] = nu;
        }
        let w: Vec<f64> = (0..k).map(|i| a[i] - u[i]).collect();
        let wn = norm(&w);
        let scale = if wn > r_ball { r_ball / wn } else { 1.0 };
        for i in 0..k {
            let nv = w[i] * scale;
            change = change.max((nv - v[i]).abs());
            v[i] = nv;
        }
        if change < 1e-15 {
            break;
        }
    }
    (0..k).map(|i| a[i] - u[i] - v[i]).collect()
}

fn fused_objective(a: &[f64], g: &[f64], l1: f64, w: f64) -> f64 {
    let mut val = 0.5 * a.iter().zip(g).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    val += l1 * g.iter().map(|x| x.abs()).sum::<f64>();
    for i in 0..g.len() {
        for j in (i + 1)..g.len() {
            val += w * (g[i] - g[j]).abs();
        }
    }
    val
}

/// Largest violation of the fused optimality conditions. Entries sharing a
/// value form a block; between blocks the pair subgradients are fixed signs.
/// Inside a block an antisymmetric flow bounded by `w` per pair must absorb
/// the residuals, which by the cut condition holds iff for every subset `A`
/// of the block `|sum_A r| <= w |A| |block \ A|` (plus `l1 |A|` of slack
/// when the block sits at zero, otherwise `sum r = 0`).
fn fused_violation(a: &[f64], g: &[f64], l1: f64, w: f64) -> f64 {
    let k = g.len();
    let mut seen = vec![false; k];
    let mut worst = 0.0f64;
    for i in 0..k {
        if seen[i] {
            continue;
        }
        let block: Vec<usize> = (0..k).filter(|&j| (g[j] - g[i]).abs() <= 1e-12).collect();
        block.iter().for_each(|&j| seen[j] = true);
        let value = g[i];
        let at_zero = value.abs() <= 1e-12;
        let r: Vec<f64> = block
            .iter()
            .map(|&j| {
                let outside: f64 = (0..k)
                    .filter(|m| !block.contains(m))
                    .map(|m| w * (g[j] - g[m]).signum())
                    .sum();
                let l1_part = if at_zero { 0.0 } else { l1 * value.signum() };
                a[j] - g[j] - outside - l1_part
            })
            .collect();
        let m = block.len();
        for mask in 1u32..(1 << m) {
            let size = mask.count_ones() as f64;
            let sum: f64 = (0..m).filter(|b| mask & (1 << b) != 0).map(|b| r[b]).sum();
            let mut cap = w * size * (m as f64 - size);
            if at_zero {
                cap += l1 * size;
            }
            if !at_zero && mask == (1 << m) - 1 {
                worst = worst.max(sum.abs());
            } else {
                worst = worst.max(sum.abs() - cap);
            }
        }
    }
    worst
}

fn matrix_from(values: &[f64], d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(d, d, &values[..d * d]);
    (&a + a.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sparse_group_prox_is_stationary(
        a in vec(-3.0f64..3.0, 1..8),
        alpha in 0.0f64..=1.0,
        lam in 0.0f64..4.0,
        tau in 0.2f64..5.0,
    ) {
        let g = sparse_group_prox(&a, alpha, lam, tau);
        prop_assert!(sparse_group_violation(&a, &g, alpha, lam / tau) <= 1e-6);
    }

    #[test]
    fn fused_prox_is_stationary(
        a in vec(-3.0f64..3.0, 1..7),
        l1 in 0.0f64..1.5,
        w in 0.0f64..1.5,
    ) {
        let g = fused_prox_across_k(&a, l1, w);
        prop_assert!(fused_violation(&a, &g, l1, w) <= 1e-6, "a={a:?} g={g:?}");
    }

    #[test]
    fn fused_prox_beyond_enumeration_is_near_optimal(
        a in vec(-3.0f64..3.0, 13..16),
        l1 in 0.0f64..1.0,
        w in 0.0f64..0.3,
    ) {
        let g = fused_prox_across_k(&a, l1, w);
        let best = fused_objective(&a, &g, l1, w);
        let step = 1e-4;
        for i in 0..a.len() {
            for dir in [-step, step] {
                let mut h = g.clone();
                h[i] += dir;
                prop_assert!(fused_objective(&a, &h, l1, w) >= best - 1e-9);
            }
        }
    }

    #[test]
    fn logdet_prox_is_stationary(
        values in vec(-2.0f64..2.0, 36),
        seed in any::<u64>(),
        d in 1usize..=6,
        f in 0.05f64..2.0,
        tau in 0.2f64..5.0,
    ) {
        let a = matrix_from(&values, d);
        let s = common::sample_cov(d, 3 * d, &mut common::rng(seed));
        let x = logdet_prox(&s, &a, f, tau).unwrap();
        let inv = x.clone().try_inverse().unwrap();
        let grad = (s - inv) * f + (&x - a) * tau;
        prop_assert!(grad.abs().max() <= 1e-6 * (1.0 + x.abs().max()));
        prop_assert!(x.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn proxes_are_non_expansive(
        a in vec(-3.0f64..3.0, 4),
        b in vec(-3.0f64..3.0, 4),
        alpha in 0.0f64..=1.0,
        t in 0.0f64..2.0,
        w in 0.0f64..1.0,
    ) {
        let diff = norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        let ga = sparse_group_prox(&a, alpha, t, 1.0);
        let gb = sparse_group_prox(&b, alpha, t, 1.0);
        prop_assert!(norm(&ga.iter().zip(&gb).map(|(x, y)| x - y).collect::<Vec<_>>()) <= diff + 1e-12);
        let fa = fused_prox_across_k(&a, alpha * t, w);
        let fb = fused_prox_across_k(&b, alpha * t, w);
        prop_assert!(norm(&fa.iter().zip(&fb).map(|(x, y)| x - y).collect::<Vec<_>>()) <= diff + 1e-9);
    }

    #[test]
    fn pure_group_kills_iff_norm_below_threshold(
        a in vec(-2.0f64..2.0, 1..6),
        lam in 0.0f64..4.0,
        tau in 0.5f64..3.0,
    ) {
        let g = sparse_group_prox(&a, 0.0, lam, tau);
        let zero = g.iter().all(|v| *v == 0.0);
        prop_assert_eq!(zero, norm(&a) <= lam / tau);
    }

    #[test]
    fn logdet_prox_is_pd_for_extreme_inputs(
        values in vec(-1e3f64..1e3, 16),
        f in 1e-3f64..10.0,
    ) {
        let a = matrix_from(&values, 4);
        let s = DMatrix::zeros(4, 4);
        let x = logdet_prox(&s, &a, f, 2.0).unwrap();
        prop_assert!(x.symmetric_eigenvalues().min() > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sparse_group_prox_matches_moreau_oracle(
        a in vec(-3.0f64..3.0, 1..8),
        alpha in 0.0f64..=1.0,
        lam in 0.0f64..4.0,
        tau in 0.2f64..5.0,
    ) {
        let g = sparse_group_prox(&a, alpha, lam, tau);
        let oracle = moreau_oracle(&a, alpha, lam / tau);
        for (x, y) in g.iter().zip(&oracle) {
            prop_assert!((x - y).abs() <= 1e-5, "prox {g:?} oracle {oracle:?}");
        }
    }
}

#[test]
fn threshold_ties_map_to_zero() {
    assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    assert_eq!(sparse_group_prox(&[3.0, 4.0], 0.0, 5.0, 1.0), vec![0.0, 0.0]);
}

#[test]
fn violation_checks_reject_wrong_answers() {
    let a = [1.5, -0.2, 0.7];
    assert!(fused_violation(&a, &a, 0.3, 0.2) > 0.1);
    assert!(fused_violation(&a, &[0.4, 0.4, 0.4], 0.0, 0.2) > 0.1);
    assert!(sparse_group_violation(&a, &a, 0.5, 0.4) > 0.1);
    assert!(sparse_group_violation(&a, &[0.0; 3], 0.5, 0.4) > 0.1);
}

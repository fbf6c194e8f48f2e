//! Proximal operators used by the ADMM solvers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// `sign(a) max(|a| - t, 0)`; `|a| == t` maps to zero.
pub fn soft_threshold(a: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let m = a.abs() - t;
    if m > 0.0 {
        m.copysign(a)
    } else {
        0.0
    }
}

/// Prox of `(lam / tau) [alpha1 ||g||_1 + (1 - alpha1) ||g||_2]` on one group
/// of K values (one coefficient position across the conditions).
pub fn sparse_group_prox(a: &[f64], alpha1: f64, lam: f64, tau: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    sparse_group_prox_into(a, alpha1, lam / tau, &mut out);
    out
}

/// `t` is the already scaled weight `lam / tau`.
pub(crate) fn sparse_group_prox_into(a: &[f64], alpha: f64, t: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(a.iter().map(|&v| soft_threshold(v, alpha * t)));
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    let group_t = (1.0 - alpha) * t;
    if norm <= group_t || norm == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let factor = 1.0 - group_t / norm;
    out.iter_mut().for_each(|v| *v *= factor);
}

/// Prox of `l1_weight sum_k |g_k| + fusion_weight sum_{k<k'} |g_k - g_k'|`.
///
/// Solves the pure fusion problem exactly and soft-thresholds the result.
pub fn fused_prox_across_k(a: &[f64], l1_weight: f64, fusion_weight: f64) -> Vec<f64> {
    let mut out = clique_fusion(a, fusion_weight);
    out.iter_mut().for_each(|v| *v = soft_threshold(*v, l1_weight));
    out
}

/// Largest K solved by enumerating order-preserving fusion patterns.
const ENUMERATION_LIMIT: usize = 12;

/// `argmin 1/2 ||g - a||^2 + w sum_{k<k'} |g_k - g_k'|`.
fn clique_fusion(a: &[f64], w: f64) -> Vec<f64> {
    let k = a.len();
    if k <= 1 || w <= 0.0 {
        return a.to_vec();
    }
    if k == 2 {
        let (lo, hi) = (a[0].min(a[1]), a[0].max(a[1]));
        if hi - lo <= 2.0 * w {
            let m = 0.5 * (a[0] + a[1]);
            return vec![m, m];
        }
        return if a[0] <= a[1] {
            vec![a[0] + w, a[1] - w]
        } else {
            vec![a[0] - w, a[1] + w]
        };
    }
    if k <= ENUMERATION_LIMIT {
        if let Some(sol) = fusion_by_enumeration(a, w) {
            return sol;
        }
    }
    fusion_by_dual_projection(a, w)
}

/// The solution preserves the order of `a`, so fused groups are contiguous in
/// sorted order. Each of the `2^(K-1)` contiguous partitions has a closed-form
/// candidate; the (unique) one satisfying the optimality conditions is returned.
fn fusion_by_enumeration(a: &[f64], w: f64) -> Option<Vec<f64>> {
    let k = a.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| a[i]).collect();
    let scale = sorted.iter().fold(w, |acc, v| acc.max(v.abs()));
    let tol = 1e-12 * scale.max(1.0);

    'patterns: for mask in 0u32..(1u32 << (k - 1)) {
        let mut blocks: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for gap in 0..(k - 1) {
            if mask & (1 << gap) != 0 {
                blocks.push((start, gap + 1));
                start = gap + 1;
            }
        }
        blocks.push((start, k));

        let mut values = Vec::with_capacity(blocks.len());
        for &(s, e) in &blocks {
            let m = (e - s) as f64;
            let mean = sorted[s..e].iter().sum::<f64>() / m;
            let below = s as f64;
            let above = (k - e) as f64;
            values.push(mean + w * (above - below));
            // every prefix of the block must be able to push its deficit
            // through the internal edges
            let mut prefix = 0.0;
            for (t, v) in sorted[s..e].iter().enumerate().take(e - s - 1) {
                prefix += v - mean;
                let t = (t + 1) as f64;
                if prefix < -w * t * (m - t) - tol {
                    continue 'patterns;
                }
            }
        }
        if values.windows(2).any(|pair| pair[1] <= pair[0] + tol) {
            continue;
        }
        let mut out = vec![0.0; k];
        for (&(s, e), &v) in blocks.iter().zip(&values) {
            for &idx in &order[s..e] {
                out[idx] = v;
            }
        }
        return Some(out);
    }
    None
}

/// Projected gradient on the box-constrained dual; used for large K.
fn fusion_by_dual_projection(a: &[f64], w: f64) -> Vec<f64> {
    let k = a.len();
    let edges: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
    let mut z = vec![0.0; edges.len()];
    let mut g = a.to_vec();
    let step = 1.0 / k as f64;
    for _ in 0..200_000 {
        for (e, &(i, j)) in edges.iter().enumerate() {
            z[e] = (z[e] + step * (g[i] - g[j])).clamp(-w, w);
        }
        let mut next = a.to_vec();
        for (e, &(i, j)) in edges.iter().enumerate() {
            next[i] -= z[e];
            next[j] += z[e];
        }
        let change = next.iter().zip(&g).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        g = next;
        if change < 1e-12 {
            break;
        }
    }
    g
}

/// `argmin_X f [-log det X + tr(S X)] + (tau / 2) ||X - A||_F^2`.
pub fn logdet_prox(s: &DMatrix<f64>, a: &DMatrix<f64>, f: f64, tau: f64) -> Result<DMatrix<f64>> {
    if !s.is_square() || s.shape() != a.shape() {
        return Err(Error::Shape(format!(
            "log-det prox needs matching square matrices, got {:?} and {:?}",
            s.shape(),
            a.shape()
        )));
    }
    let tol = 1e-8 * linalg::max_abs(s).max(linalg::max_abs(a)).max(1.0);
    if linalg::asymmetry(s) > tol || linalg::asymmetry(a) > tol {
        return Err(Error::Shape("log-det prox inputs must be symmetric".into()));
    }
    if !(f > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "log-det prox needs f > 0 and tau > 0, got ({f}, {tau})"
        )));
    }
    if s.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ratio = tau / f;
    let eig = linalg::sym_eigen(&(a * ratio - s));
    let c = 4.0 * ratio;
    let mapped = eig.eigenvalues.map(|d| {
        let root = (d * d + c).sqrt();
        // d + root without cancellation when d < 0
        let sum = if d >= 0.0 { d + root } else { c / (root - d) };
        sum / (2.0 * ratio)
    });
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&mapped) * v.transpose();
    linalg::symmetrize(&mut out);
    Ok(out)
}

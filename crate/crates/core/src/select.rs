//! BIC, tuning-parameter maxima and the staged path search.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::em::{fit, initialize, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::estep::{compute_sufficient_stats, ConditionDataset, SufficientStats};
use crate::model::{condition_weights, ModelParams, PenaltyKind, QValue};
use crate::prox::soft_threshold;

/// Values closer than this across conditions count as one parameter.
pub const DISTINCT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicSummary {
    pub bic_x: f64,
    pub bic_y_given_x: f64,
    pub bic_total: f64,
    pub df_x: usize,
    pub df_y_given_x: usize,
}

/// Number of nonzero values that are not within [`DISTINCT_TOL`] of an
/// earlier value of the same position.
fn distinct_nonzero(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .filter(|&(k, &v)| v != 0.0 && values[..k].iter().all(|&w| (v - w).abs() > DISTINCT_TOL))
        .count()
}

/// Distinct nonzeros of K symmetric matrices over the upper triangle,
/// diagonal included.
pub fn df_symmetric(mats: &[DMatrix<f64>]) -> usize {
    let Some(first) = mats.first() else { return 0 };
    let d = first.nrows();
    let mut vals = Vec::with_capacity(mats.len());
    let mut df = 0;
    for h in 0..d {
        for m in h..d {
            vals.clear();
            vals.extend(mats.iter().map(|t| t[(h, m)]));
            df += distinct_nonzero(&vals);
        }
    }
    df
}

/// Distinct nonzeros of K general matrices over all entries.
pub fn df_general(mats: &[DMatrix<f64>]) -> usize {
    let Some(first) = mats.first() else { return 0 };
    let mut vals = Vec::with_capacity(mats.len());
    (0..first.len())
        .map(|idx| {
            vals.clear();
            vals.extend(mats.iter().map(|b| b[idx]));
            distinct_nonzero(&vals)
        })
        .sum()
}

pub fn bic(params: &[ModelParams], q: &QValue, sizes: &[usize]) -> BicSummary {
    let omegas: Vec<_> = params.iter().map(|p| p.omega.clone()).collect();
    let thetas: Vec<_> = params.iter().map(|p| p.theta.clone()).collect();
    let bs: Vec<_> = params.iter().map(|p| p.b.clone()).collect();
    let df_x = df_symmetric(&omegas);
    let df_y_given_x = df_general(&bs) + df_symmetric(&thetas);
    let n: usize = sizes.iter().sum();
    let log_n: f64 = sizes.iter().map(|&nk| (nk as f64).ln()).sum();
    let bic_x = -2.0 * n as f64 * q.q_x + df_x as f64 * log_n;
    let bic_y_given_x = -2.0 * n as f64 * q.q_y_given_x + df_y_given_x as f64 * log_n;
    BicSummary {
        bic_x,
        bic_y_given_x,
        bic_total: bic_x + bic_y_given_x,
        df_x,
        df_y_given_x,
    }
}

/// `|| { sum_k (f_k S_xy,k)_+^2 }^{1/2} ||_inf`.
pub fn lambda_max(stats: &[SufficientStats], weights: &[f64]) -> f64 {
    let s_xy: Vec<_> = stats.iter().map(SufficientStats::s_xy).collect();
    let Some(first) = s_xy.first() else { return 0.0 };
    (0..first.len())
        .map(|idx| {
            s_xy.iter()
                .zip(weights)
                .map(|(s, f)| (f * s[idx]).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

fn precision_max(mats: &[DMatrix<f64>], weights: &[f64], kind: PenaltyKind) -> f64 {
    let Some(first) = mats.first() else { return 0.0 };
    let d = first.nrows();
    let mut best = 0.0f64;
    for h in 0..d {
        for m in (h + 1)..d {
            let v = match kind {
                PenaltyKind::Fused => mats
                    .iter()
                    .zip(weights)
                    .map(|(s, f)| (f * s[(h, m)]).abs())
                    .fold(0.0, f64::max),
                PenaltyKind::Group => mats
                    .iter()
                    .zip(weights)
                    .map(|(s, f)| (f * s[(h, m)]).max(0.0).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            };
            best = best.max(v);
        }
    }
    best
}

/// Fused: `max_k ||f_k S_yy,k||^-_inf`; group: `||{sum_k (f_k S_yy,k)_+^2}^{1/2}||^-_inf`,
/// where `||.||^-_inf` runs over the strict upper triangle.
pub fn rho_max(stats: &[SufficientStats], weights: &[f64], kind: PenaltyKind) -> f64 {
    let s: Vec<_> = stats.iter().map(SufficientStats::s_yy).collect();
    precision_max(&s, weights, kind)
}

/// Same formulas as [`rho_max`] applied to `S_xx`.
pub fn nu_max(stats: &[SufficientStats], weights: &[f64], kind: PenaltyKind) -> f64 {
    let s: Vec<_> = stats.iter().map(SufficientStats::s_xx).collect();
    precision_max(&s, weights, kind)
}

/// Smallest `lambda` for which `B = 0` solves the coefficient sub-problem at
/// the given `Theta_k`: per position, the gradient `2 f_k (S_xy,k Theta_k)`
/// must lie in the sparse group subdifferential.
pub fn b_zero_threshold(stats: &[SufficientStats], thetas: &[DMatrix<f64>], weights: &[f64], alpha: f64) -> f64 {
    let grads: Vec<DMatrix<f64>> = stats
        .iter()
        .zip(thetas)
        .zip(weights)
        .map(|((s, t), f)| s.s_xy() * t * (2.0 * f))
        .collect();
    let Some(first) = grads.first() else { return 0.0 };
    let mut g = vec![0.0; grads.len()];
    (0..first.len())
        .map(|idx| {
            for (k, m) in grads.iter().enumerate() {
                g[k] = m[idx];
            }
            group_threshold(&g, alpha)
        })
        .fold(0.0, f64::max)
}

fn group_threshold(g: &[f64], alpha: f64) -> f64 {
    let amax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if alpha >= 1.0 {
        return amax;
    }
    if alpha <= 0.0 {
        return norm;
    }
    let zero_at = |lam: f64| {
        let s: f64 = g.iter().map(|&v| soft_threshold(v, alpha * lam).powi(2)).sum();
        s.sqrt() <= (1.0 - alpha) * lam
    };
    let (mut lo, mut hi) = (0.0, amax / alpha);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zero_at(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `len` equally spaced values from `max` down to `min_ratio * max`; a single
/// zero when `max` is zero.
pub fn linear_grid(max: f64, min_ratio: f64, len: usize) -> Vec<f64> {
    if max <= 0.0 || len <= 1 {
        return vec![max.max(0.0)];
    }
    let lo = min_ratio * max;
    (0..len)
        .map(|i| max - (max - lo) * i as f64 / (len - 1) as f64)
        .collect()
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidGrid(format!(
            "{name} grid has negative or non-finite values"
        )));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidGrid(format!("{name} grid must be strictly decreasing")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub nu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
}

impl PathGrid {
    pub fn validate(&self) -> Result<()> {
        check_grid("nu", &self.nu)?;
        check_grid("lambda", &self.lambda)?;
        check_grid("rho", &self.rho)
    }
}

/// Threshold values computed from the statistics at the initial estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMaxima {
    pub nu: f64,
    pub lambda: f64,
    pub rho: f64,
}

pub fn path_maxima(datasets: &[ConditionDataset], config: &FitConfig) -> Result<PathMaxima> {
    let init = initialize(datasets)?;
    let stats: Vec<SufficientStats> = if config.estep {
        datasets
            .iter()
            .zip(&init)
            .map(|(d, p)| compute_sufficient_stats(d, p))
            .collect::<Result<_>>()?
    } else {
        datasets.iter().map(SufficientStats::from_observed).collect()
    };
    let sizes: Vec<usize> = datasets.iter().map(ConditionDataset::n).collect();
    let w = condition_weights(&sizes);
    Ok(PathMaxima {
        nu: nu_max(&stats, &w, config.penalty.omega_penalty_kind),
        lambda: lambda_max(&stats, &w),
        rho: rho_max(&stats, &w, config.penalty.theta_penalty_kind),
    })
}

/// 50 values of `nu` over `[0.01, 1] nu_max` and a 10 x 10 grid of
/// `(lambda, rho)` over `[0.05, 1]` times their maxima, equally spaced.
pub fn default_grid(maxima: &PathMaxima) -> PathGrid {
    PathGrid {
        nu: linear_grid(maxima.nu, 0.01, 50),
        lambda: linear_grid(maxima.lambda, 0.05, 10),
        rho: linear_grid(maxima.rho, 0.05, 10),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuPoint {
    pub nu: f64,
    pub bic: BicSummary,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub lambda: f64,
    pub rho: f64,
    pub bic: BicSummary,
    pub converged: bool,
    pub max_abs_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub nu_path: Vec<NuPoint>,
    /// Row-major over `(lambda, rho)`.
    pub surface: Vec<SurfacePoint>,
    pub selected_nu: f64,
    pub selected_lambda: f64,
    pub selected_rho: f64,
    pub fit: FitResult,
    pub diagnostics: Vec<String>,
}

fn argmin_by<T>(items: &[T], key: impl Fn(&T) -> f64) -> usize {
    let mut best = 0;
    for (i, it) in items.iter().enumerate() {
        if key(it) < key(&items[best]) {
            best = i;
        }
    }
    best
}

/// Stage 1 selects `nu` by `bic_x` with `(lambda, rho)` at their first grid
/// values. Stage 2 fixes `omega` and `mu` at that fit and sweeps the
/// `(lambda, rho)` grid, descending `rho` with warm starts within each
/// `lambda` row, selecting by `bic_y_given_x`.
pub fn fit_path(datasets: &[ConditionDataset], grid: &PathGrid, config: &FitConfig) -> Result<PathResult> {
    grid.validate()?;
    config.validate()?;
    let (lambda0, rho0) = (grid.lambda[0], grid.rho[0]);

    let mut nu_fits: Vec<FitResult> = Vec::with_capacity(grid.nu.len());
    let mut nu_path = Vec::with_capacity(grid.nu.len());
    for &nu in &grid.nu {
        let mut cfg = config.clone();
        cfg.fixed_omega = false;
        cfg.penalty.nu = nu;
        cfg.penalty.lambda = lambda0;
        cfg.penalty.rho = rho0;
        let warm = nu_fits.last().map(|f| f.params.clone());
        let res = fit(datasets, &cfg, warm.as_deref())?;
        nu_path.push(NuPoint {
            nu,
            bic: res.bic,
            converged: res.converged,
        });
        nu_fits.push(res);
    }
    let best_nu = argmin_by(&nu_path, |p| p.bic.bic_x);
    let stage1 = nu_fits.swap_remove(best_nu);
    drop(nu_fits);
    let selected_nu = grid.nu[best_nu];

    let rows: Vec<Vec<(SurfacePoint, Option<FitResult>)>> = grid
        .lambda
        .par_iter()
        .enumerate()
        .map(|(li, &lambda)| -> Result<_> {
            let mut row = Vec::with_capacity(grid.rho.len());
            let mut warm = stage1.params.clone();
            let mut best: Option<(f64, FitResult)> = None;
            for (ri, &rho) in grid.rho.iter().enumerate() {
                let res = if li == 0 && ri == 0 {
                    stage1.clone()
                } else {
                    let mut cfg = config.clone();
                    cfg.fixed_omega = true;
                    cfg.penalty.nu = selected_nu;
                    cfg.penalty.lambda = lambda;
                    cfg.penalty.rho = rho;
                    fit(datasets, &cfg, Some(&warm))?
                };
                warm = res.params.clone();
                let point = SurfacePoint {
                    lambda,
                    rho,
                    bic: res.bic,
                    converged: res.converged,
                    max_abs_b: res
                        .params
                        .iter()
                        .map(|p| crate::linalg::max_abs(&p.b))
                        .fold(0.0, f64::max),
                };
                let score = res.bic.bic_y_given_x;
                if best.as_ref().map_or(true, |(b, _)| score < *b) {
                    best = Some((score, res));
                }
                row.push(point);
            }
            let best_fit = best.map(|(_, f)| f);
            Ok(row
                .into_iter()
                .enumerate()
                .map(|(i, p)| (p, if i == 0 { best_fit.clone() } else { None }))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut surface = Vec::with_capacity(grid.lambda.len() * grid.rho.len());
    let mut row_best = Vec::with_capacity(grid.lambda.len());
    for row in rows {
        for (point, best) in row {
            if let Some(b) = best {
                row_best.push(b);
            }
            surface.push(point);
        }
    }
    let pick = argmin_by(&surface, |p| p.bic.bic_y_given_x);
    let (selected_lambda, selected_rho) = (surface[pick].lambda, surface[pick].rho);
    let fit_res = row_best.swap_remove(pick / grid.rho.len());

    let mut diagnostics = Vec::new();
    let maxima = path_maxima(datasets, config)?;
    for p in &surface {
        if maxima.lambda > 0.0 && p.lambda >= maxima.lambda && p.max_abs_b > 1e-8 {
            diagnostics.push(format!(
                "coefficients are not all zero at lambda = {:.6e} >= lambda_max (max |B| = {:.3e})",
                p.lambda, p.max_abs_b
            ));
        }
    }
    Ok(PathResult {
        nu_path,
        surface,
        selected_nu,
        selected_lambda,
        selected_rho,
        fit: fit_res,
        diagnostics,
    })
}

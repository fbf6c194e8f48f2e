//! The outer EM loop: E-step, mean update, then the covariate-precision
//! problem and the inner coefficient / conditional-precision alternation,
//! which run concurrently on the same statistics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estep::{compute_sufficient_stats, CellStatus, ConditionDataset, SufficientStats};
use crate::jgl::{run_jgl_resume, JglProblem};
use crate::linalg;
use crate::model::{
    condition_weights, conditional_residual_covariance, penalty_value, q_function, ModelParams, PenaltyConfig,
    PenaltyValue, QValue,
};
use crate::multilasso::{run_multilasso, MultiLassoProblem};
use crate::select::{bic, BicSummary};

const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub penalty: PenaltyConfig,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub tau: f64,
    pub jgl_tol: f64,
    pub jgl_max_iter: usize,
    pub multilasso_tol: f64,
    pub multilasso_max_iter: usize,
    /// `false` skips the E-step: censored cells are used at their limits and
    /// missing-at-random cells at the column mean.
    pub estep: bool,
    /// Keep `omega` and `mu` at the warm-start values.
    pub fixed_omega: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            penalty: PenaltyConfig::default(),
            em_tol: 1e-4,
            em_max_iter: 100,
            inner_tol: 1e-4,
            inner_max_iter: 50,
            tau: 2.0,
            jgl_tol: 1e-5,
            jgl_max_iter: 500,
            multilasso_tol: 1e-5,
            multilasso_max_iter: 1000,
            estep: true,
            fixed_omega: false,
        }
    }
}

impl FitConfig {
    pub fn with_penalty(penalty: PenaltyConfig) -> Self {
        Self {
            penalty,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        for (name, v) in [
            ("em_tol", self.em_tol),
            ("inner_tol", self.inner_tol),
            ("tau", self.tau),
            ("jgl_tol", self.jgl_tol),
            ("multilasso_tol", self.multilasso_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("em_max_iter", self.em_max_iter),
            ("inner_max_iter", self.inner_max_iter),
            ("jgl_max_iter", self.jgl_max_iter),
            ("multilasso_max_iter", self.multilasso_max_iter),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<ModelParams>,
    /// Statistics of the last E-step.
    pub stats: Vec<SufficientStats>,
    pub sizes: Vec<usize>,
    pub weights: Vec<f64>,
    pub q: QValue,
    pub penalty: PenaltyValue,
    /// Penalized Q at the returned parameters.
    pub objective: f64,
    /// Penalized Q after each M-step.
    pub q_trace: Vec<f64>,
    /// Per iteration, penalized Q of the new parameters minus that of the
    /// previous precisions and coefficients (at the updated means), both under
    /// the same E-step statistics.
    pub m_step_gains: Vec<f64>,
    pub bic: BicSummary,
    pub em_iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn intercepts(&self) -> Vec<DVector<f64>> {
        self.params.iter().map(ModelParams::intercept).collect()
    }

    pub fn thetas(&self) -> Vec<DMatrix<f64>> {
        self.params.iter().map(|p| p.theta.clone()).collect()
    }

    pub fn omegas(&self) -> Vec<DMatrix<f64>> {
        self.params.iter().map(|p| p.omega.clone()).collect()
    }

    pub fn coefficients(&self) -> Vec<DMatrix<f64>> {
        self.params.iter().map(|p| p.b.clone()).collect()
    }
}

fn check_datasets(datasets: &[ConditionDataset]) -> Result<(usize, usize)> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::InvalidParameters("at least one condition is required".into()))?;
    let (q, p) = (first.q(), first.p());
    if p == 0 {
        return Err(Error::Shape("at least one response variable is required".into()));
    }
    for ds in datasets {
        ds.validate()?;
        if ds.q() != q || ds.p() != p {
            return Err(Error::Shape(format!(
                "condition '{}' has (q, p) = ({}, {}), expected ({q}, {p})",
                ds.name,
                ds.q(),
                ds.p()
            )));
        }
        if ds.n() == 0 {
            return Err(Error::Shape(format!("condition '{}' has no rows", ds.name)));
        }
    }
    Ok((q, p))
}

/// Starting values: column means and reciprocal variances over the observed
/// and censored cells (censored ones at their limit), `B = 0`.
pub fn initialize(datasets: &[ConditionDataset]) -> Result<Vec<ModelParams>> {
    let (q, p) = check_datasets(datasets)?;
    datasets
        .iter()
        .enumerate()
        .map(|(k, ds)| {
            let mut mean = DVector::zeros(q + p);
            let mut prec = DVector::zeros(q + p);
            for j in 0..q + p {
                let mut observed = 0usize;
                let mut vals = Vec::with_capacity(ds.n());
                for i in 0..ds.n() {
                    match ds.status(i, j) {
                        CellStatus::MissingAtRandom => {}
                        s => {
                            observed += usize::from(s == CellStatus::Observed);
                            vals.push(ds.value(i, j));
                        }
                    }
                }
                if observed == 0 {
                    return Err(Error::DegenerateVariable {
                        variable: ds.variables[j].clone(),
                        condition: k,
                    });
                }
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
                mean[j] = m;
                prec[j] = 1.0 / var.max(VARIANCE_FLOOR);
            }
            Ok(ModelParams {
                mu: mean.rows(0, q).into_owned(),
                xi: mean.rows(q, p).into_owned(),
                omega: DMatrix::from_diagonal(&prec.rows(0, q).into_owned()),
                b: DMatrix::zeros(q, p),
                theta: DMatrix::from_diagonal(&prec.rows(q, p).into_owned()),
            })
        })
        .collect()
}

/// Imputed column means per condition.
pub fn update_means(stats: &[SufficientStats]) -> Vec<(DVector<f64>, DVector<f64>)> {
    stats.iter().map(|s| (s.x_mean(), s.y_mean())).collect()
}

pub fn penalized_q(
    params: &[ModelParams],
    stats: &[SufficientStats],
    weights: &[f64],
    penalty: &PenaltyConfig,
) -> Result<f64> {
    let q = q_function(params, stats, weights)?;
    let pen = penalty_value(params, penalty)?;
    Ok(q.total() - pen.weighted(penalty))
}

struct OmegaStep {
    omegas: Vec<DMatrix<f64>>,
    dual: Vec<DMatrix<f64>>,
    note: Option<String>,
}

fn omega_step(
    stats: &[SufficientStats],
    weights: &[f64],
    current: &[ModelParams],
    dual: Option<&[DMatrix<f64>]>,
    config: &FitConfig,
) -> Result<OmegaStep> {
    let pen = &config.penalty;
    let mut problem = JglProblem::new(
        stats.iter().map(SufficientStats::s_xx).collect(),
        weights.to_vec(),
        pen.nu,
        pen.alpha3,
        pen.omega_penalty_kind,
    );
    problem.tau = config.tau;
    problem.tol_primal = config.jgl_tol;
    problem.tol_dual = config.jgl_tol;
    problem.max_iter = config.jgl_max_iter;
    let warm: Vec<DMatrix<f64>> = current.iter().map(|p| p.omega.clone()).collect();
    let sol = run_jgl_resume(&problem, Some(&warm), dual)?;
    let note = (!sol.converged).then(|| {
        let (r, s) = sol.final_residuals();
        format!(
            "omega ADMM stopped after {} iterations (primal {r:.3e}, dual {s:.3e})",
            sol.iterations
        )
    });
    Ok(OmegaStep {
        omegas: sol.estimates,
        dual: sol.dual,
        note,
    })
}

struct InnerStep {
    bs: Vec<DMatrix<f64>>,
    thetas: Vec<DMatrix<f64>>,
    dual: Option<Vec<DMatrix<f64>>>,
    notes: Vec<String>,
}

fn inner_step(
    stats: &[SufficientStats],
    weights: &[f64],
    current: &[ModelParams],
    dual: Option<&[DMatrix<f64>]>,
    config: &FitConfig,
) -> Result<InnerStep> {
    let pen = &config.penalty;
    let mut bs: Vec<DMatrix<f64>> = current.iter().map(|p| p.b.clone()).collect();
    let mut thetas: Vec<DMatrix<f64>> = current.iter().map(|p| p.theta.clone()).collect();
    let s_xx: Vec<DMatrix<f64>> = stats.iter().map(SufficientStats::s_xx).collect();
    let s_xy: Vec<DMatrix<f64>> = stats.iter().map(SufficientStats::s_xy).collect();
    let mut theta_dual = dual.map(<[_]>::to_vec);
    let mut notes = Vec::new();
    let mut lasso_stalls = 0;
    let mut jgl_stalls = 0;

    for round in 1..=config.inner_max_iter {
        let mut lasso = MultiLassoProblem::new(
            s_xx.clone(),
            s_xy.clone(),
            thetas.clone(),
            weights.to_vec(),
            pen.lambda,
            pen.alpha1,
        );
        lasso.tau = config.tau;
        lasso.tol = config.multilasso_tol;
        lasso.max_iter = config.multilasso_max_iter;
        let b_sol = run_multilasso(&lasso, Some(&bs))?;
        lasso_stalls += usize::from(!b_sol.converged);
        let new_bs = b_sol.estimates;

        let s_cond = stats
            .iter()
            .zip(&new_bs)
            .map(|(s, b)| conditional_residual_covariance(s, b))
            .collect::<Result<Vec<_>>>()?;
        let mut jgl = JglProblem::new(s_cond, weights.to_vec(), pen.rho, pen.alpha2, pen.theta_penalty_kind);
        jgl.tau = config.tau;
        jgl.tol_primal = config.jgl_tol;
        jgl.tol_dual = config.jgl_tol;
        jgl.max_iter = config.jgl_max_iter;
        let t_sol = run_jgl_resume(&jgl, Some(&thetas), theta_dual.as_deref())?;
        jgl_stalls += usize::from(!t_sol.converged);
        theta_dual = Some(t_sol.dual);
        let new_thetas = t_sol.estimates;
        let no_coefficients = new_bs.first().is_some_and(|b| b.is_empty());

        let change = (linalg::frobenius_sq_diff(&new_bs, &bs) + linalg::frobenius_sq_diff(&new_thetas, &thetas)).sqrt();
        let size = (linalg::frobenius_sq(&bs) + linalg::frobenius_sq(&thetas)).sqrt();
        bs = new_bs;
        thetas = new_thetas;
        // without covariates the Theta problem does not depend on B
        if no_coefficients || change <= config.inner_tol * size.max(1.0) {
            break;
        }
        if round == config.inner_max_iter {
            notes.push(format!("coefficient/precision alternation hit {round} rounds"));
        }
    }
    if lasso_stalls > 0 {
        notes.push(format!("multi-lasso ADMM hit its iteration cap {lasso_stalls} time(s)"));
    }
    if jgl_stalls > 0 {
        notes.push(format!("theta ADMM hit its iteration cap {jgl_stalls} time(s)"));
    }
    Ok(InnerStep {
        bs,
        thetas,
        dual: theta_dual,
        notes,
    })
}

fn e_step(datasets: &[ConditionDataset], params: &[ModelParams]) -> Result<Vec<SufficientStats>> {
    datasets
        .par_iter()
        .zip(params)
        .map(|(ds, par)| compute_sufficient_stats(ds, par))
        .collect()
}

pub fn fit(datasets: &[ConditionDataset], config: &FitConfig, warm: Option<&[ModelParams]>) -> Result<FitResult> {
    config.validate()?;
    let (q, p) = check_datasets(datasets)?;
    let kk = datasets.len();
    let mut params = match warm {
        Some(w) => {
            if w.len() != kk {
                return Err(Error::Shape(format!(
                    "warm start has {} conditions, data has {kk}",
                    w.len()
                )));
            }
            for par in w {
                par.validate()?;
                if par.q() != q || par.p() != p {
                    return Err(Error::Shape("warm start dimensions do not match the data".into()));
                }
            }
            w.to_vec()
        }
        None => {
            if config.fixed_omega {
                return Err(Error::InvalidConfig("fixed_omega needs a warm start".into()));
            }
            initialize(datasets)?
        }
    };
    let sizes: Vec<usize> = datasets.iter().map(ConditionDataset::n).collect();
    let weights = condition_weights(&sizes);
    let observed_stats =
        (!config.estep).then(|| datasets.iter().map(SufficientStats::from_observed).collect::<Vec<_>>());

    let mut q_trace = Vec::new();
    let mut m_step_gains = Vec::new();
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut em_iterations = 0;
    let mut stats = Vec::new();
    let mut omega_dual: Option<Vec<DMatrix<f64>>> = None;
    let mut theta_dual: Option<Vec<DMatrix<f64>>> = None;

    for it in 1..=config.em_max_iter {
        em_iterations = it;
        stats = match &observed_stats {
            Some(s) => s.clone(),
            None => e_step(datasets, &params)?,
        };
        for (k, s) in stats.iter().enumerate() {
            if s.psd_boost > 0.0 {
                diagnostics.push(format!(
                    "iteration {it}: statistics of condition {k} boosted by {:.3e}",
                    s.psd_boost
                ));
            }
        }

        let means = update_means(&stats);
        let run_omega = q > 0 && !config.fixed_omega;
        let (omega, inner) = rayon::join(
            || {
                run_omega
                    .then(|| omega_step(&stats, &weights, &params, omega_dual.as_deref(), config))
                    .transpose()
            },
            || inner_step(&stats, &weights, &params, theta_dual.as_deref(), config),
        );
        let omega = omega?;
        let inner = inner?;

        for (k, par) in params.iter_mut().enumerate() {
            if !config.fixed_omega {
                par.mu = means[k].0.clone();
            }
            par.xi = means[k].1.clone();
        }
        let before = penalized_q(&params, &stats, &weights, &config.penalty)?;
        for (k, par) in params.iter_mut().enumerate() {
            par.b = inner.bs[k].clone();
            par.theta = inner.thetas[k].clone();
            if let Some(om) = &omega {
                par.omega = om.omegas[k].clone();
            }
        }
        theta_dual = inner.dual;
        if let Some(om) = omega {
            omega_dual = Some(om.dual);
            if let Some(note) = om.note {
                diagnostics.push(format!("iteration {it}: {note}"));
            }
        }
        diagnostics.extend(inner.notes.into_iter().map(|n| format!("iteration {it}: {n}")));

        let value = penalized_q(&params, &stats, &weights, &config.penalty)?;
        m_step_gains.push(value - before);
        let prev = q_trace.last().copied();
        q_trace.push(value);
        if let Some(prev) = prev {
            if (value - prev).abs() <= config.em_tol * prev.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        diagnostics.push(format!(
            "EM stopped after {em_iterations} iterations without converging"
        ));
    }

    let q_value = q_function(&params, &stats, &weights)?;
    let penalty = penalty_value(&params, &config.penalty)?;
    let objective = q_value.total() - penalty.weighted(&config.penalty);
    let bic = bic(&params, &q_value, &sizes);
    Ok(FitResult {
        params,
        stats,
        sizes,
        weights,
        q: q_value,
        penalty,
        objective,
        q_trace,
        m_step_gains,
        bic,
        em_iterations,
        converged,
        diagnostics,
    })
}

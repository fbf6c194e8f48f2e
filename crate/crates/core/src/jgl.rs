//! ADMM for the joint graphical lasso sub-problems
//!
//! ```text
//! max_{Theta_1..K}  sum_k f_k [log det Theta_k - tr(Theta_k S_k)] - weight P(Theta)
//! ```
//!
//! where `P` is the fused or group penalty with lasso mixing `alpha`. The same
//! solver handles the covariate precisions (`S_k = S_xx,k`, weight `nu`) and the
//! conditional precisions (`S_k = S_y|x,k(B_k)`, weight `rho`). Diagonal
//! entries carry no lasso or group penalty.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{gaussian_kernel, precision_penalty, PenaltyKind};
use crate::prox::{fused_prox_across_k, logdet_prox, sparse_group_prox_into};

#[derive(Debug, Clone, PartialEq)]
pub struct JglProblem {
    pub s: Vec<DMatrix<f64>>,
    pub f: Vec<f64>,
    pub weight: f64,
    pub alpha: f64,
    pub kind: PenaltyKind,
    pub tau: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
}

impl JglProblem {
    pub fn new(s: Vec<DMatrix<f64>>, f: Vec<f64>, weight: f64, alpha: f64, kind: PenaltyKind) -> Self {
        Self {
            s,
            f,
            weight,
            alpha,
            kind,
            tau: 2.0,
            tol_primal: 1e-5,
            tol_dual: 1e-5,
            max_iter: 500,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.first().map_or(0, |m| m.nrows())
    }

    fn validate(&self) -> Result<()> {
        if self.s.is_empty() || self.s.len() != self.f.len() {
            return Err(Error::Shape(format!(
                "{} covariance matrices and {} weights",
                self.s.len(),
                self.f.len()
            )));
        }
        let d = self.dim();
        for (k, s) in self.s.iter().enumerate() {
            if s.shape() != (d, d) {
                return Err(Error::Shape(format!(
                    "matrix {k} is {:?}, expected ({d}, {d})",
                    s.shape()
                )));
            }
            let scale = linalg::max_abs(s).max(1.0);
            if linalg::asymmetry(s) > 1e-8 * scale {
                return Err(Error::InvalidStats(format!("matrix {k} is not symmetric")));
            }
            if linalg::min_eigenvalue(s) < -1e-8 * scale {
                return Err(Error::InvalidStats(format!("matrix {k} is not positive semidefinite")));
            }
        }
        if self.f.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidParameters("condition weights must be positive".into()));
        }
        if !(self.weight >= 0.0) || !(0.0..=1.0).contains(&self.alpha) || !(self.tau > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "need weight >= 0, alpha in [0, 1] and tau > 0, got ({}, {}, {})",
                self.weight, self.alpha, self.tau
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameters("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Minimization form of the objective, `+inf` when some matrix is not PD.
    pub fn objective(&self, thetas: &[DMatrix<f64>]) -> f64 {
        let mut acc = 0.0;
        for ((t, s), &f) in thetas.iter().zip(&self.s).zip(&self.f) {
            match gaussian_kernel(t, s, f) {
                Ok(v) => acc -= v,
                Err(_) => return f64::INFINITY,
            }
        }
        acc + self.weight * precision_penalty(thetas, self.alpha, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JglSolution {
    /// The sparse iterate Z (exact zeros).
    pub estimates: Vec<DMatrix<f64>>,
    /// Scaled dual variable at exit; pass it back through [`run_jgl_resume`]
    /// to continue from this point.
    pub dual: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_history: Vec<f64>,
    pub dual_history: Vec<f64>,
    /// Objective at the sparse iterate (`+inf` while it is not PD).
    pub objective_history: Vec<f64>,
}

impl JglSolution {
    pub fn final_residuals(&self) -> (f64, f64) {
        (
            self.primal_history.last().copied().unwrap_or(0.0),
            self.dual_history.last().copied().unwrap_or(0.0),
        )
    }

    /// Best objective value seen so far, per iteration.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.objective_history
            .iter()
            .map(|&v| {
                best = best.min(v);
                best
            })
            .collect()
    }
}

/// Elementwise prox of `weight P / tau` across the K conditions.
fn penalty_prox(problem: &JglProblem, inputs: &[DMatrix<f64>], scale: f64) -> Vec<DMatrix<f64>> {
    let kk = inputs.len();
    let d = problem.dim();
    let t = problem.weight / scale;
    let mut out = vec![DMatrix::zeros(d, d); kk];
    let mut a = vec![0.0; kk];
    let mut g = Vec::with_capacity(kk);
    for h in 0..d {
        for m in h..d {
            for k in 0..kk {
                a[k] = inputs[k][(h, m)];
            }
            let vals: &[f64] = match (problem.kind, h == m) {
                (PenaltyKind::Group, true) => &a,
                (PenaltyKind::Group, false) => {
                    sparse_group_prox_into(&a, problem.alpha, t, &mut g);
                    &g
                }
                (PenaltyKind::Fused, diag) => {
                    let l1 = if diag { 0.0 } else { problem.alpha * t };
                    g = fused_prox_across_k(&a, l1, (1.0 - problem.alpha) * t);
                    &g
                }
            };
            for k in 0..kk {
                out[k][(h, m)] = vals[k];
                out[k][(m, h)] = vals[k];
            }
        }
    }
    out
}

/// Runs the ADMM iterations. Non-convergence is reported through
/// [`JglSolution::converged`]; [`solve_jgl`] turns it into an error.
pub fn run_jgl(problem: &JglProblem, warm: Option<&[DMatrix<f64>]>) -> Result<JglSolution> {
    run_jgl_resume(problem, warm, None)
}

/// Like [`run_jgl`], optionally starting from a previous scaled dual.
pub fn run_jgl_resume(
    problem: &JglProblem,
    warm: Option<&[DMatrix<f64>]>,
    dual: Option<&[DMatrix<f64>]>,
) -> Result<JglSolution> {
    problem.validate()?;
    let kk = problem.s.len();
    let d = problem.dim();
    if d == 0 {
        return Ok(JglSolution {
            estimates: vec![DMatrix::zeros(0, 0); kk],
            dual: vec![DMatrix::zeros(0, 0); kk],
            iterations: 0,
            converged: true,
            primal_history: vec![],
            dual_history: vec![],
            objective_history: vec![],
        });
    }

    if problem.weight == 0.0 {
        // Unpenalized: the per-condition maximizer is S_k^{-1}.
        if let Some(inv) = problem.s.iter().map(linalg::inverse_pd).collect::<Option<Vec<_>>>() {
            let obj = problem.objective(&inv);
            return Ok(JglSolution {
                estimates: inv,
                dual: vec![DMatrix::zeros(d, d); kk],
                iterations: 0,
                converged: true,
                primal_history: vec![0.0],
                dual_history: vec![0.0],
                objective_history: vec![obj],
            });
        }
    }

    let tau = problem.tau;
    let mut z: Vec<DMatrix<f64>> = match warm {
        Some(w) if w.len() == kk && w.iter().all(|m| m.shape() == (d, d)) => w.to_vec(),
        _ => problem.s.iter().map(|s| linalg::diagonal_inverse(s, 1e-6)).collect(),
    };
    let mut u = match dual {
        Some(w) if w.len() == kk && w.iter().all(|m| m.shape() == (d, d)) => w.to_vec(),
        _ => vec![DMatrix::<f64>::zeros(d, d); kk],
    };
    let mut primal_history = Vec::new();
    let mut dual_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_theta = Vec::new();

    for it in 1..=problem.max_iter {
        iterations = it;
        let theta: Vec<DMatrix<f64>> = (0..kk)
            .into_par_iter()
            .map(|k| logdet_prox(&problem.s[k], &(&z[k] - &u[k]), problem.f[k], tau))
            .collect::<Result<_>>()?;
        let shifted: Vec<DMatrix<f64>> = theta.iter().zip(&u).map(|(t, v)| t + v).collect();
        let z_new = penalty_prox(problem, &shifted, tau);
        for k in 0..kk {
            u[k] += &theta[k] - &z_new[k];
        }

        let primal = linalg::frobenius_sq_diff(&theta, &z_new).sqrt();
        let dual = tau * linalg::frobenius_sq_diff(&z_new, &z).sqrt();
        let norm_z = linalg::frobenius_sq(&z_new).sqrt();
        let norm_theta = linalg::frobenius_sq(&theta).sqrt();
        let rel_primal = primal / norm_z.max(norm_theta).max(f64::MIN_POSITIVE);
        let rel_dual = dual / (tau * norm_z).max(f64::MIN_POSITIVE);
        primal_history.push(rel_primal);
        dual_history.push(rel_dual);
        objective_history.push(problem.objective(&z_new));
        z = z_new;
        last_theta = theta;

        if rel_primal < problem.tol_primal && rel_dual < problem.tol_dual {
            converged = true;
            break;
        }
    }

    // an unconverged sparse iterate can be indefinite; the log-det iterate never is
    for (zk, tk) in z.iter_mut().zip(last_theta) {
        if zk.clone().cholesky().is_none() {
            *zk = tk;
        }
    }

    Ok(JglSolution {
        estimates: z,
        dual: u,
        iterations,
        converged,
        primal_history,
        dual_history,
        objective_history,
    })
}

pub fn solve_jgl(problem: &JglProblem, warm: Option<&[DMatrix<f64>]>) -> Result<JglSolution> {
    let sol = run_jgl(problem, warm)?;
    if !sol.converged {
        let (primal, dual) = sol.final_residuals();
        return Err(Error::NoConvergence {
            solver: "joint graphical lasso ADMM",
            iterations: sol.iterations,
            primal,
            dual,
        });
    }
    Ok(sol)
}

/// Prox-gradient stationarity residual `max |Theta - prox_P(Theta - G)|` with
/// `G_k = f_k (S_k - Theta_k^{-1})`. It is zero exactly at the optimum and
/// reduces to `max |G|` when the penalty weight is zero.
pub fn kkt_residual(solution: &[DMatrix<f64>], problem: &JglProblem) -> Result<f64> {
    if solution.len() != problem.s.len() {
        return Err(Error::Shape("solution and problem have different K".into()));
    }
    let mut stepped = Vec::with_capacity(solution.len());
    for ((t, s), &f) in solution.iter().zip(&problem.s).zip(&problem.f) {
        let inv = linalg::inverse_pd(t)
            .ok_or_else(|| Error::InvalidParameters("KKT residual needs positive-definite estimates".into()))?;
        stepped.push(t - (s - inv) * f);
    }
    let proxed = penalty_prox(problem, &stepped, 1.0);
    Ok(solution
        .iter()
        .zip(&proxed)
        .map(|(t, p)| linalg::max_abs(&(t - p)))
        .fold(0.0, f64::max))
}

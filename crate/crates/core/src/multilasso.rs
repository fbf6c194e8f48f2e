//! ADMM for the coefficient sub-problem
//!
//! ```text
//! min_{B_1..K}  sum_k f_k tr(Theta_k S_y|x,k(B_k)) + lambda P(B)
//! ```
//!
//! with `Theta_k` held fixed and `P` the sparse group lasso across conditions.
//! The smooth update solves `2 f S_xx B Theta + tau B = R` through the
//! eigendecompositions of `S_xx` and `Theta`; the pq x pq Kronecker system is
//! never formed.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::coefficient_penalty;
use crate::prox::sparse_group_prox_into;

/// Cached factorization of `X -> 2 f S_xx X Theta + tau X`.
#[derive(Debug, Clone)]
pub struct SylvesterSolver {
    left: SymmetricEigen<f64, nalgebra::Dyn>,
    right: SymmetricEigen<f64, nalgebra::Dyn>,
    f: f64,
    tau: f64,
}

impl SylvesterSolver {
    pub fn new(s_xx: &DMatrix<f64>, theta: &DMatrix<f64>, f: f64, tau: f64) -> Self {
        Self {
            left: linalg::sym_eigen(s_xx),
            right: linalg::sym_eigen(theta),
            f,
            tau,
        }
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let p = &self.left.eigenvectors;
        let q = &self.right.eigenvectors;
        let mut core = p.transpose() * rhs * q;
        for i in 0..core.nrows() {
            for j in 0..core.ncols() {
                let s = self.left.eigenvalues[i];
                let t = self.right.eigenvalues[j];
                core[(i, j)] /= 2.0 * self.f * s * t + self.tau;
            }
        }
        p * core * q.transpose()
    }
}

/// One smooth update: the minimizer over `B` of
/// `f tr(Theta S_y|x(B)) + (tau / 2) ||B - Gamma + U||_F^2`.
pub fn b_update(
    s_xx: &DMatrix<f64>,
    s_xy: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    u: &DMatrix<f64>,
    f: f64,
    tau: f64,
) -> DMatrix<f64> {
    let rhs = s_xy * theta * (2.0 * f) + (gamma - u) * tau;
    SylvesterSolver::new(s_xx, theta, f, tau).solve(&rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLassoProblem {
    pub s_xx: Vec<DMatrix<f64>>,
    pub s_xy: Vec<DMatrix<f64>>,
    pub theta: Vec<DMatrix<f64>>,
    pub f: Vec<f64>,
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl MultiLassoProblem {
    pub fn new(
        s_xx: Vec<DMatrix<f64>>,
        s_xy: Vec<DMatrix<f64>>,
        theta: Vec<DMatrix<f64>>,
        f: Vec<f64>,
        lambda: f64,
        alpha: f64,
    ) -> Self {
        Self {
            s_xx,
            s_xy,
            theta,
            f,
            lambda,
            alpha,
            tau: 2.0,
            tol: 1e-5,
            max_iter: 1000,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.s_xy.first().map_or((0, 0), |m| m.shape())
    }

    fn validate(&self) -> Result<()> {
        let kk = self.f.len();
        if kk == 0 || self.s_xx.len() != kk || self.s_xy.len() != kk || self.theta.len() != kk {
            return Err(Error::Shape(
                "multi-lasso inputs disagree on the number of conditions".into(),
            ));
        }
        let (q, p) = self.shape();
        for k in 0..kk {
            if self.s_xx[k].shape() != (q, q) || self.s_xy[k].shape() != (q, p) || self.theta[k].shape() != (p, p) {
                return Err(Error::Shape(format!("condition {k} has inconsistent dimensions")));
            }
        }
        if self.f.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidParameters("condition weights must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !(0.0..=1.0).contains(&self.alpha) || !(self.tau > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "need lambda >= 0, alpha in [0, 1] and tau > 0, got ({}, {}, {})",
                self.lambda, self.alpha, self.tau
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameters("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Objective up to the constant `sum_k f_k tr(Theta_k S_yy,k)`.
    pub fn objective(&self, bs: &[DMatrix<f64>]) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.f.len() {
            let b = &bs[k];
            let quad = linalg::trace_product(&self.theta[k], &(b.transpose() * &self.s_xx[k] * b));
            let cross = linalg::trace_product(&self.theta[k], &(self.s_xy[k].transpose() * b));
            acc += self.f[k] * (quad - 2.0 * cross);
        }
        acc + self.lambda * coefficient_penalty(bs, self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLassoSolution {
    /// The sparse iterate Gamma.
    pub estimates: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative l1 change of the smooth iterate, per iteration.
    pub change_history: Vec<f64>,
    pub objective_history: Vec<f64>,
}

impl MultiLassoSolution {
    pub fn final_change(&self) -> f64 {
        self.change_history.last().copied().unwrap_or(0.0)
    }
}

fn l1(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

pub fn run_multilasso(problem: &MultiLassoProblem, warm: Option<&[DMatrix<f64>]>) -> Result<MultiLassoSolution> {
    problem.validate()?;
    let kk = problem.f.len();
    let (q, p) = problem.shape();
    if q == 0 || p == 0 {
        return Ok(MultiLassoSolution {
            estimates: vec![DMatrix::zeros(q, p); kk],
            iterations: 0,
            converged: true,
            change_history: vec![],
            objective_history: vec![],
        });
    }

    if problem.lambda == 0.0 {
        let direct: Option<Vec<DMatrix<f64>>> = (0..kk)
            .map(|k| linalg::inverse_pd(&problem.s_xx[k]).map(|inv| inv * &problem.s_xy[k]))
            .collect();
        if let Some(bs) = direct {
            let obj = problem.objective(&bs);
            return Ok(MultiLassoSolution {
                estimates: bs,
                iterations: 0,
                converged: true,
                change_history: vec![0.0],
                objective_history: vec![obj],
            });
        }
    }

    let tau = problem.tau;
    let solvers: Vec<SylvesterSolver> = (0..kk)
        .into_par_iter()
        .map(|k| SylvesterSolver::new(&problem.s_xx[k], &problem.theta[k], problem.f[k], tau))
        .collect();
    let fixed_rhs: Vec<DMatrix<f64>> = (0..kk)
        .map(|k| &problem.s_xy[k] * &problem.theta[k] * (2.0 * problem.f[k]))
        .collect();

    let mut gamma: Vec<DMatrix<f64>> = match warm {
        Some(w) if w.len() == kk && w.iter().all(|m| m.shape() == (q, p)) => w.to_vec(),
        _ => vec![DMatrix::zeros(q, p); kk],
    };
    let mut b = gamma.clone();
    let mut u = vec![DMatrix::<f64>::zeros(q, p); kk];
    let t = problem.lambda / tau;
    let mut change_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut a = vec![0.0; kk];
    let mut g = Vec::with_capacity(kk);

    for it in 1..=problem.max_iter {
        iterations = it;
        let b_new: Vec<DMatrix<f64>> = (0..kk)
            .into_par_iter()
            .map(|k| solvers[k].solve(&(&fixed_rhs[k] + (&gamma[k] - &u[k]) * tau)))
            .collect();

        for idx in 0..q * p {
            for k in 0..kk {
                a[k] = b_new[k][idx] + u[k][idx];
            }
            if t == 0.0 {
                g.clear();
                g.extend_from_slice(&a);
            } else {
                sparse_group_prox_into(&a, problem.alpha, t, &mut g);
            }
            for k in 0..kk {
                gamma[k][idx] = g[k];
            }
        }
        for k in 0..kk {
            u[k] += &b_new[k] - &gamma[k];
        }

        let diff: f64 = b_new.iter().zip(&b).map(|(x, y)| l1(&(x - y))).sum();
        let prev: f64 = b.iter().map(l1).sum();
        let change = if prev > 0.0 { diff / prev } else { diff };
        change_history.push(change);
        objective_history.push(problem.objective(&gamma));
        b = b_new;
        if change < problem.tol {
            converged = true;
            break;
        }
    }

    Ok(MultiLassoSolution {
        estimates: gamma,
        iterations,
        converged,
        change_history,
        objective_history,
    })
}

pub fn solve_multilasso(problem: &MultiLassoProblem, warm: Option<&[DMatrix<f64>]>) -> Result<MultiLassoSolution> {
    let sol = run_multilasso(problem, warm)?;
    if !sol.converged {
        return Err(Error::NoConvergence {
            solver: "multi-lasso ADMM",
            iterations: sol.iterations,
            primal: sol.final_change(),
            dual: 0.0,
        });
    }
    Ok(sol)
}

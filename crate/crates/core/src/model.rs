//! Model parametrization, penalties and the Q-function.
//!
//! The joint vector is ordered `Z = (X, Y)`: the first `q` coordinates are
//! covariates, the last `p` are responses. For one condition the parameters are
//! the means `mu` (X) and `xi` (Y), the covariate precision `omega`, the
//! `q x p` regression matrix `b` and the conditional precision `theta` of Y
//! given X. The joint precision is
//!
//! ```text
//! Psi = [ omega + b theta b^T   -b theta ]
//!       [ -theta b^T             theta   ]
//! ```
//!
//! Q-function values drop the Gaussian normalizing constant; it does not depend
//! on the parameters, so BIC comparisons are unaffected.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estep::SufficientStats;
use crate::linalg;

/// Symmetry tolerance for parameter matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Parameters of one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mu: DVector<f64>,
    pub xi: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub theta: DMatrix<f64>,
}

impl ModelParams {
    pub fn q(&self) -> usize {
        self.mu.len()
    }

    pub fn p(&self) -> usize {
        self.xi.len()
    }

    /// Independent standard model: zero means, identity precisions, no coupling.
    pub fn identity(q: usize, p: usize) -> Self {
        Self {
            mu: DVector::zeros(q),
            xi: DVector::zeros(p),
            omega: DMatrix::identity(q, q),
            b: DMatrix::zeros(q, p),
            theta: DMatrix::identity(p, p),
        }
    }

    /// Intercept of the conditional regression, `beta0 = xi - b^T mu`.
    pub fn intercept(&self) -> DVector<f64> {
        &self.xi - self.b.transpose() * &self.mu
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (q, p) = (self.q(), self.p());
        if self.omega.shape() != (q, q) {
            return Err(Error::Shape(format!(
                "omega is {:?}, expected ({q}, {q})",
                self.omega.shape()
            )));
        }
        if self.theta.shape() != (p, p) {
            return Err(Error::Shape(format!(
                "theta is {:?}, expected ({p}, {p})",
                self.theta.shape()
            )));
        }
        if self.b.shape() != (q, p) {
            return Err(Error::Shape(format!("b is {:?}, expected ({q}, {p})", self.b.shape())));
        }
        Ok(())
    }

    /// Checks shapes, symmetry and positive definiteness of both precisions.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        for (name, m) in [("omega", &self.omega), ("theta", &self.theta)] {
            if !linalg::is_symmetric(m, SYMMETRY_TOL) {
                return Err(Error::InvalidParameters(format!("{name} is not symmetric")));
            }
            if !linalg::is_pd(m) {
                return Err(Error::InvalidParameters(format!("{name} is not positive definite")));
            }
        }
        Ok(())
    }
}

/// Mean vector and precision of the joint vector `(X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPrecision {
    pub psi: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub q: usize,
}

impl JointPrecision {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Joint covariance `Psi^{-1}`.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        linalg::inverse_pd(&self.psi)
    }
}

pub fn assemble_joint_precision(params: &ModelParams) -> Result<JointPrecision> {
    params.validate()?;
    let (q, p) = (params.q(), params.p());
    let b_theta = &params.b * &params.theta;
    let mut psi = DMatrix::zeros(q + p, q + p);
    psi.view_mut((0, 0), (q, q))
        .copy_from(&(&params.omega + &b_theta * params.b.transpose()));
    psi.view_mut((0, q), (q, p)).copy_from(&(-&b_theta));
    psi.view_mut((q, 0), (p, q)).copy_from(&(-b_theta.transpose()));
    psi.view_mut((q, q), (p, p)).copy_from(&params.theta);
    linalg::symmetrize(&mut psi);

    let mut mean = DVector::zeros(q + p);
    mean.rows_mut(0, q).copy_from(&params.mu);
    mean.rows_mut(q, p).copy_from(&params.xi);
    Ok(JointPrecision { psi, mean, q })
}

/// `S_yy - S_yx B - B^T S_xy + B^T S_xx B`, symmetrized.
pub fn conditional_residual_covariance(stats: &SufficientStats, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (q, p) = (stats.q(), stats.p());
    if b.shape() != (q, p) {
        return Err(Error::Shape(format!(
            "coefficient matrix is {:?}, statistics need ({q}, {p})",
            b.shape()
        )));
    }
    let s_xx = stats.s_xx();
    let s_xy = stats.s_xy();
    let s_yy = stats.s_yy();
    let cross = s_xy.transpose() * b;
    let mut out = s_yy - &cross - cross.transpose() + b.transpose() * s_xx * b;
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// Condition weights `f_k = n_k / (2n)`.
pub fn condition_weights(sizes: &[usize]) -> Vec<f64> {
    let n: usize = sizes.iter().sum();
    sizes.iter().map(|&nk| nk as f64 / (2.0 * n as f64)).collect()
}

/// The two additive components of the Q-function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValue {
    pub q_x: f64,
    pub q_y_given_x: f64,
}

impl QValue {
    pub fn total(&self) -> f64 {
        self.q_x + self.q_y_given_x
    }
}

/// `f_k [log det A - tr(A S)]`, the Gaussian log-likelihood kernel of one block.
pub fn gaussian_kernel(precision: &DMatrix<f64>, s: &DMatrix<f64>, weight: f64) -> Result<f64> {
    let logdet = linalg::logdet_pd(precision)
        .ok_or_else(|| Error::InvalidParameters("precision matrix is not positive definite".into()))?;
    Ok(weight * (logdet - linalg::trace_product(precision, s)))
}

pub fn q_function(params: &[ModelParams], stats: &[SufficientStats], weights: &[f64]) -> Result<QValue> {
    if params.len() != stats.len() || params.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} parameter sets, {} statistics, {} weights",
            params.len(),
            stats.len(),
            weights.len()
        )));
    }
    let mut q_x = 0.0;
    let mut q_yx = 0.0;
    for ((par, st), &f) in params.iter().zip(stats).zip(weights) {
        par.check_shapes()?;
        if par.q() != st.q() || par.p() != st.p() {
            return Err(Error::Shape("parameters and statistics disagree on dimensions".into()));
        }
        q_x += gaussian_kernel(&par.omega, &st.s_xx(), f)?;
        let s_cond = conditional_residual_covariance(st, &par.b)?;
        q_yx += gaussian_kernel(&par.theta, &s_cond, f)?;
    }
    Ok(QValue { q_x, q_y_given_x: q_yx })
}

/// Coupling of precision matrices across conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyKind {
    /// Lasso plus pairwise absolute differences across conditions.
    Fused,
    /// Lasso plus the l2 norm of each entry across conditions.
    #[default]
    Group,
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyKind::Fused => "fused",
            PenaltyKind::Group => "group",
        })
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fused" => Ok(PenaltyKind::Fused),
            "group" => Ok(PenaltyKind::Group),
            other => Err(Error::InvalidConfig(format!(
                "unknown penalty kind '{other}' (expected 'fused' or 'group')"
            ))),
        }
    }
}

/// Tuning parameters: `lambda` for B, `rho` for Theta, `nu` for Omega, and
/// the lasso/coupling mixing weights `alpha1..alpha3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub rho: f64,
    pub nu: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub theta_penalty_kind: PenaltyKind,
    pub omega_penalty_kind: PenaltyKind,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            rho: 0.0,
            nu: 0.0,
            alpha1: 0.5,
            alpha2: 0.5,
            alpha3: 0.5,
            theta_penalty_kind: PenaltyKind::Group,
            omega_penalty_kind: PenaltyKind::Group,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("rho", self.rho), ("nu", self.nu)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a finite value >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Unscaled penalty values `P_{alpha1}(B)`, `P_{alpha2}(Theta)`, `P_{alpha3}(Omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyValue {
    pub b: f64,
    pub theta: f64,
    pub omega: f64,
}

impl PenaltyValue {
    /// `lambda P_B + rho P_Theta + nu P_Omega`.
    pub fn weighted(&self, config: &PenaltyConfig) -> f64 {
        config.lambda * self.b + config.rho * self.theta + config.nu * self.omega
    }
}

/// Sparse group lasso on coefficient matrices. Groups are single coefficient
/// positions `(j, h)` with members `B_k[j, h]` for `k = 1..K`.
pub fn coefficient_penalty(bs: &[DMatrix<f64>], alpha: f64) -> f64 {
    let Some(first) = bs.first() else { return 0.0 };
    let mut l1 = 0.0;
    let mut group = 0.0;
    for idx in 0..first.len() {
        let mut sq = 0.0;
        for b in bs {
            let v = b[idx];
            l1 += v.abs();
            sq += v * v;
        }
        group += sq.sqrt();
    }
    alpha * l1 + (1.0 - alpha) * group
}

/// Joint penalty on K precision matrices.
///
/// The lasso and group terms run over off-diagonal entries (both triangles).
/// The fused difference term runs over every entry, diagonal included.
pub fn precision_penalty(mats: &[DMatrix<f64>], alpha: f64, kind: PenaltyKind) -> f64 {
    let Some(first) = mats.first() else { return 0.0 };
    let n = first.nrows();
    let mut l1 = 0.0;
    let mut coupling = 0.0;
    for h in 0..n {
        for m in 0..n {
            if h != m {
                l1 += mats.iter().map(|t| t[(h, m)].abs()).sum::<f64>();
            }
            match kind {
                PenaltyKind::Fused => {
                    for k in 0..mats.len() {
                        for k2 in (k + 1)..mats.len() {
                            coupling += (mats[k][(h, m)] - mats[k2][(h, m)]).abs();
                        }
                    }
                }
                PenaltyKind::Group => {
                    if h != m {
                        coupling += mats.iter().map(|t| t[(h, m)].powi(2)).sum::<f64>().sqrt();
                    }
                }
            }
        }
    }
    alpha * l1 + (1.0 - alpha) * coupling
}

pub fn penalty_value(params: &[ModelParams], config: &PenaltyConfig) -> Result<PenaltyValue> {
    config.validate()?;
    if let Some(first) = params.first() {
        for par in params {
            par.check_shapes()?;
            if par.q() != first.q() || par.p() != first.p() {
                return Err(Error::Shape("conditions disagree on dimensions".into()));
            }
        }
    }
    let bs: Vec<_> = params.iter().map(|p| p.b.clone()).collect();
    let thetas: Vec<_> = params.iter().map(|p| p.theta.clone()).collect();
    let omegas: Vec<_> = params.iter().map(|p| p.omega.clone()).collect();
    Ok(PenaltyValue {
        b: coefficient_penalty(&bs, config.alpha1),
        theta: precision_penalty(&thetas, config.alpha2, config.theta_penalty_kind),
        omega: precision_penalty(&omegas, config.alpha3, config.omega_penalty_kind),
    })
}

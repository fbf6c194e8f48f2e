//! Conditional moments of partially observed rows and the sufficient
//! statistics they feed into the M-step.
//!
//! Every unobserved cell of a row is conditioned on the observed cells of that
//! row only. Its conditional Gaussian is then truncated to the cell's region:
//! `(u, +inf)` for right-censored, `(-inf, l)` for left-censored and the whole
//! line for cells missing at random. Mixed second moments between two
//! unobserved cells use the product of their conditional means; the truncated
//! variance is added on the diagonal only.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{assemble_joint_precision, JointPrecision, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellStatus {
    Observed,
    MissingAtRandom,
    LeftCensored,
    RightCensored,
}

impl CellStatus {
    pub fn is_observed(self) -> bool {
        self == CellStatus::Observed
    }

    pub fn is_censored(self) -> bool {
        matches!(self, CellStatus::LeftCensored | CellStatus::RightCensored)
    }
}

/// Integration region of one unobserved coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Whole,
    /// `(-inf, bound)`
    Below(f64),
    /// `(bound, +inf)`
    Above(f64),
}

const TAIL_SWITCH: f64 = 8.0;

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse Mills ratio `phi(a) / (1 - Phi(a))`.
fn inverse_mills(a: f64) -> f64 {
    if a < TAIL_SWITCH {
        std_normal_pdf(a) / (0.5 * erfc(a / SQRT_2))
    } else {
        // Continued fraction for the Mills ratio, evaluated bottom-up:
        // R(a) = 1 / (a + 1 / (a + 2 / (a + 3 / (a + ...))))
        let mut tail = a;
        for k in (1..=80).rev() {
            tail = a + k as f64 / tail;
        }
        tail
    }
}

/// Mean and variance of `N(0, 1)` conditioned on `Z > a`.
fn standard_upper_moments(a: f64) -> (f64, f64) {
    let lam = inverse_mills(a);
    let var = 1.0 - lam * (lam - a);
    (lam, var.max(0.0))
}

pub fn truncated_moments_univariate(mean: f64, variance: f64, region: Region) -> Result<(f64, f64)> {
    if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidParameters(format!(
            "truncated moments need a finite mean and a positive variance, got ({mean}, {variance})"
        )));
    }
    let sd = variance.sqrt();
    match region {
        Region::Whole => Ok((mean, variance)),
        Region::Above(u) if u.is_nan() || u == f64::INFINITY => {
            Err(Error::InvalidRegion(format!("({u}, +inf) is empty")))
        }
        Region::Below(l) if l.is_nan() || l == f64::NEG_INFINITY => {
            Err(Error::InvalidRegion(format!("(-inf, {l}) is empty")))
        }
        Region::Above(u) if u == f64::NEG_INFINITY => Ok((mean, variance)),
        Region::Below(l) if l == f64::INFINITY => Ok((mean, variance)),
        Region::Above(u) => {
            let (m, v) = standard_upper_moments((u - mean) / sd);
            Ok((mean + sd * m, variance * v))
        }
        Region::Below(l) => {
            let (m, v) = standard_upper_moments(-(l - mean) / sd);
            Ok((mean - sd * m, variance * v))
        }
    }
}

/// Observations of one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionDataset {
    pub name: String,
    /// Covariate names followed by response names.
    pub variables: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Row-major `n x (q + p)` status grid.
    pub status: Vec<CellStatus>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl ConditionDataset {
    /// Builds and validates a dataset. Censored cells must hold their bound;
    /// missing-at-random cells may hold anything (NaN included).
    pub fn new(
        name: impl Into<String>,
        variables: Vec<String>,
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        status: Vec<CellStatus>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            variables,
            x,
            y,
            status,
            lower,
            upper,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Dataset with every cell observed and no censoring limits.
    pub fn complete(name: impl Into<String>, x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let (q, p) = (x.ncols(), y.ncols());
        let n = x.nrows();
        Self::new(
            name,
            default_variable_names(q, p),
            x,
            y,
            vec![CellStatus::Observed; n * (q + p)],
            DVector::from_element(q + p, f64::NEG_INFINITY),
            DVector::from_element(q + p, f64::INFINITY),
        )
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn dim(&self) -> usize {
        self.q() + self.p()
    }

    pub fn status(&self, row: usize, col: usize) -> CellStatus {
        self.status[row * self.dim() + col]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        let q = self.q();
        if col < q {
            self.x[(row, col)]
        } else {
            self.y[(row, col - q)]
        }
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.dim()).map(|c| self.value(row, c)).collect()
    }

    pub fn row_status(&self, row: usize) -> &[CellStatus] {
        let d = self.dim();
        &self.status[row * d..(row + 1) * d]
    }

    pub fn region(&self, col: usize, status: CellStatus) -> Region {
        match status {
            CellStatus::LeftCensored => Region::Below(self.lower[col]),
            CellStatus::RightCensored => Region::Above(self.upper[col]),
            _ => Region::Whole,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.n(), self.dim());
        if self.y.nrows() != n {
            return Err(Error::Shape(format!(
                "condition '{}': X has {} rows but Y has {}",
                self.name,
                n,
                self.y.nrows()
            )));
        }
        if self.status.len() != n * d {
            return Err(Error::Shape(format!(
                "condition '{}': status grid has {} cells, expected {}",
                self.name,
                self.status.len(),
                n * d
            )));
        }
        if self.lower.len() != d || self.upper.len() != d || self.variables.len() != d {
            return Err(Error::Shape(format!(
                "condition '{}': limits or names do not cover {d} variables",
                self.name
            )));
        }
        for j in 0..d {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || (l.is_finite() && u.is_finite() && l >= u) {
                return Err(Error::InvalidParameters(format!(
                    "condition '{}': limits of '{}' are not ordered ({l}, {u})",
                    self.name, self.variables[j]
                )));
            }
        }
        for i in 0..n {
            for j in 0..d {
                let v = self.value(i, j);
                let ok = match self.status(i, j) {
                    CellStatus::Observed => v.is_finite(),
                    CellStatus::MissingAtRandom => true,
                    CellStatus::LeftCensored => self.lower[j].is_finite() && v == self.lower[j],
                    CellStatus::RightCensored => self.upper[j].is_finite() && v == self.upper[j],
                };
                if !ok {
                    return Err(Error::InvalidParameters(format!(
                        "condition '{}': cell ({i}, '{}') with status {:?} holds {v}",
                        self.name,
                        self.variables[j],
                        self.status(i, j)
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn default_variable_names(q: usize, p: usize) -> Vec<String> {
    (1..=q)
        .map(|i| format!("X{i}"))
        .chain((1..=p).map(|i| format!("Y{i}")))
        .collect()
}

/// E-step output for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    /// Imputed `n x (q + p)` data.
    pub zhat: DMatrix<f64>,
    /// Second-moment matrix `n^{-1} sum E[Z Z^T | data]`.
    pub chat: DMatrix<f64>,
    /// Column means of `zhat`.
    pub zbar: DVector<f64>,
    /// Centered second moments `chat - zbar zbar^T`.
    pub s: DMatrix<f64>,
    /// Diagonal boost added by the PSD safeguard (0 when not triggered).
    pub psd_boost: f64,
    q: usize,
}

impl SufficientStats {
    fn from_moments(zhat: DMatrix<f64>, variance_sum: DVector<f64>, q: usize) -> Self {
        let n = zhat.nrows().max(1) as f64;
        let mut chat = zhat.transpose() * &zhat / n;
        for j in 0..chat.nrows() {
            chat[(j, j)] += variance_sum[j] / n;
        }
        linalg::symmetrize(&mut chat);
        let zbar = DVector::from_iterator(zhat.ncols(), zhat.column_iter().map(|c| c.sum() / n));
        let mut s = &chat - &zbar * zbar.transpose();
        linalg::symmetrize(&mut s);

        let mut psd_boost = 0.0;
        let min_eig = linalg::min_eigenvalue(&s);
        if min_eig < 0.0 {
            psd_boost = min_eig.abs() + 1e-8;
            for j in 0..s.nrows() {
                s[(j, j)] += psd_boost;
                chat[(j, j)] += psd_boost;
            }
        }
        Self {
            zhat,
            chat,
            zbar,
            s,
            psd_boost,
            q,
        }
    }

    /// Statistics of the stored values taken at face value: censored cells at
    /// their limit, missing-at-random cells replaced by the observed column mean.
    pub fn from_observed(data: &ConditionDataset) -> Self {
        let (n, d) = (data.n(), data.dim());
        let mut zhat = DMatrix::zeros(n, d);
        for j in 0..d {
            let known: Vec<f64> = (0..n)
                .filter(|&i| data.status(i, j) != CellStatus::MissingAtRandom)
                .map(|i| data.value(i, j))
                .collect();
            let fill = if known.is_empty() {
                0.0
            } else {
                known.iter().sum::<f64>() / known.len() as f64
            };
            for i in 0..n {
                zhat[(i, j)] = match data.status(i, j) {
                    CellStatus::MissingAtRandom => fill,
                    _ => data.value(i, j),
                };
            }
        }
        Self::from_moments(zhat, DVector::zeros(d), data.q())
    }

    pub fn n(&self) -> usize {
        self.zhat.nrows()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.s.nrows() - self.q
    }

    pub fn s_xx(&self) -> DMatrix<f64> {
        self.s.view((0, 0), (self.q, self.q)).into_owned()
    }

    pub fn s_xy(&self) -> DMatrix<f64> {
        self.s.view((0, self.q), (self.q, self.p())).into_owned()
    }

    pub fn s_yy(&self) -> DMatrix<f64> {
        self.s.view((self.q, self.q), (self.p(), self.p())).into_owned()
    }

    pub fn x_mean(&self) -> DVector<f64> {
        self.zbar.rows(0, self.q).into_owned()
    }

    pub fn y_mean(&self) -> DVector<f64> {
        self.zbar.rows(self.q, self.p()).into_owned()
    }
}

/// Conditional distribution of the unobserved coordinates of one missingness
/// pattern, given the observed ones.
struct PatternConditioner {
    unobserved: Vec<usize>,
    observed: Vec<usize>,
    /// `-Psi_uu^{-1} Psi_uo`
    regression: DMatrix<f64>,
    /// `diag(Psi_uu^{-1})`
    variance: Vec<f64>,
}

impl PatternConditioner {
    fn new(mask: &[bool], joint: &JointPrecision) -> Option<Self> {
        let unobserved: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
        let observed: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
        let psi_uu = joint.psi.select_rows(&unobserved).select_columns(&unobserved);
        let cov = linalg::inverse_pd(&psi_uu)?;
        let psi_uo = joint.psi.select_rows(&unobserved).select_columns(&observed);
        let regression = -(&cov * psi_uo);
        let variance = (0..unobserved.len()).map(|a| cov[(a, a)]).collect::<Vec<_>>();
        if variance.iter().any(|v| !(*v > 0.0)) {
            return None;
        }
        Some(Self {
            unobserved,
            observed,
            regression,
            variance,
        })
    }

    /// Imputes the unobserved cells of `row` in place and returns the
    /// truncated variances of those cells.
    fn impute(
        &self,
        row: &mut [f64],
        status: &[CellStatus],
        regions: impl Fn(usize, CellStatus) -> Region,
        joint: &JointPrecision,
    ) -> Result<Vec<f64>> {
        let centered: Vec<f64> = self.observed.iter().map(|&o| row[o] - joint.mean[o]).collect();
        let mut variances = Vec::with_capacity(self.unobserved.len());
        for (a, &j) in self.unobserved.iter().enumerate() {
            let shift: f64 = (0..self.observed.len())
                .map(|b| self.regression[(a, b)] * centered[b])
                .sum();
            let cond_mean = joint.mean[j] + shift;
            let (m, v) = truncated_moments_univariate(cond_mean, self.variance[a], regions(j, status[j]))?;
            row[j] = m;
            variances.push(v);
        }
        Ok(variances)
    }
}

/// Imputed row and its contribution `E[z z^T | data]` to the second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMoments {
    pub imputed: DVector<f64>,
    pub second_moment: DMatrix<f64>,
}

pub fn conditional_row_moments(
    row: &[f64],
    status: &[CellStatus],
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    params: &ModelParams,
) -> Result<RowMoments> {
    let joint = assemble_joint_precision(params)?;
    let d = joint.dim();
    if row.len() != d || status.len() != d || lower.len() != d || upper.len() != d {
        return Err(Error::Shape(format!(
            "row of length {} for a {d}-dimensional model",
            row.len()
        )));
    }
    let mask: Vec<bool> = status.iter().map(|s| !s.is_observed()).collect();
    let mut imputed = row.to_vec();
    let mut extra = vec![0.0; d];
    if mask.iter().any(|&m| m) {
        let cond = PatternConditioner::new(&mask, &joint).ok_or(Error::ConditioningFailure { row: 0 })?;
        let regions = |j: usize, s: CellStatus| match s {
            CellStatus::LeftCensored => Region::Below(lower[j]),
            CellStatus::RightCensored => Region::Above(upper[j]),
            _ => Region::Whole,
        };
        let vars = cond.impute(&mut imputed, status, regions, &joint)?;
        for (&j, v) in cond.unobserved.iter().zip(vars) {
            extra[j] = v;
        }
    }
    let imputed = DVector::from_vec(imputed);
    let mut second_moment = &imputed * imputed.transpose();
    for j in 0..d {
        second_moment[(j, j)] += extra[j];
    }
    Ok(RowMoments { imputed, second_moment })
}

pub fn compute_sufficient_stats(data: &ConditionDataset, params: &ModelParams) -> Result<SufficientStats> {
    let joint = assemble_joint_precision(params)?;
    let (n, d) = (data.n(), data.dim());
    if joint.dim() != d || joint.q != data.q() {
        return Err(Error::Shape(format!(
            "condition '{}' has (q, p) = ({}, {}), parameters have ({}, {})",
            data.name,
            data.q(),
            data.p(),
            params.q(),
            params.p()
        )));
    }

    let mut patterns: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let mask: Vec<bool> = data.row_status(i).iter().map(|s| !s.is_observed()).collect();
        patterns.entry(mask).or_default().push(i);
    }

    let groups: Vec<(Vec<bool>, Vec<usize>)> = patterns.into_iter().collect();
    let imputed: Vec<Vec<(usize, Vec<f64>, Vec<(usize, f64)>)>> = groups
        .par_iter()
        .map(|(mask, rows)| -> Result<_> {
            if !mask.iter().any(|&m| m) {
                return Ok(rows.iter().map(|&i| (i, data.row(i), Vec::new())).collect());
            }
            let cond = PatternConditioner::new(mask, &joint).ok_or(Error::ConditioningFailure { row: rows[0] })?;
            rows.iter()
                .map(|&i| {
                    let mut row = data.row(i);
                    let vars = cond
                        .impute(&mut row, data.row_status(i), |j, s| data.region(j, s), &joint)
                        .map_err(|e| match e {
                            Error::InvalidParameters(_) => Error::ConditioningFailure { row: i },
                            other => other,
                        })?;
                    Ok((i, row, cond.unobserved.iter().copied().zip(vars).collect()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut zhat = DMatrix::zeros(n, d);
    let mut var_rows = vec![Vec::new(); n];
    for (i, row, vars) in imputed.into_iter().flatten() {
        for j in 0..d {
            zhat[(i, j)] = row[j];
        }
        var_rows[i] = vars;
    }
    // Row-ordered reduction keeps the result independent of the thread count.
    let mut variance_sum = DVector::zeros(d);
    for vars in &var_rows {
        for &(j, v) in vars {
            variance_sum[j] += v;
        }
    }
    Ok(SufficientStats::from_moments(zhat, variance_sum, data.q()))
}

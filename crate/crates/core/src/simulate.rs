//! Synthetic multi-condition data with banded precision matrices, right
//! censoring of responses and missing-at-random covariates, plus the support
//! recovery metrics used to score estimates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estep::{CellStatus, ConditionDataset};
use crate::linalg;

/// Smallest eigenvalue allowed for generated precision matrices.
const MIN_EIGENVALUE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub k: usize,
    pub n_k: usize,
    pub p: usize,
    pub q: usize,
    /// Fraction of responses subject to right censoring (the first ones).
    pub censored_fraction_y: f64,
    /// Fraction of covariates with cells missing at random (the first ones).
    pub mar_fraction_x: f64,
    /// Per-cell probability of censoring / deletion for affected variables.
    pub event_probability: f64,
    pub censor_value: f64,
    pub seed: u64,
    /// Spacing between hub nodes of the band.
    pub band_step: usize,
    /// Number of neighbours each hub is linked to.
    pub band_width: usize,
    pub band_low: f64,
    pub band_high: f64,
    pub coef_rows: usize,
    pub coef_low: f64,
    pub coef_high: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n_k: 100,
            p: 50,
            q: 0,
            censored_fraction_y: 0.2,
            mar_fraction_x: 0.0,
            event_probability: 0.40,
            censor_value: 40.0,
            seed: 1,
            band_step: 5,
            band_width: 4,
            band_low: 0.30,
            band_high: 0.50,
            coef_rows: 2,
            coef_low: 0.30,
            coef_high: 0.70,
        }
    }
}

impl ScenarioConfig {
    /// The four simulation settings of the benchmark table (no covariates):
    /// p = 50 with 10 or 20 censored responses, p = 200 with 40 or 80.
    pub fn table_scenario(index: usize) -> Option<Self> {
        let (p, m) = match index {
            1 => (50, 10),
            2 => (50, 20),
            3 => (200, 40),
            4 => (200, 80),
            _ => return None,
        };
        Some(Self {
            p,
            censored_fraction_y: m as f64 / p as f64,
            ..Self::default()
        })
    }

    /// Reduced-size variant between the small and the large settings.
    pub fn reduced_p100() -> Self {
        Self {
            p: 100,
            censored_fraction_y: 0.2,
            ..Self::default()
        }
    }

    pub fn censored_count(&self) -> usize {
        (self.censored_fraction_y * self.p as f64).round() as usize
    }

    pub fn mar_count(&self) -> usize {
        (self.mar_fraction_x * self.q as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidConfig(format!("{field}: {why}")));
        if self.k == 0 {
            return bad("k", "must be at least 1");
        }
        if self.n_k < 2 {
            return bad("n_k", "must be at least 2");
        }
        if self.p == 0 {
            return bad("p", "must be at least 1");
        }
        for (name, v) in [
            ("censored_fraction_y", self.censored_fraction_y),
            ("mar_fraction_x", self.mar_fraction_x),
            ("event_probability", self.event_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(name, "must lie in [0, 1]");
            }
        }
        if self.event_probability >= 1.0 && self.censored_fraction_y > 0.0 {
            return bad("event_probability", "must be below 1 when responses are censored");
        }
        if !self.censor_value.is_finite() {
            return bad("censor_value", "must be finite");
        }
        if self.band_step == 0 {
            return bad("band_step", "must be at least 1");
        }
        if !(self.band_low <= self.band_high) || !(self.coef_low <= self.coef_high) {
            return bad("band_low/coef_low", "ranges must be ordered");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub omegas: Vec<DMatrix<f64>>,
    pub thetas: Vec<DMatrix<f64>>,
    pub bs: Vec<DMatrix<f64>>,
    /// Intercepts of Y given X.
    pub intercepts: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
    /// Diagonal boosts applied to reach the eigenvalue floor.
    pub omega_boosts: Vec<f64>,
    pub theta_boosts: Vec<f64>,
}

impl GroundTruth {
    pub fn theta_support(&self) -> Vec<DMatrix<bool>> {
        self.thetas.iter().map(|m| m.map(|v| v != 0.0)).collect()
    }

    pub fn omega_support(&self) -> Vec<DMatrix<bool>> {
        self.omegas.iter().map(|m| m.map(|v| v != 0.0)).collect()
    }

    pub fn b_support(&self) -> Vec<DMatrix<bool>> {
        self.bs.iter().map(|m| m.map(|v| v != 0.0)).collect()
    }
}

/// Edges `(h, h + j)` for hubs `h = 0, step, 2 step, ...` with `h + width < d`.
pub fn band_edges(d: usize, step: usize, width: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    let mut h = 0;
    while h + width < d {
        for j in 1..=width {
            edges.push((h, h + j));
        }
        h += step;
    }
    edges
}

fn band_matrices(d: usize, cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let edges = band_edges(d, cfg.band_step, cfg.band_width);
    let dist = Uniform::new_inclusive(cfg.band_low, cfg.band_high).expect("ordered band range");
    (0..cfg.k)
        .map(|_| {
            let mut m = DMatrix::identity(d, d);
            for &(a, b) in &edges {
                let v = dist.sample(rng);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
            let min = linalg::min_eigenvalue(&m);
            let boost = if min < MIN_EIGENVALUE {
                MIN_EIGENVALUE - min
            } else {
                0.0
            };
            for i in 0..d {
                m[(i, i)] += boost;
            }
            (m, boost)
        })
        .unzip()
}

/// Draws `n` rows from `N(0, precision^{-1})`.
fn draw_gaussian(precision: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = precision.nrows();
    let chol = precision
        .clone()
        .cholesky()
        .expect("generated precision is positive definite");
    let upper = chol.l().transpose();
    let z = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(rng));
    // precision = L L^T, so x = L^{-T} z has covariance precision^{-1}
    let x = upper
        .solve_upper_triangular(&z)
        .expect("triangular factor is nonsingular");
    x.transpose()
}

/// Quantile with upper-tail mass `prob`.
fn upper_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - prob)
}

/// Generates one replicate. Each replicate draws from its own stream of the
/// seeded generator, so replicates are reproducible independently.
pub fn generate(cfg: &ScenarioConfig, replicate: u64) -> Result<(Vec<ConditionDataset>, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replicate);
    let (p, q, n) = (cfg.p, cfg.q, cfg.n_k);

    let (thetas, theta_boosts) = band_matrices(p, cfg, &mut rng);
    let (omegas, omega_boosts) = band_matrices(q, cfg, &mut rng);
    let coef = Uniform::new_inclusive(cfg.coef_low, cfg.coef_high).expect("ordered coefficient range");
    let bs: Vec<DMatrix<f64>> = (0..cfg.k)
        .map(|_| DMatrix::from_fn(q, p, |i, _| if i < cfg.coef_rows { coef.sample(&mut rng) } else { 0.0 }))
        .collect();

    let censored = cfg.censored_count();
    let mar = cfg.mar_count();
    let z = upper_quantile(cfg.event_probability);
    let names = crate::estep::default_variable_names(q, p);

    let mut datasets = Vec::with_capacity(cfg.k);
    let mut intercepts = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let theta_inv = linalg::inverse_pd(&thetas[k]).expect("generated precision is positive definite");
        let omega_inv = linalg::inverse_pd(&omegas[k]).expect("generated precision is positive definite");
        let marginal = bs[k].transpose() * omega_inv * &bs[k] + theta_inv;
        let beta0 = DVector::from_fn(p, |j, _| {
            if j < censored {
                cfg.censor_value - z * marginal[(j, j)].sqrt()
            } else {
                0.0
            }
        });

        let mut x = draw_gaussian(&omegas[k], n, &mut rng);
        let mut y = draw_gaussian(&thetas[k], n, &mut rng) + &x * &bs[k];
        for i in 0..n {
            for j in 0..p {
                y[(i, j)] += beta0[j];
            }
        }

        let d = q + p;
        let mut status = vec![CellStatus::Observed; n * d];
        for i in 0..n {
            for j in 0..mar {
                if rng.random::<f64>() < cfg.event_probability {
                    status[i * d + j] = CellStatus::MissingAtRandom;
                    x[(i, j)] = f64::NAN;
                }
            }
            for j in 0..censored {
                if y[(i, j)] >= cfg.censor_value {
                    status[i * d + q + j] = CellStatus::RightCensored;
                    y[(i, j)] = cfg.censor_value;
                }
            }
        }
        let lower = DVector::from_element(d, f64::NEG_INFINITY);
        let upper = DVector::from_fn(d, |j, _| {
            if j >= q && j - q < censored {
                cfg.censor_value
            } else {
                f64::INFINITY
            }
        });
        datasets.push(ConditionDataset::new(
            format!("condition{}", k + 1),
            names.clone(),
            x,
            y,
            status,
            lower,
            upper,
        )?);
        intercepts.push(beta0);
    }

    Ok((
        datasets,
        GroundTruth {
            omegas,
            thetas,
            bs,
            intercepts,
            mu: vec![DVector::zeros(q); cfg.k],
            omega_boosts,
            theta_boosts,
        },
    ))
}

/// Support recovery and estimation error for one matrix family.
/// `precision` and `recall` are `None` when no condition defines them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mse: f64,
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Averages over conditions. With `symmetric` set the support is the strict
/// upper triangle; otherwise every entry counts.
pub fn evaluate(estimates: &[DMatrix<f64>], truth: &[DMatrix<f64>], symmetric: bool) -> Result<Metrics> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::Shape(
            "estimates and truth must have the same non-zero length".into(),
        ));
    }
    let mut precisions = Vec::with_capacity(truth.len());
    let mut recalls = Vec::with_capacity(truth.len());
    let mut sq = 0.0;
    for (est, tru) in estimates.iter().zip(truth) {
        if est.shape() != tru.shape() {
            return Err(Error::Shape(format!(
                "estimate {:?} vs truth {:?}",
                est.shape(),
                tru.shape()
            )));
        }
        let (mut tp, mut est_nz, mut true_nz) = (0usize, 0usize, 0usize);
        for i in 0..est.nrows() {
            let start = if symmetric { i + 1 } else { 0 };
            for j in start..est.ncols() {
                let e = est[(i, j)] != 0.0;
                let t = tru[(i, j)] != 0.0;
                est_nz += usize::from(e);
                true_nz += usize::from(t);
                tp += usize::from(e && t);
            }
        }
        precisions.push((est_nz > 0).then(|| tp as f64 / est_nz as f64));
        recalls.push((true_nz > 0).then(|| tp as f64 / true_nz as f64));
        sq += (est - tru).iter().map(|v| v * v).sum::<f64>();
    }
    Ok(Metrics {
        precision: mean_defined(&precisions),
        recall: mean_defined(&recalls),
        mse: sq / truth.len() as f64,
    })
}

/// Area under the precision-recall curve traced by a path of estimates,
/// normalized by the recall range the path covers. Points with undefined
/// precision or recall are dropped; the trapezoid rule runs over the points
/// sorted by recall (ties by decreasing precision).
pub fn auc_pr(path: &[Vec<DMatrix<f64>>], truth: &[DMatrix<f64>], symmetric: bool) -> Result<f64> {
    let mut points = Vec::with_capacity(path.len());
    for est in path {
        let m = evaluate(est, truth, symmetric)?;
        if let (Some(p), Some(r)) = (m.precision, m.recall) {
            points.push((r, p));
        }
    }
    auc_from_points(points)
}

pub fn auc_from_points(mut points: Vec<(f64, f64)>) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::DegeneratePath(format!("{} usable path points", points.len())));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let span = points[points.len() - 1].0 - points[0].0;
    if !(span > 0.0) {
        return Err(Error::DegeneratePath("every path point has the same recall".into()));
    }
    let area: f64 = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum();
    Ok(area / span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_pattern_p10() {
        let edges = band_edges(10, 5, 4);
        let expected: Vec<(usize, usize)> = [0usize, 5]
            .iter()
            .flat_map(|&h| (1..=4).map(move |j| (h, h + j)))
            .collect();
        assert_eq!(edges, expected);
    }

    #[test]
    fn zero_fractions_give_complete_data() {
        let cfg = ScenarioConfig {
            p: 10,
            q: 3,
            censored_fraction_y: 0.0,
            mar_fraction_x: 0.0,
            ..ScenarioConfig::default()
        };
        let (data, _) = generate(&cfg, 0).unwrap();
        assert!(data.iter().all(|d| d.status.iter().all(|s| *s == CellStatus::Observed)));
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = ScenarioConfig {
            p: 10,
            q: 2,
            mar_fraction_x: 0.5,
            ..ScenarioConfig::default()
        };
        let a = generate(&cfg, 3).unwrap();
        let b = generate(&cfg, 3).unwrap();
        assert_eq!(a.1, b.1);
        for (x, y) in a.0.iter().zip(&b.0) {
            assert_eq!(x.status, y.status);
            assert_eq!(x.y, y.y);
        }
        let c = generate(&cfg, 4).unwrap();
        assert_ne!(a.0[0].y, c.0[0].y);
    }

    #[test]
    fn exact_estimate_scores_perfectly() {
        let cfg = ScenarioConfig {
            p: 10,
            ..ScenarioConfig::default()
        };
        let (_, truth) = generate(&cfg, 0).unwrap();
        let m = evaluate(&truth.thetas, &truth.thetas, true).unwrap();
        assert_eq!((m.precision, m.recall, m.mse), (Some(1.0), Some(1.0), 0.0));
    }

    #[test]
    fn constant_precision_rectangle() {
        let auc = auc_from_points(vec![(0.2, 0.6), (0.5, 0.6), (1.0, 0.6)]).unwrap();
        assert!((auc - 0.6).abs() < 1e-15);
        assert!(auc_from_points(vec![(0.5, 0.6), (0.5, 0.9)]).is_err());
    }
}

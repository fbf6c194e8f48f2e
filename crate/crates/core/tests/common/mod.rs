#![allow(dead_code)]

use jcglasso::estep::default_variable_names;
use jcglasso::{CellStatus, ConditionDataset, DMatrix, DVector, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

pub fn random_pd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = gaussian_matrix(d, d, rng) * 0.4;
    &a * a.transpose() + DMatrix::identity(d, d)
}

pub fn random_symmetric(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = gaussian_matrix(d, d, rng);
    (&a + a.transpose()) * 0.5
}

/// Sample covariance of `n` draws, with the `1/n` divisor around zero.
pub fn sample_cov(d: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let z = gaussian_matrix(n, d, rng);
    z.transpose() * &z / n as f64
}

pub fn random_params(q: usize, p: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    ModelParams {
        mu: DVector::from_fn(q, |_, _| normal(rng)),
        xi: DVector::from_fn(p, |_, _| normal(rng)),
        omega: random_pd(q, rng),
        b: gaussian_matrix(q, p, rng) * 0.5,
        theta: random_pd(p, rng),
    }
}

/// Rows of `N(mean, precision^{-1})`.
pub fn draw_rows(n: usize, mean: &DVector<f64>, precision: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = mean.len();
    let upper = precision.clone().cholesky().expect("PD").l().transpose();
    let z = upper
        .solve_upper_triangular(&gaussian_matrix(d, n, rng))
        .expect("triangular solve");
    let mut out = z.transpose();
    for mut row in out.row_iter_mut() {
        row += mean.transpose();
    }
    out
}

/// Data from the conditional model with the responses right-censored at
/// their `1 - censor_fraction` empirical quantile.
pub fn censored_condition(
    name: &str,
    params: &ModelParams,
    n: usize,
    censor_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> ConditionDataset {
    let (q, p) = (params.q(), params.p());
    let x = draw_rows(n, &params.mu, &params.omega, rng);
    let noise = draw_rows(n, &DVector::zeros(p), &params.theta, rng);
    let intercept = params.intercept();
    let mut y = &x * &params.b + noise;
    for mut row in y.row_iter_mut() {
        row += intercept.transpose();
    }
    let d = q + p;
    let mut status = vec![CellStatus::Observed; n * d];
    let mut upper = DVector::from_element(d, f64::INFINITY);
    if censor_fraction > 0.0 {
        for j in 0..p {
            let mut col: Vec<f64> = y.column(j).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            let cut = col[((1.0 - censor_fraction) * n as f64) as usize];
            upper[q + j] = cut;
            for i in 0..n {
                if y[(i, j)] >= cut {
                    y[(i, j)] = cut;
                    status[i * d + q + j] = CellStatus::RightCensored;
                }
            }
        }
    }
    ConditionDataset::new(
        name,
        default_variable_names(q, p),
        x,
        y,
        status,
        DVector::from_element(d, f64::NEG_INFINITY),
        upper,
    )
    .expect("valid dataset")
}

/// K conditions sharing dimensions `q <= 5`, `p` in `2..=5`.
pub fn random_instance(seed: u64, k: usize, n: usize, censor_fraction: f64) -> Vec<ConditionDataset> {
    let mut rng = rng(seed);
    let p = rng.random_range(2..=5);
    let q = rng.random_range(1..=5);
    (0..k)
        .map(|c| {
            let mut params = random_params(q, p, &mut rng);
            params.mu.fill(0.0);
            params.xi.fill(0.0);
            for v in params.b.iter_mut() {
                if rng.random::<f64>() < 0.5 {
                    *v = 0.0;
                }
            }
            censored_condition(&format!("c{c}"), &params, n, censor_fraction, &mut rng)
        })
        .collect()
}

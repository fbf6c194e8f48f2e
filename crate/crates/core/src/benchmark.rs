//! Replicate study comparing the censored-data fit against the baseline that
//! takes censored values at their detection limit (no E-step).

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::em::{fit, FitConfig};
use crate::error::Result;
use crate::estep::{compute_sufficient_stats, ConditionDataset, SufficientStats};
use crate::model::{condition_weights, PenaltyKind};
use crate::select::rho_max;
use crate::simulate::{auc_pr, evaluate, generate, GroundTruth, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Jcglasso,
    /// Censored values at the limit of detection, E-step disabled.
    LimitBaseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Jcglasso => "jcglasso",
            Method::LimitBaseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub scenario: ScenarioConfig,
    pub replicates: usize,
    pub alpha2: f64,
    /// Decreasing `rho / rho_max` path.
    pub rho_ratios: Vec<f64>,
    /// Ratios at which the estimation error is reported; must be on the path.
    pub report_ratios: Vec<f64>,
    pub fit: FitConfig,
}

impl BenchmarkConfig {
    pub fn new(scenario: ScenarioConfig, replicates: usize) -> Self {
        Self {
            scenario,
            replicates,
            alpha2: 0.5,
            rho_ratios: (0..20).map(|i| 1.0 - 0.05 * i as f64).collect(),
            report_ratios: vec![0.10, 0.25, 0.50, 0.75, 1.00],
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub method: Method,
    pub auc: f64,
    /// MSE of the conditional precisions at each report ratio.
    pub mse: Vec<f64>,
    pub rho_max: f64,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub auc: Summary,
    pub mse: Vec<Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub outcomes: Vec<ReplicateOutcome>,
    pub summaries: Vec<MethodSummary>,
}

impl BenchmarkReport {
    pub fn outcomes_for(&self, method: Method) -> Vec<&ReplicateOutcome> {
        self.outcomes.iter().filter(|o| o.method == method).collect()
    }
}

fn initial_stats(datasets: &[ConditionDataset], config: &FitConfig) -> Result<Vec<SufficientStats>> {
    if config.estep {
        let init = crate::em::initialize(datasets)?;
        datasets
            .iter()
            .zip(&init)
            .map(|(d, p)| compute_sufficient_stats(d, p))
            .collect()
    } else {
        Ok(datasets.iter().map(SufficientStats::from_observed).collect())
    }
}

/// Fits the group-penalized path over `rho_ratios * rho_max`, where
/// `rho_max` comes from the method's own initial statistics.
pub fn run_path(
    datasets: &[ConditionDataset],
    truth: &GroundTruth,
    method: Method,
    config: &BenchmarkConfig,
) -> Result<(Vec<Vec<DMatrix<f64>>>, f64, bool)> {
    let mut fit_cfg = config.fit.clone();
    fit_cfg.estep = method == Method::Jcglasso;
    fit_cfg.fixed_omega = false;
    fit_cfg.penalty.alpha2 = config.alpha2;
    fit_cfg.penalty.theta_penalty_kind = PenaltyKind::Group;
    fit_cfg.penalty.lambda = 0.0;
    fit_cfg.penalty.nu = 0.0;

    let sizes: Vec<usize> = datasets.iter().map(ConditionDataset::n).collect();
    let stats = initial_stats(datasets, &fit_cfg)?;
    let rmax = rho_max(&stats, &condition_weights(&sizes), PenaltyKind::Group);

    let mut path = Vec::with_capacity(config.rho_ratios.len());
    let mut warm = None;
    let mut all_converged = true;
    for &ratio in &config.rho_ratios {
        fit_cfg.penalty.rho = ratio * rmax;
        let res = fit(datasets, &fit_cfg, warm.as_deref())?;
        all_converged &= res.converged;
        path.push(res.thetas());
        warm = Some(res.params);
    }
    debug_assert_eq!(truth.thetas.len(), datasets.len());
    Ok((path, rmax, all_converged))
}

fn score(path: &[Vec<DMatrix<f64>>], truth: &GroundTruth, config: &BenchmarkConfig) -> Result<(f64, Vec<f64>)> {
    let auc = auc_pr(path, &truth.thetas, true)?;
    let mut mse = Vec::with_capacity(config.report_ratios.len());
    for &target in &config.report_ratios {
        let idx = config
            .rho_ratios
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        mse.push(evaluate(&path[idx], &truth.thetas, true)?.mse);
    }
    Ok((auc, mse))
}

pub fn run_replicate(config: &BenchmarkConfig, replicate: usize, methods: &[Method]) -> Result<Vec<ReplicateOutcome>> {
    let (data, truth) = generate(&config.scenario, replicate as u64)?;
    methods
        .iter()
        .map(|&method| {
            let (path, rmax, all_converged) = run_path(&data, &truth, method, config)?;
            let (auc, mse) = score(&path, &truth, config)?;
            Ok(ReplicateOutcome {
                replicate,
                method,
                auc,
                mse,
                rho_max: rmax,
                all_converged,
            })
        })
        .collect()
}

pub fn run_benchmark(config: &BenchmarkConfig, methods: &[Method]) -> Result<BenchmarkReport> {
    config.scenario.validate()?;
    config.fit.validate()?;
    let per_rep: Vec<Vec<ReplicateOutcome>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r, methods))
        .collect::<Result<_>>()?;
    let outcomes: Vec<ReplicateOutcome> = per_rep.into_iter().flatten().collect();
    let summaries = methods
        .iter()
        .map(|&method| {
            let own: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.method == method).collect();
            let aucs: Vec<f64> = own.iter().map(|o| o.auc).collect();
            let mse = (0..config.report_ratios.len())
                .map(|i| Summary::of(&own.iter().map(|o| o.mse[i]).collect::<Vec<_>>()))
                .collect();
            MethodSummary {
                method,
                auc: Summary::of(&aucs),
                mse,
            }
        })
        .collect();
    Ok(BenchmarkReport {
        config: config.clone(),
        outcomes,
        summaries,
    })
}

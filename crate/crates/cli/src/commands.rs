use std::fs;
use std::path::{Path, PathBuf};

use jcglasso::benchmark::{run_benchmark, Method};
use jcglasso::select::{linear_grid, path_maxima, PathGrid, PathMaxima};
use jcglasso::{fit, fit_path, generate, ConditionDataset, FitResult};

use crate::config::Settings;
use crate::io::{read_datasets, write_datasets, InputSpec};
use crate::output::{render_json, truth_document, write_benchmark_outputs, write_fit_outputs, write_path_outputs};
use crate::CliError;

pub struct DataArgs {
    pub data: Vec<PathBuf>,
    pub roles: PathBuf,
    pub limits: Option<PathBuf>,
    pub censor_at_limits: bool,
}

impl DataArgs {
    pub fn load(&self) -> Result<Vec<ConditionDataset>, CliError> {
        read_datasets(&InputSpec {
            data: &self.data,
            roles: &self.roles,
            limits: self.limits.as_deref(),
            censor_at_limits: self.censor_at_limits,
        })
    }
}

pub struct Options {
    pub settings: Settings,
    pub out: PathBuf,
    pub verbose: bool,
    pub strict: bool,
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))
}

fn report(opts: &Options, converged: bool, diagnostics: &[String]) -> Result<(), CliError> {
    if opts.verbose {
        for d in diagnostics {
            eprintln!("{d}");
        }
    }
    if opts.strict && !converged {
        return Err(CliError::Convergence(format!(
            "fit did not converge ({} diagnostics)",
            diagnostics.len()
        )));
    }
    Ok(())
}

pub fn run_fit(data: &DataArgs, opts: &Options) -> Result<FitResult, CliError> {
    let datasets = data.load()?;
    prepare_out(&opts.out)?;
    let cfg = &opts.settings.fit;
    let result = fit(&datasets, cfg, None)?;
    write_fit_outputs(&opts.out, &result, &datasets, cfg)?;
    if opts.verbose {
        eprintln!(
            "em iterations {}, objective {:.6e}, bic_total {:.6e}",
            result.em_iterations, result.objective, result.bic.bic_total
        );
    }
    report(opts, result.converged, &result.diagnostics)?;
    Ok(result)
}

pub fn path_grid(datasets: &[ConditionDataset], settings: &Settings) -> Result<PathGrid, CliError> {
    let g = &settings.grid;
    let maxima = if g.nu.is_some() && g.lambda.is_some() && g.rho.is_some() {
        None
    } else {
        Some(path_maxima(datasets, &settings.fit)?)
    };
    let pick = |given: &Option<Vec<f64>>, max: fn(&PathMaxima) -> f64, ratio: f64, len: usize| match given {
        Some(v) => v.clone(),
        None => linear_grid(maxima.as_ref().map_or(0.0, max), ratio, len),
    };
    Ok(PathGrid {
        nu: pick(&g.nu, |m| m.nu, g.nu_min_ratio, g.nu_count),
        lambda: pick(&g.lambda, |m| m.lambda, g.lambda_min_ratio, g.lambda_count),
        rho: pick(&g.rho, |m| m.rho, g.rho_min_ratio, g.rho_count),
    })
}

pub fn run_path(data: &DataArgs, opts: &Options) -> Result<(), CliError> {
    let datasets = data.load()?;
    prepare_out(&opts.out)?;
    let grid = path_grid(&datasets, &opts.settings)?;
    let path = fit_path(&datasets, &grid, &opts.settings.fit)?;
    write_path_outputs(&opts.out, &path, &datasets, &opts.settings.fit)?;
    if opts.verbose {
        eprintln!(
            "selected nu {:.6e}, lambda {:.6e}, rho {:.6e}",
            path.selected_nu, path.selected_lambda, path.selected_rho
        );
    }
    let converged = path.nu_path.iter().all(|p| p.converged) && path.surface.iter().all(|p| p.converged);
    let mut diagnostics = path.diagnostics.clone();
    diagnostics.extend(path.fit.diagnostics.iter().cloned());
    report(opts, converged, &diagnostics)
}

pub fn run_simulate(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let sc = &opts.settings.scenario;
    sc.validate()?;
    prepare_out(&opts.out)?;
    let (datasets, truth) = generate(sc, opts.settings.replicate)?;
    let paths = write_datasets(&opts.out, &datasets)?;
    fs::write(
        opts.out.join("truth.json"),
        render_json(&truth_document(&truth, &datasets)),
    )
    .map_err(|e| CliError::Internal(e.to_string()))?;
    if opts.verbose {
        eprintln!("wrote {} conditions to {}", paths.len(), opts.out.display());
    }
    Ok(paths)
}

pub fn run_bench(opts: &Options) -> Result<(), CliError> {
    let cfg = opts.settings.benchmark();
    cfg.scenario.validate()?;
    prepare_out(&opts.out)?;
    let report_data = run_benchmark(&cfg, &[Method::Jcglasso, Method::LimitBaseline])?;
    write_benchmark_outputs(&opts.out, &report_data)?;
    if opts.verbose {
        for s in &report_data.summaries {
            eprintln!("{}: auc {:.3} ({:.3})", s.method.name(), s.auc.mean, s.auc.se);
        }
    }
    let converged = report_data.outcomes.iter().all(|o| o.all_converged);
    report(opts, converged, &[])
}

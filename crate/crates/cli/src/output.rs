//! Structured fit documents, edge lists and tables.

use std::fs;
use std::path::Path;

use jcglasso::benchmark::BenchmarkReport;
use jcglasso::select::{BicSummary, PathResult};
use jcglasso::{ConditionDataset, DMatrix, DVector, FitConfig, FitResult};
use serde_json::{Map, Number, Value};

use crate::io::fmt_f64;
use crate::CliError;

pub fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(fmt_f64(v).parse::<Number>().expect("formatted float is valid JSON"))
    } else {
        Value::Null
    }
}

fn vector(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect()))
            .collect(),
    )
}

fn strings(items: &[String]) -> Value {
    Value::Array(items.iter().cloned().map(Value::String).collect())
}

fn object(pairs: Vec<(&str, Value)>) -> Value {
    let mut map = Map::new();
    for (k, v) in pairs {
        map.insert(k.to_string(), v);
    }
    Value::Object(map)
}

fn bic_json(b: &BicSummary) -> Value {
    object(vec![
        ("bic_x", num(b.bic_x)),
        ("bic_y_given_x", num(b.bic_y_given_x)),
        ("bic_total", num(b.bic_total)),
        ("df_x", Value::from(b.df_x)),
        ("df_y_given_x", Value::from(b.df_y_given_x)),
    ])
}

fn config_json(cfg: &FitConfig) -> Value {
    let p = &cfg.penalty;
    object(vec![
        ("lambda", num(p.lambda)),
        ("rho", num(p.rho)),
        ("nu", num(p.nu)),
        ("alpha1", num(p.alpha1)),
        ("alpha2", num(p.alpha2)),
        ("alpha3", num(p.alpha3)),
        ("theta_penalty", Value::String(p.theta_penalty_kind.to_string())),
        ("omega_penalty", Value::String(p.omega_penalty_kind.to_string())),
        ("em_tol", num(cfg.em_tol)),
        ("em_max_iter", Value::from(cfg.em_max_iter)),
        ("inner_tol", num(cfg.inner_tol)),
        ("inner_max_iter", Value::from(cfg.inner_max_iter)),
        ("tau", num(cfg.tau)),
        ("jgl_tol", num(cfg.jgl_tol)),
        ("jgl_max_iter", Value::from(cfg.jgl_max_iter)),
        ("multilasso_tol", num(cfg.multilasso_tol)),
        ("multilasso_max_iter", Value::from(cfg.multilasso_max_iter)),
        ("estep", Value::Bool(cfg.estep)),
        ("fixed_omega", Value::Bool(cfg.fixed_omega)),
    ])
}

pub fn fit_document(fit: &FitResult, datasets: &[ConditionDataset], cfg: &FitConfig) -> Value {
    let first = &datasets[0];
    let q = first.q();
    let covariates = first.variables[..q].to_vec();
    let responses = first.variables[q..].to_vec();
    let estimates = fit
        .params
        .iter()
        .zip(datasets)
        .map(|(par, ds)| {
            object(vec![
                ("condition", Value::String(ds.name.clone())),
                ("n", Value::from(ds.n())),
                ("mu", vector(&par.mu)),
                ("xi", vector(&par.xi)),
                ("intercept", vector(&par.intercept())),
                ("omega", matrix(&par.omega)),
                ("b", matrix(&par.b)),
                ("theta", matrix(&par.theta)),
            ])
        })
        .collect();
    object(vec![
        (
            "conditions",
            strings(&datasets.iter().map(|d| d.name.clone()).collect::<Vec<_>>()),
        ),
        ("covariates", strings(&covariates)),
        ("responses", strings(&responses)),
        ("config", config_json(cfg)),
        (
            "q",
            object(vec![
                ("q_x", num(fit.q.q_x)),
                ("q_y_given_x", num(fit.q.q_y_given_x)),
                ("total", num(fit.q.total())),
            ]),
        ),
        ("objective", num(fit.objective)),
        ("bic", bic_json(&fit.bic)),
        ("em_iterations", Value::from(fit.em_iterations)),
        ("converged", Value::Bool(fit.converged)),
        ("q_trace", Value::Array(fit.q_trace.iter().map(|&v| num(v)).collect())),
        ("diagnostics", strings(&fit.diagnostics)),
        ("estimates", Value::Array(estimates)),
    ])
}

pub fn render_json(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

/// `-a_hm / sqrt(a_hh a_mm)` for every nonzero upper-triangle entry.
pub fn edge_list(m: &DMatrix<f64>, names: &[String], condition: &str) -> String {
    let mut out = String::from("node_a,node_b,partial_correlation,condition\n");
    for h in 0..m.nrows() {
        for k in (h + 1)..m.ncols() {
            if m[(h, k)] != 0.0 {
                let pc = -m[(h, k)] / (m[(h, h)] * m[(k, k)]).sqrt();
                out.push_str(&format!("{},{},{},{}\n", names[h], names[k], fmt_f64(pc), condition));
            }
        }
    }
    out
}

pub fn coefficient_table(fit: &FitResult, datasets: &[ConditionDataset]) -> String {
    let mut out = String::from("condition,covariate,response,coefficient\n");
    let q = datasets[0].q();
    for (par, ds) in fit.params.iter().zip(datasets) {
        let intercept = par.intercept();
        for (h, resp) in ds.variables[q..].iter().enumerate() {
            out.push_str(&format!("{},(intercept),{},{}\n", ds.name, resp, fmt_f64(intercept[h])));
        }
        for (j, cov) in ds.variables[..q].iter().enumerate() {
            for (h, resp) in ds.variables[q..].iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", ds.name, cov, resp, fmt_f64(par.b[(j, h)])));
            }
        }
    }
    out
}

pub fn write_fit_outputs(
    dir: &Path,
    fit: &FitResult,
    datasets: &[ConditionDataset],
    cfg: &FitConfig,
) -> Result<(), CliError> {
    write(&dir.join("fit.json"), &render_json(&fit_document(fit, datasets, cfg)))?;
    let q = datasets[0].q();
    for (par, ds) in fit.params.iter().zip(datasets) {
        write(
            &dir.join(format!("edges_theta_{}.csv", ds.name)),
            &edge_list(&par.theta, &ds.variables[q..], &ds.name),
        )?;
        write(
            &dir.join(format!("edges_omega_{}.csv", ds.name)),
            &edge_list(&par.omega, &ds.variables[..q], &ds.name),
        )?;
    }
    write(&dir.join("coefficients.csv"), &coefficient_table(fit, datasets))
}

const BIC_COLUMNS: &str = "bic_x,bic_y_given_x,bic_total,df_x,df_y_given_x,converged";

fn bic_cells(b: &BicSummary, converged: bool) -> String {
    format!(
        "{},{},{},{},{},{}",
        fmt_f64(b.bic_x),
        fmt_f64(b.bic_y_given_x),
        fmt_f64(b.bic_total),
        b.df_x,
        b.df_y_given_x,
        converged
    )
}

pub fn write_path_outputs(
    dir: &Path,
    path: &PathResult,
    datasets: &[ConditionDataset],
    cfg: &FitConfig,
) -> Result<(), CliError> {
    let mut nu = format!("nu,{BIC_COLUMNS}\n");
    for p in &path.nu_path {
        nu.push_str(&format!("{},{}\n", fmt_f64(p.nu), bic_cells(&p.bic, p.converged)));
    }
    write(&dir.join("bic_nu.csv"), &nu)?;
    let mut grid = format!("lambda,rho,{BIC_COLUMNS}\n");
    for p in &path.surface {
        grid.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(p.lambda),
            fmt_f64(p.rho),
            bic_cells(&p.bic, p.converged)
        ));
    }
    write(&dir.join("bic_lambda_rho.csv"), &grid)?;
    let selection = object(vec![
        ("nu", num(path.selected_nu)),
        ("lambda", num(path.selected_lambda)),
        ("rho", num(path.selected_rho)),
        ("diagnostics", strings(&path.diagnostics)),
    ]);
    write(&dir.join("selection.json"), &render_json(&selection))?;
    let mut selected_cfg = cfg.clone();
    selected_cfg.penalty.nu = path.selected_nu;
    selected_cfg.penalty.lambda = path.selected_lambda;
    selected_cfg.penalty.rho = path.selected_rho;
    write_fit_outputs(dir, &path.fit, datasets, &selected_cfg)
}

pub fn write_benchmark_outputs(dir: &Path, report: &BenchmarkReport) -> Result<(), CliError> {
    let ratios = &report.config.report_ratios;
    let mut table = String::from("method");
    for r in ratios {
        table.push_str(&format!(",mse_{r},mse_se_{r}"));
    }
    table.push_str(",auc,auc_se\n");
    for s in &report.summaries {
        table.push_str(s.method.name());
        for m in &s.mse {
            table.push_str(&format!(",{},{}", fmt_f64(m.mean), fmt_f64(m.se)));
        }
        table.push_str(&format!(",{},{}\n", fmt_f64(s.auc.mean), fmt_f64(s.auc.se)));
    }
    write(&dir.join("benchmark.csv"), &table)?;

    let sc = &report.config.scenario;
    let outcomes = report
        .outcomes
        .iter()
        .map(|o| {
            object(vec![
                ("replicate", Value::from(o.replicate)),
                ("method", Value::String(o.method.name().into())),
                ("auc", num(o.auc)),
                ("mse", Value::Array(o.mse.iter().map(|&v| num(v)).collect())),
                ("rho_max", num(o.rho_max)),
                ("all_converged", Value::Bool(o.all_converged)),
            ])
        })
        .collect();
    let summaries = report
        .summaries
        .iter()
        .map(|s| {
            object(vec![
                ("method", Value::String(s.method.name().into())),
                ("auc", object(vec![("mean", num(s.auc.mean)), ("se", num(s.auc.se))])),
                (
                    "mse",
                    Value::Array(
                        s.mse
                            .iter()
                            .zip(ratios)
                            .map(|(m, r)| object(vec![("ratio", num(*r)), ("mean", num(m.mean)), ("se", num(m.se))]))
                            .collect(),
                    ),
                ),
            ])
        })
        .collect();
    let doc = object(vec![
        (
            "scenario",
            object(vec![
                ("k", Value::from(sc.k)),
                ("n_k", Value::from(sc.n_k)),
                ("p", Value::from(sc.p)),
                ("q", Value::from(sc.q)),
                ("censored_responses", Value::from(sc.censored_count())),
                ("event_probability", num(sc.event_probability)),
                ("censor_value", num(sc.censor_value)),
                ("seed", Value::from(sc.seed)),
            ]),
        ),
        ("replicates", Value::from(report.config.replicates)),
        ("alpha2", num(report.config.alpha2)),
        (
            "rho_ratios",
            Value::Array(report.config.rho_ratios.iter().map(|&v| num(v)).collect()),
        ),
        ("summaries", Value::Array(summaries)),
        ("outcomes", Value::Array(outcomes)),
    ]);
    write(&dir.join("benchmark.json"), &render_json(&doc))
}

pub fn truth_document(truth: &jcglasso::GroundTruth, datasets: &[ConditionDataset]) -> Value {
    Value::Array(
        datasets
            .iter()
            .enumerate()
            .map(|(k, ds)| {
                object(vec![
                    ("condition", Value::String(ds.name.clone())),
                    ("mu", vector(&truth.mu[k])),
                    ("intercept", vector(&truth.intercepts[k])),
                    ("omega", matrix(&truth.omegas[k])),
                    ("b", matrix(&truth.bs[k])),
                    ("theta", matrix(&truth.thetas[k])),
                    ("omega_boost", num(truth.omega_boosts[k])),
                    ("theta_boost", num(truth.theta_boosts[k])),
                ])
            })
            .collect(),
    )
}

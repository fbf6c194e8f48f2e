//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use jcglasso::benchmark::BenchmarkConfig;
use jcglasso::{FitConfig, PenaltyKind, ScenarioConfig};

use crate::CliError;

/// Optional explicit grids and the shape of the default ones.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub nu: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    pub nu_count: usize,
    pub lambda_count: usize,
    pub rho_count: usize,
    pub nu_min_ratio: f64,
    pub lambda_min_ratio: f64,
    pub rho_min_ratio: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            nu: None,
            lambda: None,
            rho: None,
            nu_count: 50,
            lambda_count: 10,
            rho_count: 10,
            nu_min_ratio: 0.01,
            lambda_min_ratio: 0.05,
            rho_min_ratio: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub fit: FitConfig,
    pub grid: GridSettings,
    pub scenario: ScenarioConfig,
    pub replicates: usize,
    pub rho_ratios: Option<Vec<f64>>,
    pub report_ratios: Option<Vec<f64>>,
    /// Replicate index used by `simulate`.
    pub replicate: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            grid: GridSettings::default(),
            scenario: ScenarioConfig::default(),
            replicates: 10,
            rho_ratios: None,
            report_ratios: None,
            replicate: 0,
        }
    }
}

impl Settings {
    pub fn benchmark(&self) -> BenchmarkConfig {
        let mut cfg = BenchmarkConfig::new(self.scenario.clone(), self.replicates);
        cfg.fit = self.fit.clone();
        cfg.alpha2 = self.fit.penalty.alpha2;
        if let Some(r) = &self.rho_ratios {
            cfg.rho_ratios = r.clone();
        }
        if let Some(r) = &self.report_ratios {
            cfg.report_ratios = r.clone();
        }
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(CliError::Input(format!("line {line_no}: duplicate key `{key}`")));
            }
        }

        let mut s = Settings::default();
        // a preset has to land before the fields that refine it
        if let Some((line, v)) = entries.remove("scenario") {
            let idx: usize = parse_value(&v, line, "scenario")?;
            s.scenario = match idx {
                100 => ScenarioConfig::reduced_p100(),
                _ => ScenarioConfig::table_scenario(idx).ok_or_else(|| {
                    CliError::Input(format!("line {line}: scenario must be 1, 2, 3, 4 or 100, got {idx}"))
                })?,
            };
        }
        for (key, (line, v)) in entries {
            s.apply(&key, &v, line)?;
        }
        Ok(s)
    }

    fn apply(&mut self, key: &str, v: &str, line: usize) -> Result<(), CliError> {
        let pen = &mut self.fit.penalty;
        let sc = &mut self.scenario;
        let g = &mut self.grid;
        match key {
            "lambda" => pen.lambda = parse_value(v, line, key)?,
            "rho" => pen.rho = parse_value(v, line, key)?,
            "nu" => pen.nu = parse_value(v, line, key)?,
            "alpha1" => pen.alpha1 = parse_value(v, line, key)?,
            "alpha2" => pen.alpha2 = parse_value(v, line, key)?,
            "alpha3" => pen.alpha3 = parse_value(v, line, key)?,
            "theta_penalty" => pen.theta_penalty_kind = parse_kind(v, line, key)?,
            "omega_penalty" => pen.omega_penalty_kind = parse_kind(v, line, key)?,
            "em_tol" => self.fit.em_tol = parse_value(v, line, key)?,
            "em_max_iter" => self.fit.em_max_iter = parse_value(v, line, key)?,
            "inner_tol" => self.fit.inner_tol = parse_value(v, line, key)?,
            "inner_max_iter" => self.fit.inner_max_iter = parse_value(v, line, key)?,
            "tau" => self.fit.tau = parse_value(v, line, key)?,
            "jgl_tol" => self.fit.jgl_tol = parse_value(v, line, key)?,
            "jgl_max_iter" => self.fit.jgl_max_iter = parse_value(v, line, key)?,
            "multilasso_tol" => self.fit.multilasso_tol = parse_value(v, line, key)?,
            "multilasso_max_iter" => self.fit.multilasso_max_iter = parse_value(v, line, key)?,
            "estep" => self.fit.estep = parse_value(v, line, key)?,
            "nu_grid" => g.nu = Some(parse_list(v, line, key)?),
            "lambda_grid" => g.lambda = Some(parse_list(v, line, key)?),
            "rho_grid" => g.rho = Some(parse_list(v, line, key)?),
            "nu_count" => g.nu_count = parse_value(v, line, key)?,
            "lambda_count" => g.lambda_count = parse_value(v, line, key)?,
            "rho_count" => g.rho_count = parse_value(v, line, key)?,
            "nu_min_ratio" => g.nu_min_ratio = parse_value(v, line, key)?,
            "lambda_min_ratio" => g.lambda_min_ratio = parse_value(v, line, key)?,
            "rho_min_ratio" => g.rho_min_ratio = parse_value(v, line, key)?,
            "k" => sc.k = parse_value(v, line, key)?,
            "n_k" => sc.n_k = parse_value(v, line, key)?,
            "p" => sc.p = parse_value(v, line, key)?,
            "q" => sc.q = parse_value(v, line, key)?,
            "censored_fraction_y" => sc.censored_fraction_y = parse_value(v, line, key)?,
            "mar_fraction_x" => sc.mar_fraction_x = parse_value(v, line, key)?,
            "event_probability" => sc.event_probability = parse_value(v, line, key)?,
            "censor_value" => sc.censor_value = parse_value(v, line, key)?,
            "seed" => sc.seed = parse_value(v, line, key)?,
            "band_step" => sc.band_step = parse_value(v, line, key)?,
            "band_width" => sc.band_width = parse_value(v, line, key)?,
            "band_low" => sc.band_low = parse_value(v, line, key)?,
            "band_high" => sc.band_high = parse_value(v, line, key)?,
            "coef_rows" => sc.coef_rows = parse_value(v, line, key)?,
            "coef_low" => sc.coef_low = parse_value(v, line, key)?,
            "coef_high" => sc.coef_high = parse_value(v, line, key)?,
            "replicates" => self.replicates = parse_value(v, line, key)?,
            "replicate" => self.replicate = parse_value(v, line, key)?,
            "rho_ratios" => self.rho_ratios = Some(parse_list(v, line, key)?),
            "report_ratios" => self.report_ratios = Some(parse_list(v, line, key)?),
            _ => return Err(CliError::Input(format!("line {line}: unknown key `{key}`"))),
        }
        Ok(())
    }
}

fn parse_value<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Input(format!("line {line}: cannot parse `{v}` for `{key}`")))
}

fn parse_kind(v: &str, line: usize, key: &str) -> Result<PenaltyKind, CliError> {
    v.parse()
        .map_err(|_| CliError::Input(format!("line {line}: `{key}` must be `fused` or `group`, got `{v}`")))
}

fn parse_list(v: &str, line: usize, key: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|t| parse_value(t.trim(), line, key)).collect()
}

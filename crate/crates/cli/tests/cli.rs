use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jcglasso::{generate, CellStatus, ScenarioConfig};
use jcglasso_cli::io::{read_datasets, write_datasets, InputSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jcglasso"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_scenario() -> ScenarioConfig {
    ScenarioConfig {
        k: 2,
        n_k: 40,
        p: 6,
        q: 3,
        censored_fraction_y: 0.5,
        mar_fraction_x: 0.34,
        ..ScenarioConfig::default()
    }
}

const SMALL_CONFIG: &str = "k = 2\nn_k = 40\np = 6\nq = 3\ncensored_fraction_y = 0.5\nmar_fraction_x = 0.34\n\
lambda = 0.05\nrho = 0.05\nnu = 0.05\n";

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("cfg.txt"), SMALL_CONFIG).unwrap();
        Self { _dir: dir, root }
    }

    fn p(&self, rel: &str) -> String {
        self.root.join(rel).to_string_lossy().into_owned()
    }

    fn simulate(&self) {
        let out = run(&["simulate", "--config", &self.p("cfg.txt"), "--out", &self.p("data")]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }

    fn fit(&self, out_dir: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "fit".to_string(),
            self.p("data/condition1.csv"),
            self.p("data/condition2.csv"),
            "--roles".into(),
            self.p("data/roles.csv"),
            "--limits".into(),
            self.p("data/limits.csv"),
            "--censor-at-limits".into(),
            "--threads".into(),
            "1".into(),
            "--out".into(),
            self.p(out_dir),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        bin().args(&args).output().unwrap()
    }
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn write_then_read_preserves_values_and_status() {
    let (datasets, _) = generate(&small_scenario(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_datasets(dir.path(), &datasets).unwrap();
    let back = read_datasets(&InputSpec {
        data: &paths,
        roles: &dir.path().join("roles.csv"),
        limits: Some(&dir.path().join("limits.csv")),
        censor_at_limits: true,
    })
    .unwrap();
    assert_eq!(back.len(), datasets.len());
    let mut censored = 0;
    for (a, b) in datasets.iter().zip(&back) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.variables, b.variables);
        assert_eq!(a.status, b.status);
        assert_eq!(a.lower, b.lower);
        assert_eq!(a.upper, b.upper);
        for i in 0..a.n() {
            for j in 0..a.dim() {
                let (x, y) = (a.value(i, j), b.value(i, j));
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
        censored += a.status.iter().filter(|s| **s == CellStatus::RightCensored).count();
    }
    assert!(censored > 0);
}

#[test]
fn fit_writes_documents_and_is_deterministic() {
    let ws = Workspace::new();
    ws.simulate();
    let cfg = ws.p("cfg.txt");
    for dir in ["fit_a", "fit_b"] {
        let out = ws.fit(dir, &["--config", &cfg]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let files = [
        "fit.json",
        "coefficients.csv",
        "edges_theta_condition1.csv",
        "edges_theta_condition2.csv",
        "edges_omega_condition1.csv",
        "edges_omega_condition2.csv",
    ];
    for f in files {
        let a = read(&ws.root.join("fit_a").join(f));
        let b = read(&ws.root.join("fit_b").join(f));
        assert_eq!(a, b, "{f} differs between runs");
    }
    let doc: serde_json::Value = serde_json::from_str(&read(&ws.root.join("fit_a/fit.json"))).unwrap();
    assert_eq!(doc["estimates"].as_array().unwrap().len(), 2);
    assert_eq!(doc["estimates"][0]["b"].as_array().unwrap().len(), 3);
    let edges = read(&ws.root.join("fit_a/edges_theta_condition1.csv"));
    assert!(edges.starts_with("node_a,node_b,partial_correlation,condition\n"));
    let coef = read(&ws.root.join("fit_a/coefficients.csv"));
    // 6 intercepts and 3 x 6 coefficients per condition
    assert_eq!(coef.lines().count(), 1 + 2 * (6 + 18));
}

#[test]
fn missing_limits_entry_names_the_variable() {
    let ws = Workspace::new();
    ws.simulate();
    let limits = read(&ws.root.join("data/limits.csv"));
    let trimmed: String = limits
        .lines()
        .filter(|l| !l.starts_with("Y2,condition2"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(ws.root.join("data/limits.csv"), trimmed).unwrap();
    let out = ws.fit("fit", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`Y2`") && err.contains("condition2"), "{err}");
}

#[test]
fn parse_errors_name_file_line_and_column() {
    let ws = Workspace::new();
    ws.simulate();
    let path = ws.root.join("data/condition1.csv");
    let mut text = read(&path);
    let at = text.find('\n').unwrap() + 1;
    text.replace_range(at..at + 2, "ab");
    fs::write(&path, text).unwrap();
    let out = ws.fit("fit", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("condition1.csv") && err.contains("line 2, column 1"),
        "{err}"
    );
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let ws = Workspace::new();
    fs::write(ws.root.join("bad.txt"), "lamda = 0.1\n").unwrap();
    let out = run(&["simulate", "--config", &ws.p("bad.txt"), "--out", &ws.p("data")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
}

#[test]
fn invalid_scenario_names_the_field() {
    let ws = Workspace::new();
    fs::write(ws.root.join("bad.txt"), "event_probability = 1.5\n").unwrap();
    let out = run(&["simulate", "--config", &ws.p("bad.txt"), "--out", &ws.p("data")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("event_probability"));
}

#[test]
fn strict_flag_reports_non_convergence() {
    let ws = Workspace::new();
    ws.simulate();
    fs::write(ws.root.join("short.txt"), format!("{SMALL_CONFIG}em_max_iter = 1\n")).unwrap();
    let short = ws.p("short.txt");
    assert!(ws.fit("loose", &["--config", &short]).status.success());
    assert_eq!(
        ws.fit("strict", &["--config", &short, "--strict"]).status.code(),
        Some(3)
    );
}

#[test]
fn singleton_path_grid_matches_fit() {
    let ws = Workspace::new();
    ws.simulate();
    fs::write(
        ws.root.join("grid.txt"),
        format!("{SMALL_CONFIG}nu_grid = 0.05\nlambda_grid = 0.05\nrho_grid = 0.05\n"),
    )
    .unwrap();
    let grid = ws.p("grid.txt");
    assert!(ws.fit("fit", &["--config", &grid]).status.success());
    let mut args = vec!["path".to_string()];
    args.extend(["data/condition1.csv", "data/condition2.csv"].map(|f| ws.p(f)));
    args.extend(
        [
            "--roles",
            &ws.p("data/roles.csv"),
            "--limits",
            &ws.p("data/limits.csv"),
            "--censor-at-limits",
            "--config",
            &grid,
            "--out",
            &ws.p("path"),
        ]
        .map(str::to_string),
    );
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&ws.root.join("path/bic_nu.csv")).lines().count(), 2);
    assert_eq!(read(&ws.root.join("path/bic_lambda_rho.csv")).lines().count(), 2);
    assert_eq!(
        read(&ws.root.join("path/bic_nu.csv")).lines().next().unwrap(),
        "nu,bic_x,bic_y_given_x,bic_total,df_x,df_y_given_x,converged"
    );
    assert_eq!(
        read(&ws.root.join("path/fit.json")),
        read(&ws.root.join("fit/fit.json"))
    );
}

#[test]
fn default_path_grid_has_paper_dimensions() {
    let ws = Workspace::new();
    ws.simulate();
    let mut args = vec!["path".to_string()];
    args.extend(["data/condition1.csv", "data/condition2.csv"].map(|f| ws.p(f)));
    args.extend(
        [
            "--roles",
            &ws.p("data/roles.csv"),
            "--limits",
            &ws.p("data/limits.csv"),
            "--censor-at-limits",
            "--out",
            &ws.p("path"),
        ]
        .map(str::to_string),
    );
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&ws.root.join("path/bic_nu.csv")).lines().count(), 51);
    assert_eq!(read(&ws.root.join("path/bic_lambda_rho.csv")).lines().count(), 101);
}

#[test]
fn benchmark_with_two_replicates_fills_the_table() {
    let ws = Workspace::new();
    fs::write(
        ws.root.join("bench.txt"),
        "k = 2\nn_k = 30\np = 10\nreplicates = 2\nrho_ratios = 1.0, 0.5, 0.1\nreport_ratios = 0.1, 1.0\n",
    )
    .unwrap();
    let out = run(&["benchmark", "--config", &ws.p("bench.txt"), "--out", &ws.p("bench")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read(&ws.root.join("bench/benchmark.csv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method,mse_0.1,mse_se_0.1,mse_1,mse_se_1,auc,auc_se");
    assert_eq!(lines.len(), 3);
    for row in &lines[1..] {
        assert_eq!(row.split(',').count(), 7);
        assert!(!row.contains("NaN"), "{row}");
    }
    let doc: serde_json::Value = serde_json::from_str(&read(&ws.root.join("bench/benchmark.json"))).unwrap();
    assert_eq!(doc["outcomes"].as_array().unwrap().len(), 4);
}

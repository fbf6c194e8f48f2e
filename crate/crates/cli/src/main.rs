use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jcglasso_cli::commands::{run_bench, run_fit, run_path, run_simulate, DataArgs, Options};
use jcglasso_cli::config::Settings;
use jcglasso_cli::CliError;

#[derive(Parser)]
#[command(
    name = "jcglasso",
    version,
    about = "Joint conditional graphical lasso for censored and missing data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit at the tuning parameters given in the config file.
    Fit {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Select nu, then (lambda, rho), by BIC and fit the selected model.
    Path {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Generate a synthetic scenario in the ingestion format.
    Simulate {
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Run the simulation benchmark against the limit-imputation baseline.
    Benchmark {
        #[command(flatten)]
        common: CommonFlags,
    },
}

#[derive(Args)]
struct DataFlags {
    /// One delimited file per condition; the file stem names the condition.
    #[arg(required = true)]
    data: Vec<PathBuf>,
    /// `variable,role` sidecar with roles `covariate` or `response`.
    #[arg(long)]
    roles: PathBuf,
    /// `variable,condition,lower,upper` sidecar.
    #[arg(long)]
    limits: Option<PathBuf>,
    /// Treat values equal to a declared limit as censored.
    #[arg(long)]
    censor_at_limits: bool,
}

#[derive(Args)]
struct CommonFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
    /// Exit with status 3 when any fit fails to converge.
    #[arg(long)]
    strict: bool,
}

impl CommonFlags {
    fn options(&self) -> Result<Options, CliError> {
        if self.threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build_global()
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
        let mut settings = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        if let Some(seed) = self.seed {
            settings.scenario.seed = seed;
        }
        settings.fit.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(Options {
            settings,
            out: self.out.clone(),
            verbose: self.verbose,
            strict: self.strict,
        })
    }
}

impl DataFlags {
    fn args(self) -> DataArgs {
        DataArgs {
            data: self.data,
            roles: self.roles,
            limits: self.limits,
            censor_at_limits: self.censor_at_limits,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit { data, common } => run_fit(&data.args(), &common.options()?).map(|_| ()),
        Command::Path { data, common } => run_path(&data.args(), &common.options()?),
        Command::Simulate { common } => run_simulate(&common.options()?).map(|_| ()),
        Command::Benchmark { common } => run_bench(&common.options()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jcglasso: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

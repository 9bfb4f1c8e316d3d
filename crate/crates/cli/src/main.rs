use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use barlab::verify::Case;
use barlab_cli::{
    cmd_check_scales, cmd_estimate, cmd_limits, cmd_montecarlo, cmd_simulate, CliError, Overrides, RunConfig,
};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

/// Simulate, estimate and stress-test bifurcating autoregressive models.
#[derive(Parser)]
#[command(name = "barlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override experiment.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replicate campaigns.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one tree and dump it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Leave the noise column out of the dump.
        #[arg(long)]
        no_record_noise: bool,
    },
    /// Least-squares and noise-moment estimates as JSON.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Tree dump produced by `simulate`.
        #[arg(long)]
        tree: Option<PathBuf>,
    },
    /// Limit matrices and rate-function coefficients as JSON.
    Limits {
        #[command(flatten)]
        common: Common,
    },
    /// Replicated simulation with tail, rate and covariance diagnostics.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Exit with status 3 when a report check fails.
        #[arg(long)]
        assert: bool,
    },
    /// Admissibility of power-law deviation scales b_N = N^alpha.
    CheckScales {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        case: Vec<CaseArg>,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long)]
        assert: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl From<CaseArg> for Case {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::One => Case::One,
            CaseArg::Two => Case::Two,
        }
    }
}

fn load(common: &Common, no_record_noise: bool) -> Result<RunConfig, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    Overrides { seed: common.seed, out: common.out.clone(), workers: common.workers, no_record_noise }.apply(&mut cfg);
    Ok(cfg)
}

fn run(command: Command) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Simulate { common, no_record_noise } => {
            cmd_simulate(&load(&common, no_record_noise)?, &mut out)?;
        }
        Command::Estimate { common, tree } => {
            let cfg = match &common.config {
                Some(_) => Some(load(&common, false)?),
                None => None,
            };
            cmd_estimate(cfg.as_ref(), tree.as_deref(), common.out.as_deref(), &mut out)?;
        }
        Command::Limits { common } => {
            let cfg = load(&common, false)?;
            cmd_limits(&cfg, common.out.as_deref(), &mut out)?;
        }
        Command::Montecarlo { common, assert } => {
            cmd_montecarlo(&load(&common, false)?, assert, &mut out)?;
        }
        Command::CheckScales { config, case, beta, alpha, assert } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let mut cases: Vec<Case> = case.into_iter().map(Case::from).collect();
            let (mut betas, mut alphas) = (beta, alpha);
            if let Some(cfg) = &cfg {
                if cases.is_empty() {
                    cases.push(cfg.experiment.case);
                }
                if betas.is_empty() {
                    betas.push(cfg.resolve()?.model.beta());
                }
                if alphas.is_empty() {
                    alphas.push(cfg.experiment.alpha);
                }
            }
            cmd_check_scales(&cases, &betas, &alphas, assert, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Some(command) = cli.command else {
        let _ = Cli::command().write_long_help(&mut io::stderr());
        return ExitCode::from(1);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

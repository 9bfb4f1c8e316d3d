//! Command implementations behind the `barlab` binary.
//!
//! Exit codes: 0 success, 1 usage, parse or I/O failure, 2 numeric or model
//! error, 3 failed checks under `--assert`.

pub mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use barlab::estimate::estimate;
use barlab::limits::LimitSet;
use barlab::model::tree_io::{read_tree, write_tree};
use barlab::model::{simulate_with, SimulateOptions, SimulatedTree};
use barlab::verify::{
    run_replicates, scale_admissible, write_cov_csv, write_rates_csv, write_tails_csv, Case, MonteCarloReport,
    ScaleSpec, ScaleVerdict,
};
use serde::Serialize;
use thiserror::Error;

use config::Format;
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(barlab::Error),
    #[error("{0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }
}

impl From<barlab::Error> for CliError {
    fn from(e: barlab::Error) -> Self {
        use barlab::Error as E;
        match e {
            E::Unstable { .. }
            | E::InvalidNoise(_)
            | E::Calibration(_)
            | E::InvalidInit(_)
            | E::SingularDesign { .. }
            | E::NonConvergence { .. }
            | E::NotPositiveDefinite(_) => CliError::Numeric(e),
            E::Io(msg) => CliError::Io(msg),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Flag overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub no_record_noise: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.experiment.master_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.experiment.workers = Some(w);
        }
        if self.no_record_noise {
            cfg.experiment.record_noise = false;
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn simulate_from(cfg: &RunConfig) -> Result<SimulatedTree, CliError> {
    let r = cfg.resolve()?;
    let opts = SimulateOptions { record_noise: cfg.experiment.record_noise };
    Ok(simulate_with(&r.model, Some(&r.noise), &r.init, cfg.experiment.n, cfg.experiment.master_seed, opts)?)
}

/// Writes `<out>/tree.csv` and returns its path.
pub fn cmd_simulate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<PathBuf, CliError> {
    let tree = simulate_from(cfg)?;
    ensure_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join("tree.csv");
    let mut w = create(&path)?;
    write_tree(&tree, &mut w)?;
    w.flush()?;
    writeln!(
        stdout,
        "simulated n={} cells={} seed={} -> {}",
        tree.n(),
        tree.shape().len(),
        tree.master_seed(),
        path.display()
    )?;
    Ok(path)
}

/// Estimates from a tree file, or from a tree simulated from `cfg`. The
/// config, when present, supplies `Gamma` and the true `theta`.
pub fn cmd_estimate(
    cfg: Option<&RunConfig>,
    tree_path: Option<&Path>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let tree = match (tree_path, cfg) {
        (Some(p), _) => {
            let f = File::open(p).map_err(|e| CliError::Io(format!("cannot open {}: {e}", p.display())))?;
            read_tree(BufReader::new(f)).map_err(|e| match e {
                barlab::Error::Parse { line, msg } => CliError::Usage(format!("{}:{line}: {msg}", p.display())),
                other => other.into(),
            })?
        }
        (None, Some(c)) => simulate_from(c)?,
        (None, None) => return Err(CliError::Usage("estimate needs --tree or --config".into())),
    };
    let resolved = cfg.map(RunConfig::resolve).transpose()?;
    let (noise, model) = match &resolved {
        Some(r) if r.model.p() == tree.p() => (Some(&r.noise), Some(&r.model)),
        Some(_) => return Err(CliError::Usage("config order p does not match the tree".into())),
        None => (None, None),
    };
    let est = estimate(&tree, tree.n(), noise, model)?;
    let json = to_json(&est.summary(tree.master_seed()));
    stdout.write_all(json.as_bytes())?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        fs::write(dir.join("estimate.json"), &json)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LimitsOutput {
    p: usize,
    beta: f64,
    norm: &'static str,
    #[serde(flatten)]
    limits: barlab::limits::LimitSummary,
}

pub fn cmd_limits(cfg: &RunConfig, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let r = cfg.resolve()?;
    let ls = LimitSet::compute(&r.model, &r.noise)?;
    let json = to_json(&LimitsOutput {
        p: r.model.p(),
        beta: r.model.beta(),
        norm: r.model.norm().name(),
        limits: ls.summary(),
    });
    stdout.write_all(json.as_bytes())?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        fs::write(dir.join("limits.json"), &json)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: RunConfig,
    report: &'a MonteCarloReport,
}

/// Runs the campaign and writes the report files into the output directory.
pub fn cmd_montecarlo(cfg: &RunConfig, assert: bool, stdout: &mut dyn Write) -> Result<MonteCarloReport, CliError> {
    let r = cfg.resolve()?;
    let plan = cfg.plan();
    let workers = cfg.experiment.workers.unwrap_or(1);
    let report = run_replicates(&r.model, &r.noise, &r.init, &plan, workers)?;

    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    if cfg.output.formats.contains(&Format::Json) {
        let json = to_json(&ReportFile { config: cfg.echo(), report: &report });
        fs::write(dir.join("report.json"), json)?;
    }
    if cfg.output.formats.contains(&Format::Csv) {
        let mut w = create(&dir.join("tails.csv"))?;
        write_tails_csv(&report.tails, &mut w)?;
        w.flush()?;
        if let Some(curve) = &report.rates_sigma2 {
            let mut w = create(&dir.join("rates.csv"))?;
            write_rates_csv(&curve.points, &mut w)?;
            w.flush()?;
        }
        if let Some(curve) = &report.rates_rho {
            let mut w = create(&dir.join("rates_rho.csv"))?;
            write_rates_csv(&curve.points, &mut w)?;
            w.flush()?;
        }
        if let Some(cov) = &report.covariance {
            let mut w = create(&dir.join("cov.csv"))?;
            write_cov_csv(cov, &mut w)?;
            w.flush()?;
        }
    }

    writeln!(
        stdout,
        "montecarlo: {} replicates ({} failed), n = {}..{}, beta = {}",
        report.records.len(),
        report.failed.len(),
        plan.n_min,
        plan.n_max,
        report.beta
    )?;
    for c in &report.checks {
        writeln!(stdout, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    if assert && !report.all_passed() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(CliError::Assertion(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(report)
}

/// Scale admissibility for every combination of the given lists.
pub fn cmd_check_scales(
    cases: &[Case],
    betas: &[f64],
    alphas: &[f64],
    assert: bool,
    stdout: &mut dyn Write,
) -> Result<Vec<ScaleVerdict>, CliError> {
    if cases.is_empty() || betas.is_empty() || alphas.is_empty() {
        return Err(CliError::Usage("check-scales needs at least one case, beta and alpha".into()));
    }
    let mut verdicts = Vec::new();
    writeln!(stdout, "case,beta,alpha,verdict,alpha_max,regime")?;
    for &case in cases {
        for &beta in betas {
            for &alpha in alphas {
                let v = scale_admissible(&ScaleSpec::new(alpha, case, beta)?);
                writeln!(
                    stdout,
                    "{},{},{},{},{:.6},{}",
                    case.label(),
                    beta,
                    alpha,
                    if v.pass { "pass" } else { "fail" },
                    v.alpha_max,
                    v.regime
                )?;
                verdicts.push(v);
            }
        }
    }
    if assert && verdicts.iter().any(|v| !v.pass) {
        return Err(CliError::Assertion("some scales are not admissible".into()));
    }
    Ok(verdicts)
}

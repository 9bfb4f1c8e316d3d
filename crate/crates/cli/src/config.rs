//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! p = 1
//! a = [1.0, 0.5]
//! b = [1.0, 0.5]
//!
//! [noise]
//! family = "gaussian"
//! sigma2 = 1.0
//! rho = 0.3
//!
//! [experiment]
//! n = 10
//! replicates = 200
//! master_seed = 42
//! ```
//!
//! `[init]` and `[output]` are optional. Replicate `r` of a campaign runs on
//! seed `splitmix64(master_seed ^ splitmix64(r))`, where `splitmix64` is the
//! standard finalizer `z += 0x9E3779B97F4A7C15; z = (z ^ z >> 30) *
//! 0xBF58476D1CE4E5B9; z = (z ^ z >> 27) * 0x94D049BB133111EB; z ^ z >> 31`.

use std::path::{Path, PathBuf};

use barlab::model::{BarModel, ContractionNorm, InitSpec, NoiseModel, DEFAULT_BOUND, DEFAULT_SKEW};
use barlab::verify::{Case, Plan};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub p: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<ContractionNorm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Gaussian,
    Bounded,
    SkewSwitching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub family: FamilyName,
    pub sigma2: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<u32>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_case")]
    pub case: Case,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "yes")]
    pub record_noise: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_generation: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isometry_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_ratio_tol: Option<f64>,
}

fn default_replicates() -> usize {
    200
}

fn default_alpha() -> f64 {
    0.25
}

fn default_case() -> Case {
    Case::One
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), formats: default_formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub init: InitSpec,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Model, noise and initial law built from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: BarModel,
    pub noise: NoiseModel,
    pub init: InitSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks the invariants that the type system cannot: stability,
    /// `|rho| < sigma2`, `0 < alpha < 1/2` and `n >= p`.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let m = &self.model;
        let model = BarModel::build(m.p, m.a.clone(), m.b.clone(), m.norm.unwrap_or_default(), false)?;
        let nz = &self.noise;
        let noise = match nz.family {
            FamilyName::Gaussian => NoiseModel::gaussian(nz.sigma2, nz.rho)?,
            FamilyName::Bounded => NoiseModel::bounded(nz.sigma2, nz.rho, nz.bound.unwrap_or(DEFAULT_BOUND))?,
            FamilyName::SkewSwitching => {
                let tau4 = nz
                    .tau4
                    .ok_or_else(|| CliError::Usage("noise.tau4 is required for the skew_switching family".into()))?;
                NoiseModel::skew_switching(nz.sigma2, nz.rho, tau4, nz.skew.unwrap_or(DEFAULT_SKEW))?
            }
        };
        let ex = &self.experiment;
        if !(ex.alpha > 0.0 && ex.alpha < 0.5) {
            return Err(CliError::Usage(format!("experiment.alpha must lie in (0, 1/2), got {}", ex.alpha)));
        }
        if (ex.n as usize) < m.p {
            return Err(CliError::Usage(format!("experiment.n = {} must be at least p = {}", ex.n, m.p)));
        }
        if let Some(n_min) = ex.n_min {
            if n_min > ex.n {
                return Err(CliError::Usage(format!("experiment.n_min = {n_min} exceeds n = {}", ex.n)));
            }
        }
        if ex.workers == Some(0) {
            return Err(CliError::Usage("experiment.workers must be positive".into()));
        }
        Ok(Resolved { model, noise, init: self.init.clone() })
    }

    pub fn plan(&self) -> Plan {
        let ex = &self.experiment;
        let n_min = ex.n_min.unwrap_or_else(|| ex.n.min(6).max(self.model.p as u32).max(2).min(ex.n));
        let mut plan = Plan::new(n_min, ex.n, ex.replicates, ex.master_seed);
        plan.record_noise = ex.record_noise;
        if let Some(d) = &ex.deltas {
            plan.deltas = d.clone();
        }
        plan.xs = ex.xs.clone();
        plan.alpha = ex.alpha;
        plan.case = ex.case;
        if let Some(g) = ex.slope_generation {
            plan.slope_generation = g;
        }
        if let Some(t) = ex.cov_tol {
            plan.cov_tol = t;
        }
        if let Some(t) = ex.isometry_tol {
            plan.isometry_tol = t;
        }
        if let Some(t) = ex.rate_ratio_tol {
            plan.rate_ratio_tol = t;
        }
        plan
    }

    /// Copy for report headers. Worker count and output location are
    /// execution settings and are reset, so the same experiment always
    /// produces the same report bytes.
    pub fn echo(&self) -> RunConfig {
        let mut c = self.clone();
        c.experiment.workers = None;
        c.output = OutputConfig::default();
        c
    }
}

//! Run configuration file.
//!
//! ```toml
//! prior_spec = "prior.toml"
//! seed = 7
//! output_dir = "out"
//!
//! [schedule]
//! num_steps = 1000
//! beta_start = 0.0001
//! beta_end = 0.02
//!
//! [solver]
//! steps = 50
//!
//! [keys]
//! private = "glyphs"
//! public = "glyphs-striped"
//!
//! [bench]
//! corpus = "secrets"
//! repeats = 1
//! grid = [{ kind = "identity" }, { kind = "gaussian_noise", severity = 10 }]
//! ```
//!
//! Every section is optional except `prior_spec`. Relative paths are taken
//! from the directory holding the config file. Unknown fields are rejected.

use std::path::{Path, PathBuf};

use diffsteg::channel::DegradationSpec;
use diffsteg::schedule::{DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_TRAIN_STEPS};
use diffsteg::{ddim::DEFAULT_SOLVER_STEPS, EstimatorRegistry, NoiseSchedule};
use serde::{Deserialize, Serialize};

use crate::error::{data, CliError, Result};
use crate::prior_spec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prior_spec: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub keys: KeysSection,
    #[serde(default)]
    pub bench: BenchSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub num_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { num_steps: DEFAULT_TRAIN_STEPS, beta_start: DEFAULT_BETA_START, beta_end: DEFAULT_BETA_END }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::linear(self.num_steps, self.beta_start, self.beta_end)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub steps: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { steps: DEFAULT_SOLVER_STEPS }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeysSection {
    #[serde(default)]
    pub private: Option<String>,
    #[serde(default)]
    pub public: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub corpus: Option<PathBuf>,
    pub repeats: usize,
    /// Defaults to the built-in grid when absent.
    pub grid: Option<Vec<DegradationSpec>>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { corpus: None, repeats: 1, grid: None }
    }
}

/// A parsed config together with the directory it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub dir: PathBuf,
}

impl Loaded {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| data(format!("{}: invalid config: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, dir })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.dir.join(path)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    /// Loads the prior spec and checks that the configured key names exist.
    pub fn registry(&self) -> Result<EstimatorRegistry> {
        let schedule = self.config.schedule.build()?;
        let reg = prior_spec::load_registry(&self.resolve(&self.config.prior_spec), schedule)?;
        for name in [&self.config.keys.private, &self.config.keys.public].into_iter().flatten() {
            reg.key(name)?;
        }
        Ok(reg)
    }
}

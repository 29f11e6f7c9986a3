//! The JSON file written next to every container.
//!
//! It names the public key and pins the schedule and solver grid so the
//! receiver notices when their settings differ from the sender's. The private
//! key appears only in diagnostic runs.

use std::path::{Path, PathBuf};

use diffsteg::ddim::StepSequence;
use diffsteg::{NoiseSchedule, Shape};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ScheduleConfig;
use crate::error::{data, CliError, Result};

pub const FORMAT: &str = "diffsteg-container/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: String,
    pub public_key: String,
    pub shape: Shape,
    pub solver_steps: usize,
    pub schedule: ScheduleConfig,
    /// SHA-256 over the cumulative products.
    pub schedule_hash: String,
    /// SHA-256 over the schedule hash and the solver grid.
    pub grid_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<PathBuf>,
}

pub fn path_for(container: &Path) -> PathBuf {
    let mut name = container.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn schedule_hash(schedule: &NoiseSchedule) -> String {
    hex::encode(schedule_digest(schedule))
}

fn schedule_digest(schedule: &NoiseSchedule) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"diffsteg schedule\0");
    for ab in schedule.alpha_bars() {
        h.update(ab.to_bits().to_le_bytes());
    }
    h.finalize().to_vec()
}

pub fn grid_hash(schedule: &NoiseSchedule, grid: &StepSequence) -> String {
    let mut h = Sha256::new();
    h.update(b"diffsteg grid\0");
    h.update(schedule_digest(schedule));
    for &i in grid.indices() {
        h.update((i as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Sidecar {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let sidecar: Sidecar =
            serde_json::from_str(&text).map_err(|e| data(format!("{}: invalid sidecar: {e}", path.display())))?;
        if sidecar.format != FORMAT {
            return Err(data(format!("{}: unsupported sidecar format `{}`", path.display(), sidecar.format)));
        }
        Ok(sidecar)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| data(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

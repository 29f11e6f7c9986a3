//! TOML description of the condition keys available to a run.
//!
//! ```toml
//! width = 16
//! height = 16
//!
//! [keys.glyphs]
//! kind = "mixture"
//!
//! [[keys.glyphs.components]]
//! weight = 0.5
//! variance = 0.0064
//! image = "templates/bar.pgm"
//!
//! [[keys.glyphs.components]]
//! weight = 0.5
//! variance = 0.0064
//! mean = [0.25, 0.25]  # one value per pixel and channel
//!
//! [keys.passthrough]
//! kind = "zero"
//! ```
//!
//! Image paths are relative to the spec file. Keys are registered in name
//! order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use diffsteg::{Estimator, EstimatorRegistry, GmmPrior, NoiseSchedule, Shape};
use serde::{Deserialize, Serialize};

use crate::error::{data, CliError, Result};
use crate::pnm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub keys: BTreeMap<String, KeySpec>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KeySpec {
    Mixture {
        components: Vec<ComponentSpec>,
    },
    /// Predicts zero noise everywhere. Useful as a pass-through when testing.
    Zero {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
}

impl PriorSpec {
    pub fn new(shape: Shape) -> Self {
        Self { width: shape.width, height: shape.height, channels: shape.channels, keys: BTreeMap::new() }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.height, self.width, self.channels)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| data(format!("invalid prior spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| data(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| data(format!("cannot serialize prior spec: {e}")))
    }

    /// Builds the registry. `base` is the directory image paths are
    /// relative to.
    pub fn registry(&self, base: &Path, schedule: NoiseSchedule) -> Result<EstimatorRegistry> {
        let shape = self.shape();
        if shape.is_empty() {
            return Err(data("prior spec has an empty image shape"));
        }
        let mut reg = EstimatorRegistry::new(schedule, shape);
        for (name, key) in &self.keys {
            let estimator = match key {
                KeySpec::Zero {} => Estimator::Zero { dim: shape.len() },
                KeySpec::Mixture { components } => {
                    let prior = self.mixture(name, components, base)?;
                    Estimator::Mixture(prior)
                }
            };
            reg.insert(name.clone(), estimator)?;
        }
        Ok(reg)
    }

    fn mixture(&self, name: &str, components: &[ComponentSpec], base: &Path) -> Result<GmmPrior> {
        let shape = self.shape();
        let mut weights = Vec::with_capacity(components.len());
        let mut means = Vec::with_capacity(components.len());
        let mut variances = Vec::with_capacity(components.len());
        for (i, c) in components.iter().enumerate() {
            let mean = match (&c.image, &c.mean) {
                (Some(path), None) => {
                    let img = pnm::read(&base.join(path))?;
                    if img.shape() != shape {
                        return Err(data(format!(
                            "key `{name}` component {i}: template {} is {}, spec says {shape}",
                            path.display(),
                            img.shape()
                        )));
                    }
                    img.into_vec()
                }
                (None, Some(mean)) if mean.len() == shape.len() => mean.clone(),
                (None, Some(mean)) => {
                    return Err(data(format!(
                        "key `{name}` component {i}: mean has {} values, expected {}",
                        mean.len(),
                        shape.len()
                    )))
                }
                _ => return Err(data(format!("key `{name}` component {i}: give exactly one of `image` or `mean`"))),
            };
            weights.push(c.weight);
            means.push(mean);
            variances.push(c.variance);
        }
        GmmPrior::new(weights, means, variances).map_err(|e| data(format!("key `{name}`: {e}")))
    }
}

pub fn load_registry(path: &Path, schedule: NoiseSchedule) -> Result<EstimatorRegistry> {
    let spec = PriorSpec::load(path)?;
    spec.registry(path.parent().unwrap_or(Path::new(".")), schedule)
}

//! Hide and reveal: two keyed solves each.
//!
//! Hiding inverts the secret to noise under the private key and samples the
//! container from that noise under the public key. Revealing runs the same
//! two solves with the keys in the opposite roles.

use serde::{Deserialize, Serialize};

use crate::ddim::{ode_solve, SolverConfig};
use crate::error::{Error, Result};
use crate::image::ImageVector;
use crate::prior::{ConditionKey, EstimatorRegistry};

#[derive(Debug, Clone)]
pub struct StegoJob {
    pub secret: ImageVector,
    pub private_key: ConditionKey,
    pub public_key: ConditionKey,
    pub solver: SolverConfig,
    /// Allow `private_key == public_key`. The result is then just a
    /// round trip and is flagged in its metadata.
    pub diagnostic: bool,
    /// Keep the intermediate noise in the result.
    pub keep_latent: bool,
}

impl StegoJob {
    pub fn new(secret: ImageVector, private_key: ConditionKey, public_key: ConditionKey, solver: SolverConfig) -> Self {
        Self { secret, private_key, public_key, solver, diagnostic: false, keep_latent: false }
    }

    pub fn diagnostic(mut self, on: bool) -> Self {
        self.diagnostic = on;
        self
    }

    pub fn keep_latent(mut self, on: bool) -> Self {
        self.keep_latent = on;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StegoMetadata {
    pub private_key: String,
    pub public_key: String,
    pub solver: SolverConfig,
    pub schedule_steps: usize,
    pub same_keys: bool,
}

#[derive(Debug, Clone)]
pub struct StegoResult {
    pub container: ImageVector,
    /// The inverted noise. Anyone holding it and the public key can decode
    /// the secret, so it is only kept on request.
    pub latent: Option<ImageVector>,
    pub metadata: StegoMetadata,
}

pub fn hide(job: &StegoJob, registry: &EstimatorRegistry) -> Result<StegoResult> {
    registry.estimator(&job.private_key)?;
    registry.estimator(&job.public_key)?;
    registry.ensure_shape(&job.secret)?;
    let same_keys = job.private_key == job.public_key;
    if same_keys && !job.diagnostic {
        return Err(Error::SameKeys(job.private_key.name().to_owned()));
    }
    let t_max = registry.schedule().num_steps();
    let latent = ode_solve(&job.secret, &job.private_key, 0, t_max, &job.solver, registry)?;
    let container = ode_solve(&latent, &job.public_key, t_max, 0, &job.solver, registry)?;
    Ok(StegoResult {
        container,
        latent: job.keep_latent.then_some(latent),
        metadata: StegoMetadata {
            private_key: job.private_key.name().to_owned(),
            public_key: job.public_key.name().to_owned(),
            solver: job.solver,
            schedule_steps: t_max,
            same_keys,
        },
    })
}

pub fn reveal(
    container: &ImageVector,
    public_key: &ConditionKey,
    private_key: &ConditionKey,
    solver: &SolverConfig,
    registry: &EstimatorRegistry,
) -> Result<ImageVector> {
    registry.estimator(public_key)?;
    registry.estimator(private_key)?;
    registry.ensure_shape(container)?;
    let t_max = registry.schedule().num_steps();
    let latent = ode_solve(container, public_key, 0, t_max, solver, registry)?;
    ode_solve(&latent, private_key, t_max, 0, solver, registry)
}

/// Invert and resample under a single key.
pub fn round_trip(
    x: &ImageVector,
    key: &ConditionKey,
    solver: &SolverConfig,
    registry: &EstimatorRegistry,
) -> Result<ImageVector> {
    let t_max = registry.schedule().num_steps();
    let latent = ode_solve(x, key, 0, t_max, solver, registry)?;
    ode_solve(&latent, key, t_max, 0, solver, registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;
    use crate::prior::Estimator;
    use crate::schedule::NoiseSchedule;
    use crate::toy;

    #[test]
    fn zero_estimators_hide_exactly() {
        let shape = Shape::gray(4, 4);
        let mut reg = EstimatorRegistry::new(NoiseSchedule::default_linear(), shape);
        let a = reg.insert("a", Estimator::Zero { dim: 16 }).unwrap();
        let b = reg.insert("b", Estimator::Zero { dim: 16 }).unwrap();
        let secret = ImageVector::new(shape, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap();
        let res = hide(&StegoJob::new(secret.clone(), a, b, SolverConfig::default()), &reg).unwrap();
        assert!(res.container.rms_distance(&secret).unwrap() < 1e-9);
        assert!(res.latent.is_none());
    }

    #[test]
    fn equal_keys_need_diagnostic_mode() {
        let reg = toy::default_registry();
        let k = reg.key(toy::GLYPHS).unwrap();
        let secret = reg.sample_prior(&k, 1).unwrap().clamped();
        let job = StegoJob::new(secret.clone(), k.clone(), k.clone(), SolverConfig::default());
        assert!(matches!(hide(&job, &reg), Err(Error::SameKeys(_))));

        let res = hide(&job.clone().diagnostic(true).keep_latent(true), &reg).unwrap();
        assert!(res.metadata.same_keys);
        assert!(res.latent.is_some());
        let rt = round_trip(&secret, &k, &SolverConfig::default(), &reg).unwrap();
        assert_eq!(res.container, rt);
    }

    #[test]
    fn shape_and_key_errors() {
        let reg = toy::default_registry();
        let a = reg.key(toy::GLYPHS).unwrap();
        let b = reg.key(toy::BLOBS).unwrap();
        let wrong = ImageVector::zeros(Shape::gray(8, 8));
        let job = StegoJob::new(wrong.clone(), a.clone(), b.clone(), SolverConfig::default());
        assert!(matches!(hide(&job, &reg), Err(Error::ShapeMismatch { .. })));
        assert!(reveal(&wrong, &b, &a, &SolverConfig::default(), &reg).is_err());
    }
}

//! Deterministic DDIM integration in both directions.
//!
//! One update rule covers sampling and inversion:
//! `x_s = √ᾱ_s·f(x_t, t) + √(1−ᾱ_s)·ε(x_t, t)`. With `s < t` it denoises,
//! with `s > t` it inverts. During inversion the estimator is evaluated at the
//! current, less noisy state, which is why a round trip only returns an
//! approximation of its input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageVector;
use crate::prior::{ConditionKey, EstimatorRegistry};

pub const DEFAULT_SOLVER_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Clean image to noise, `0 → T`.
    Forward,
    /// Noise to clean image, `T → 0`.
    Backward,
}

/// Discretization of `[0, T]`. The per-step noise `σ` is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub num_solver_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { num_solver_steps: DEFAULT_SOLVER_STEPS }
    }
}

impl SolverConfig {
    pub fn new(num_solver_steps: usize) -> Self {
        Self { num_solver_steps }
    }

    pub fn sigma(&self) -> f64 {
        0.0
    }

    pub fn validate(&self, schedule_steps: usize) -> Result<()> {
        if self.num_solver_steps == 0 {
            return Err(Error::InvalidSolver("at least one solver step is required".into()));
        }
        if self.num_solver_steps > schedule_steps {
            return Err(Error::InvalidSolver(format!(
                "{} solver steps exceed the {schedule_steps}-step schedule",
                self.num_solver_steps
            )));
        }
        Ok(())
    }
}

/// Strictly increasing step indices from 0 to `T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSequence {
    indices: Vec<usize>,
}

impl StepSequence {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::InvalidSolver("a step sequence needs at least two indices".into()));
        }
        if indices[0] != 0 {
            return Err(Error::InvalidSolver("step sequence must start at 0".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSolver("step sequence must be strictly increasing".into()));
        }
        Ok(Self { indices })
    }

    /// `round(i·T/N)` for `i = 0..=N`.
    pub fn uniform(schedule_steps: usize, config: &SolverConfig) -> Result<Self> {
        config.validate(schedule_steps)?;
        let n = config.num_solver_steps;
        Self::new((0..=n).map(|i| (2 * i * schedule_steps + n) / (2 * n)).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn last(&self) -> usize {
        *self.indices.last().unwrap()
    }

    /// `(t, s)` pairs in the order they are integrated.
    pub fn transitions(&self, direction: Direction) -> Vec<(usize, usize)> {
        let pairs = self.indices.windows(2).map(|w| (w[0], w[1]));
        match direction {
            Direction::Forward => pairs.collect(),
            Direction::Backward => pairs.rev().map(|(a, b)| (b, a)).collect(),
        }
    }
}

/// Moves `x` from step `t` to step `s`.
pub fn ddim_step(
    x: &ImageVector,
    t: usize,
    s: usize,
    key: &ConditionKey,
    registry: &EstimatorRegistry,
) -> Result<ImageVector> {
    let schedule = registry.schedule();
    schedule.check_index(s)?;
    let eps = registry.epsilon(x, t, key)?;
    if s == t {
        return Ok(x.clone());
    }
    let f = registry.denoise_with(x, t, &eps)?;
    let ab_s = schedule.alpha_bar(s)?;
    let (a, b) = (ab_s.sqrt(), (1.0 - ab_s).sqrt());
    x.with_data(f.as_slice().iter().zip(eps.as_slice()).map(|(fi, e)| a * fi + b * e).collect())
}

/// Chains [`ddim_step`] over the uniform grid between the two ends of the
/// schedule: `0 → T` inverts, `T → 0` samples.
pub fn ode_solve(
    x: &ImageVector,
    key: &ConditionKey,
    from: usize,
    to: usize,
    config: &SolverConfig,
    registry: &EstimatorRegistry,
) -> Result<ImageVector> {
    let seq = StepSequence::uniform(registry.schedule().num_steps(), config)?;
    ode_solve_on(x, key, from, to, &seq, registry)
}

/// [`ode_solve`] over an explicit step sequence.
pub fn ode_solve_on(
    x: &ImageVector,
    key: &ConditionKey,
    from: usize,
    to: usize,
    seq: &StepSequence,
    registry: &EstimatorRegistry,
) -> Result<ImageVector> {
    if from == to {
        return Err(Error::InvalidSolver(format!("degenerate solve from {from} to {to}")));
    }
    let t_max = registry.schedule().num_steps();
    if seq.last() != t_max {
        return Err(Error::InvalidSolver(format!(
            "step sequence ends at {} but the schedule has {t_max} steps",
            seq.last()
        )));
    }
    let direction = match (from, to) {
        (0, t) if t == t_max => Direction::Forward,
        (t, 0) if t == t_max => Direction::Backward,
        _ => return Err(Error::InvalidSolver(format!("solve endpoints ({from}, {to}) must be 0 and {t_max}"))),
    };
    registry.estimator(key)?;
    registry.ensure_shape(x)?;
    seq.transitions(direction).into_iter().try_fold(x.clone(), |state, (t, s)| ddim_step(&state, t, s, key, registry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;
    use crate::prior::{Estimator, GmmPrior};
    use crate::schedule::NoiseSchedule;

    const SHAPE: Shape = Shape::gray(3, 3);

    fn registry() -> (EstimatorRegistry, ConditionKey, ConditionKey) {
        let mut reg = EstimatorRegistry::new(NoiseSchedule::linear(100, 1e-4, 0.02).unwrap(), SHAPE);
        let zero = reg.insert("zero", Estimator::Zero { dim: 9 }).unwrap();
        let normal = reg.insert("normal", Estimator::Mixture(GmmPrior::standard_normal(9).unwrap())).unwrap();
        (reg, zero, normal)
    }

    fn probe() -> ImageVector {
        ImageVector::new(SHAPE, vec![0.1, 0.5, -0.3, 1.2, 0.0, 0.8, 0.33, -1.0, 0.6]).unwrap()
    }

    #[test]
    fn uniform_grid_endpoints() {
        let seq = StepSequence::uniform(1000, &SolverConfig::new(50)).unwrap();
        assert_eq!(seq.indices().len(), 51);
        assert_eq!(seq.indices()[0], 0);
        assert_eq!(seq.indices()[1], 20);
        assert_eq!(seq.last(), 1000);
        let seq = StepSequence::uniform(10, &SolverConfig::new(10)).unwrap();
        assert_eq!(seq.indices(), (0..=10).collect::<Vec<_>>().as_slice());
        let seq = StepSequence::uniform(1000, &SolverConfig::new(3)).unwrap();
        assert_eq!(seq.indices(), &[0, 333, 667, 1000]);
        assert!(StepSequence::uniform(10, &SolverConfig::new(11)).is_err());
        assert!(StepSequence::uniform(10, &SolverConfig::new(0)).is_err());
        assert!(StepSequence::new(vec![0, 5, 5, 10]).is_err());
        assert!(StepSequence::new(vec![1, 5]).is_err());
    }

    #[test]
    fn backward_reverses_forward() {
        let seq = StepSequence::new(vec![0, 3, 7, 10]).unwrap();
        assert_eq!(seq.transitions(Direction::Forward), vec![(0, 3), (3, 7), (7, 10)]);
        assert_eq!(seq.transitions(Direction::Backward), vec![(10, 7), (7, 3), (3, 0)]);
    }

    #[test]
    fn same_step_is_identity() {
        let (reg, _, normal) = registry();
        assert_eq!(ddim_step(&probe(), 40, 40, &normal, &reg).unwrap(), probe());
    }

    #[test]
    fn zero_estimator_step_is_a_rescale() {
        let (reg, zero, _) = registry();
        let sched = reg.schedule();
        for (t, s) in [(40, 10), (10, 40), (0, 100), (100, 0)] {
            let c = (sched.alpha_bar(s).unwrap() / sched.alpha_bar(t).unwrap()).sqrt();
            let out = ddim_step(&probe(), t, s, &zero, &reg).unwrap();
            for (a, b) in out.as_slice().iter().zip(probe().as_slice()) {
                assert!((a - c * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standard_normal_step_coefficient() {
        let (reg, _, normal) = registry();
        let sched = reg.schedule();
        for (t, s) in [(60, 20), (20, 60), (100, 0), (1, 2)] {
            let (at, as_) = (sched.alpha_bar(t).unwrap(), sched.alpha_bar(s).unwrap());
            let c = (as_ * at).sqrt() + ((1.0 - as_) * (1.0 - at)).sqrt();
            let out = ddim_step(&probe(), t, s, &normal, &reg).unwrap();
            for (a, b) in out.as_slice().iter().zip(probe().as_slice()) {
                assert!((a - c * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_estimator_round_trip_is_exact() {
        let (reg, zero, _) = registry();
        let cfg = SolverConfig::new(20);
        let lat = ode_solve(&probe(), &zero, 0, 100, &cfg, &reg).unwrap();
        let back = ode_solve(&lat, &zero, 100, 0, &cfg, &reg).unwrap();
        for (a, b) in back.as_slice().iter().zip(probe().as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn standard_normal_round_trip_is_product_of_squared_coefficients() {
        // The per-step coefficient is symmetric in (t, s), so each transition
        // is applied twice rather than undone.
        let (reg, _, normal) = registry();
        let cfg = SolverConfig::new(10);
        let seq = StepSequence::uniform(100, &cfg).unwrap();
        let sched = reg.schedule();
        let chain: f64 = seq
            .transitions(Direction::Forward)
            .iter()
            .map(|&(t, s)| {
                let (at, as_) = (sched.alpha_bar(t).unwrap(), sched.alpha_bar(s).unwrap());
                ((as_ * at).sqrt() + ((1.0 - as_) * (1.0 - at)).sqrt()).powi(2)
            })
            .product();
        let lat = ode_solve(&probe(), &normal, 0, 100, &cfg, &reg).unwrap();
        let back = ode_solve(&lat, &normal, 100, 0, &cfg, &reg).unwrap();
        for (a, b) in back.as_slice().iter().zip(probe().as_slice()) {
            assert!((a - chain * b).abs() < 1e-9);
        }
    }

    #[test]
    fn solve_argument_errors() {
        let (reg, zero, _) = registry();
        let cfg = SolverConfig::new(10);
        assert!(ode_solve(&probe(), &zero, 0, 0, &cfg, &reg).is_err());
        assert!(ode_solve(&probe(), &zero, 0, 50, &cfg, &reg).is_err());
        assert!(ode_solve(&probe(), &zero, 100, 100, &cfg, &reg).is_err());
        assert!(ode_solve(&probe(), &zero, 0, 100, &SolverConfig::new(101), &reg).is_err());
        let short = StepSequence::new(vec![0, 40, 80]).unwrap();
        assert!(ode_solve_on(&probe(), &zero, 0, 100, &short, &reg).is_err());
        let bad_key = EstimatorRegistry::new(NoiseSchedule::default_linear(), SHAPE)
            .with("other", Estimator::Zero { dim: 9 })
            .unwrap()
            .key("other")
            .unwrap();
        assert!(matches!(ode_solve(&probe(), &bad_key, 0, 100, &cfg, &reg), Err(Error::UnknownKey(_))));
        assert!(ddim_step(&probe(), 0, 101, &zero, &reg).is_err());
        assert!(ddim_step(&probe(), 101, 0, &zero, &reg).is_err());
    }
}

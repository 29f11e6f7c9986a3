//! Closed-form conditional noise estimators.
//!
//! Each condition key is bound to an isotropic Gaussian mixture
//! `p_0 = Σ_k w_k N(μ_k, σ_k² I)`. Under the forward process the time-`t`
//! marginal stays a mixture, `p_t = Σ_k w_k N(√ᾱ_t μ_k, s_{t,k}² I)` with
//! `s_{t,k}² = ᾱ_t σ_k² + 1 − ᾱ_t`, so its score and the matching noise
//! prediction `ε(x, t) = −√(1−ᾱ_t) ∇log p_t(x)` are exact.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{squared_distance, ImageVector, Shape};
use crate::schedule::NoiseSchedule;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmPrior {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidPrior("mixture has no components".into()));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::InvalidPrior(format!(
                "{k} weights but {} means and {} variances",
                means.len(),
                variances.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidPrior(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidPrior(format!("weights sum to {total}, not 1")));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidPrior(format!("variance {v} is not positive")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidPrior("zero-dimensional means".into()));
        }
        for (i, m) in means.iter().enumerate() {
            if m.len() != dim {
                return Err(Error::InvalidPrior(format!("mean {i} has length {}, expected {dim}", m.len())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPrior(format!("mean {i} has non-finite entries")));
            }
        }
        Ok(Self { dim, weights, means, variances })
    }

    /// Equal-weight mixture with one shared variance, one component per template.
    pub fn from_templates(templates: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        let k = templates.len();
        if k == 0 {
            return Err(Error::InvalidPrior("no templates".into()));
        }
        Self::new(vec![1.0 / k as f64; k], templates, vec![variance; k])
    }

    /// `N(0, I)`.
    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::new(vec![1.0], vec![vec![0.0; dim]], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn marginal_variances(&self, alpha_bar: f64) -> impl Iterator<Item = f64> + '_ {
        self.variances.iter().map(move |v| alpha_bar * v + (1.0 - alpha_bar))
    }

    /// Unnormalized log responsibilities (constant `2π` term dropped).
    fn log_terms(&self, x: &[f64], alpha_bar: f64) -> Vec<f64> {
        let scale = alpha_bar.sqrt();
        let half_dim = self.dim as f64 / 2.0;
        self.marginal_variances(alpha_bar)
            .zip(&self.means)
            .zip(&self.weights)
            .map(|((s2, mean), w)| {
                let dist2: f64 = x.iter().zip(mean).map(|(xi, m)| (xi - scale * m).powi(2)).sum();
                w.ln() - dist2 / (2.0 * s2) - half_dim * s2.ln()
            })
            .collect()
    }

    /// Posterior component probabilities at `x` under the time-marginal with
    /// cumulative retention `alpha_bar`, computed with log-sum-exp.
    pub fn responsibilities(&self, x: &[f64], alpha_bar: f64) -> Vec<f64> {
        softmax(&self.log_terms(x, alpha_bar))
    }

    /// `∇_x log p_t(x)`.
    pub fn score(&self, x: &[f64], alpha_bar: f64) -> Vec<f64> {
        let resp = self.responsibilities(x, alpha_bar);
        let scale = alpha_bar.sqrt();
        let mut out = vec![0.0; self.dim];
        for ((r, mean), s2) in resp.iter().zip(&self.means).zip(self.marginal_variances(alpha_bar)) {
            if *r == 0.0 {
                continue;
            }
            let c = r / s2;
            for ((o, m), xi) in out.iter_mut().zip(mean).zip(x) {
                *o += c * (scale * m - xi);
            }
        }
        out
    }

    /// Draws a component index and a sample from it.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let k = if self.weights.len() == 1 {
            0
        } else {
            WeightedIndex::new(&self.weights).expect("weights validated").sample(rng)
        };
        let sd = self.variances[k].sqrt();
        let x = self.means[k]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect();
        (k, x)
    }

    /// Index of the component mean closest to `x` in Euclidean distance.
    pub fn nearest_component(&self, x: &[f64]) -> usize {
        self.nearest_mean(x).0
    }

    /// `(index, squared distance)` of the closest component mean.
    pub fn nearest_mean(&self, x: &[f64]) -> (usize, f64) {
        self.means
            .iter()
            .map(|m| squared_distance(x, m))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one component")
    }

    /// Mixture mean `Σ w_k μ_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += w * v;
            }
        }
        out
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// What drives the noise prediction for one key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Estimator {
    Mixture(GmmPrior),
    /// Predicts zero noise everywhere. Only useful for diagnostics: every
    /// DDIM step degenerates to a pure rescaling.
    Zero {
        dim: usize,
    },
}

impl Estimator {
    pub fn dim(&self) -> usize {
        match self {
            Estimator::Mixture(p) => p.dim(),
            Estimator::Zero { dim } => *dim,
        }
    }

    pub fn as_mixture(&self) -> Option<&GmmPrior> {
        match self {
            Estimator::Mixture(p) => Some(p),
            Estimator::Zero { .. } => None,
        }
    }
}

/// A named condition. Keys compare by name only.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct ConditionKey {
    name: String,
    prior_id: usize,
}

impl ConditionKey {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn prior_id(&self) -> usize {
        self.prior_id
    }
}

impl PartialEq for ConditionKey {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl std::hash::Hash for ConditionKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state);
    }
}

impl std::fmt::Display for ConditionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name)
    }
}

/// Named estimators over one shared schedule and image dimension.
/// Immutable once built; every query is a pure function.
#[derive(Debug, Clone)]
pub struct EstimatorRegistry {
    schedule: NoiseSchedule,
    shape: Shape,
    names: Vec<String>,
    entries: Vec<Estimator>,
    index: HashMap<String, usize>,
}

impl EstimatorRegistry {
    pub fn new(schedule: NoiseSchedule, shape: Shape) -> Self {
        Self { schedule, shape, names: Vec::new(), entries: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, estimator: Estimator) -> Result<ConditionKey> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidArgument("key name must not be empty".into()));
        }
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateKey(name));
        }
        if estimator.dim() != self.shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("dimension {} ({})", self.shape.len(), self.shape),
                found: format!("prior `{name}` of dimension {}", estimator.dim()),
            });
        }
        let prior_id = self.entries.len();
        self.index.insert(name.clone(), prior_id);
        self.names.push(name.clone());
        self.entries.push(estimator);
        Ok(ConditionKey { name, prior_id })
    }

    pub fn with(mut self, name: impl Into<String>, estimator: Estimator) -> Result<Self> {
        self.insert(name, estimator)?;
        Ok(self)
    }

    pub fn key(&self, name: &str) -> Result<ConditionKey> {
        self.index
            .get(name)
            .map(|&prior_id| ConditionKey { name: name.to_owned(), prior_id })
            .ok_or_else(|| Error::UnknownKey(name.to_owned()))
    }

    pub fn keys(&self) -> Vec<ConditionKey> {
        self.names.iter().enumerate().map(|(prior_id, name)| ConditionKey { name: name.clone(), prior_id }).collect()
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn estimator(&self, key: &ConditionKey) -> Result<&Estimator> {
        // Keys from another registry may carry a stale id, so resolve by name.
        let id = match self.names.get(key.prior_id) {
            Some(n) if *n == key.name => key.prior_id,
            _ => *self.index.get(&key.name).ok_or_else(|| Error::UnknownKey(key.name.clone()))?,
        };
        Ok(&self.entries[id])
    }

    pub fn mixture(&self, key: &ConditionKey) -> Result<&GmmPrior> {
        self.estimator(key)?.as_mixture().ok_or_else(|| Error::NotSampleable(key.name.clone()))
    }

    pub fn ensure_shape(&self, x: &ImageVector) -> Result<()> {
        if x.shape() != self.shape {
            return Err(Error::ShapeMismatch { expected: self.shape.to_string(), found: x.shape().to_string() });
        }
        Ok(())
    }

    /// Noise prediction `ε(x, t | key)`.
    ///
    /// Defined for `0 ≤ t ≤ T`; at `t = 0` the prefactor `√(1−ᾱ_0)` vanishes
    /// and the prediction is exactly zero.
    pub fn epsilon(&self, x: &ImageVector, t: usize, key: &ConditionKey) -> Result<ImageVector> {
        let estimator = self.estimator(key)?;
        self.ensure_shape(x)?;
        let alpha_bar = self.schedule.alpha_bar(t)?;
        let data = match estimator {
            Estimator::Zero { .. } => vec![0.0; x.len()],
            Estimator::Mixture(prior) => {
                let c = -(1.0 - alpha_bar).sqrt();
                let mut score = prior.score(x.as_slice(), alpha_bar);
                score.iter_mut().for_each(|v| *v *= c);
                score
            }
        };
        x.with_data(data)
    }

    /// Predicted clean image `(x − √(1−ᾱ_t)·ε) / √ᾱ_t`.
    pub fn f_theta(&self, x: &ImageVector, t: usize, key: &ConditionKey) -> Result<ImageVector> {
        let eps = self.epsilon(x, t, key)?;
        self.denoise_with(x, t, &eps)
    }

    pub(crate) fn denoise_with(&self, x: &ImageVector, t: usize, eps: &ImageVector) -> Result<ImageVector> {
        let ab = self.schedule.alpha_bar(t)?;
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        x.with_data(x.as_slice().iter().zip(eps.as_slice()).map(|(xi, e)| (xi - b * e) / a).collect())
    }

    /// One seeded draw from the key's prior.
    pub fn sample_prior(&self, key: &ConditionKey, rng_seed: u64) -> Result<ImageVector> {
        self.sample_prior_labeled(key, rng_seed).map(|(_, x)| x)
    }

    /// One seeded draw together with the component it came from.
    pub fn sample_prior_labeled(&self, key: &ConditionKey, rng_seed: u64) -> Result<(usize, ImageVector)> {
        let prior = self.mixture(key)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let (k, data) = prior.sample(&mut rng);
        Ok((k, ImageVector::new(self.shape, data)?))
    }
}

//! The built-in 16×16 grayscale toy world: a few template families, each
//! turned into an equal-weight isotropic mixture.
//!
//! `glyphs` is the default private key and `glyphs-striped` (the same glyphs
//! with a horizontal stripe texture added) the default public key. `blobs`
//! and `gradients` are unrelated families that serve as wrong-key guesses.

use crate::error::Result;
use crate::image::{ImageVector, Shape};
use crate::prior::{ConditionKey, Estimator, EstimatorRegistry, GmmPrior};
use crate::schedule::NoiseSchedule;
use crate::seed::derive_seed;

pub const SIZE: usize = 16;
pub const SHAPE: Shape = Shape::gray(SIZE, SIZE);
/// Per-component variance, σ = 0.08.
pub const VARIANCE: f64 = 0.0064;

pub const GLYPHS: &str = "glyphs";
pub const GLYPHS_STRIPED: &str = "glyphs-striped";
pub const BLOBS: &str = "blobs";
pub const GRADIENTS: &str = "gradients";

const GLYPH_BASE: f64 = 0.25;
const GLYPH_INK: f64 = 0.6;
const STRIPE: f64 = 0.15;

fn raster(f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(SIZE * SIZE);
    for y in 0..SIZE {
        for x in 0..SIZE {
            out.push(f(y as f64, x as f64));
        }
    }
    out
}

/// Horizontal bar, vertical bar, ring, diagonal.
pub fn glyph_templates() -> Vec<Vec<f64>> {
    let c = (SIZE as f64 - 1.0) / 2.0;
    let ink = |on: bool| GLYPH_BASE + if on { GLYPH_INK } else { 0.0 };
    vec![
        raster(|y, _| ink((6.0..10.0).contains(&y))),
        raster(|_, x| ink((6.0..10.0).contains(&x))),
        raster(|y, x| {
            let r = (y - c).hypot(x - c);
            ink(r > 3.0 && r < 6.0)
        }),
        raster(|y, x| ink((y - x).abs() < 2.0)),
    ]
}

/// Pairs of rows alternately lifted by a constant.
pub fn stripe_pattern() -> Vec<f64> {
    raster(|y, _| if (y as usize / 2) % 2 == 1 { STRIPE } else { 0.0 })
}

pub fn striped_glyph_templates() -> Vec<Vec<f64>> {
    let stripes = stripe_pattern();
    glyph_templates().into_iter().map(|t| t.iter().zip(&stripes).map(|(a, b)| a + b).collect()).collect()
}

/// One soft blob near each corner.
pub fn blob_templates() -> Vec<Vec<f64>> {
    [(4.0, 4.0), (4.0, 11.0), (11.0, 4.0), (11.0, 11.0)]
        .into_iter()
        .map(|(cy, cx)| raster(move |y, x| 0.2 + 0.6 * (-((y - cy).powi(2) + (x - cx).powi(2)) / 8.0).exp()))
        .collect()
}

/// Linear ramps in the four axis directions.
pub fn gradient_templates() -> Vec<Vec<f64>> {
    let n = SIZE as f64 - 1.0;
    vec![
        raster(move |_, x| 0.15 + 0.7 * x / n),
        raster(move |y, _| 0.15 + 0.7 * y / n),
        raster(move |_, x| 0.15 + 0.7 * (1.0 - x / n)),
        raster(move |y, _| 0.15 + 0.7 * (1.0 - y / n)),
    ]
}

pub fn families() -> Vec<(&'static str, Vec<Vec<f64>>)> {
    vec![
        (GLYPHS, glyph_templates()),
        (GLYPHS_STRIPED, striped_glyph_templates()),
        (BLOBS, blob_templates()),
        (GRADIENTS, gradient_templates()),
    ]
}

/// All four families over `schedule`.
pub fn registry(schedule: NoiseSchedule) -> Result<EstimatorRegistry> {
    let mut reg = EstimatorRegistry::new(schedule, SHAPE);
    for (name, templates) in families() {
        reg.insert(name, Estimator::Mixture(GmmPrior::from_templates(templates, VARIANCE)?))?;
    }
    Ok(reg)
}

pub fn default_registry() -> EstimatorRegistry {
    registry(NoiseSchedule::default_linear()).expect("toy priors are valid")
}

/// A labeled secret drawn from a key's prior.
#[derive(Debug, Clone)]
pub struct Secret {
    pub component: usize,
    pub image: ImageVector,
}

/// `n` secrets from `key`, clamped to `[0, 1]`. Item `i` depends only on
/// `(seed, i)`.
pub fn secret_corpus(registry: &EstimatorRegistry, key: &ConditionKey, n: usize, seed: u64) -> Result<Vec<Secret>> {
    (0..n as u64)
        .map(|i| {
            let (component, image) = registry.sample_prior_labeled(key, derive_seed(seed, &[i]))?;
            Ok(Secret { component, image: image.clamped() })
        })
        .collect()
}

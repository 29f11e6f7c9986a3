//! Simulated transmission channels applied to container images.
//!
//! Every kind except `identity` first stores the image at 8 bits, then
//! degrades it, and returns values inside `[0, 1]`.

mod jpeg;
mod resize;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageVector;

pub use jpeg::{jpeg_like, quality_scale, quantization_table, LUMINANCE_TABLE};
pub use resize::{bicubic_resize, down_up};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    Identity,
    /// Additive Gaussian noise; severity is σ on the 0–255 scale.
    GaussianNoise,
    /// Block-DCT quantization; severity is the quality factor 1–100.
    JpegLike,
    /// Bicubic downscale then upscale; severity is the integer factor.
    Resize,
}

impl DegradationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DegradationKind::Identity => "identity",
            DegradationKind::GaussianNoise => "gaussian_noise",
            DegradationKind::JpegLike => "jpeg_like",
            DegradationKind::Resize => "resize",
        }
    }
}

impl std::fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DegradationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "gaussian_noise" => Ok(Self::GaussianNoise),
            "jpeg_like" => Ok(Self::JpegLike),
            "resize" => Ok(Self::Resize),
            other => Err(Error::InvalidDegradation(format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    #[serde(default)]
    pub severity: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DegradationSpec {
    pub fn identity() -> Self {
        Self { kind: DegradationKind::Identity, severity: 0.0, seed: 0 }
    }

    pub fn gaussian_noise(sigma: f64, seed: u64) -> Self {
        Self { kind: DegradationKind::GaussianNoise, severity: sigma, seed }
    }

    pub fn jpeg_like(quality: u8) -> Self {
        Self { kind: DegradationKind::JpegLike, severity: f64::from(quality), seed: 0 }
    }

    pub fn resize(factor: usize) -> Self {
        Self { kind: DegradationKind::Resize, severity: factor as f64, seed: 0 }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn is_stochastic(&self) -> bool {
        self.kind == DegradationKind::GaussianNoise && self.severity > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.severity;
        let bad = |msg: String| Err(Error::InvalidDegradation(msg));
        if !s.is_finite() {
            return bad(format!("severity {s} is not finite"));
        }
        match self.kind {
            DegradationKind::Identity if s != 0.0 => bad("identity takes no severity".into()),
            DegradationKind::GaussianNoise if !(0.0..=255.0).contains(&s) => {
                bad(format!("noise sigma {s} outside [0, 255]"))
            }
            DegradationKind::JpegLike if s.fract() != 0.0 || !(1.0..=100.0).contains(&s) => {
                bad(format!("jpeg quality {s} is not an integer in [1, 100]"))
            }
            DegradationKind::Resize if s.fract() != 0.0 || s < 1.0 => {
                bad(format!("resize factor {s} is not a positive integer"))
            }
            _ => Ok(()),
        }
    }

    /// Short label such as `gaussian_noise:10`.
    pub fn label(&self) -> String {
        match self.kind {
            DegradationKind::Identity => "identity".into(),
            kind => format!("{}:{}", kind.as_str(), self.severity),
        }
    }
}

/// `d(x)`. Deterministic given `spec`, including its seed.
pub fn apply(x: &ImageVector, spec: &DegradationSpec) -> Result<ImageVector> {
    spec.validate()?;
    match spec.kind {
        DegradationKind::Identity => Ok(x.clone()),
        DegradationKind::GaussianNoise => {
            let stored = x.quantized();
            if spec.severity == 0.0 {
                return Ok(stored);
            }
            let normal = Normal::new(0.0, spec.severity / 255.0).expect("sigma validated");
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            Ok(stored.map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0)))
        }
        DegradationKind::JpegLike => jpeg_like(x, spec.severity as u8),
        DegradationKind::Resize => down_up(x, spec.severity as usize),
    }
}

/// Default sweep grid: identity, noise σ ∈ {0, 10, 20, 30}, JPEG Q ∈ {80, 40, 20}.
pub fn default_grid() -> Vec<DegradationSpec> {
    let mut grid = vec![DegradationSpec::identity()];
    grid.extend([0.0, 10.0, 20.0, 30.0].map(|s| DegradationSpec::gaussian_noise(s, 0)));
    grid.extend([80, 40, 20].map(DegradationSpec::jpeg_like));
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;
    use proptest::prelude::*;

    fn textured(seed: u64) -> ImageVector {
        let shape = Shape::gray(32, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.08).unwrap();
        let data = (0..shape.len())
            .map(|i| {
                let (y, x) = ((i / 32) as f64, (i % 32) as f64);
                (0.5 + 0.25 * (x / 3.0).sin() * (y / 5.0).cos() + noise.sample(&mut rng)).clamp(0.0, 1.0)
            })
            .collect();
        ImageVector::new(shape, data).unwrap()
    }

    fn psnr(a: &ImageVector, b: &ImageVector) -> f64 {
        let mse = a.rms_distance(b).unwrap().powi(2);
        10.0 * (1.0 / mse).log10()
    }

    #[test]
    fn identity_is_exact() {
        let x = textured(1).map(|v| v + 1e-7);
        assert_eq!(apply(&x, &DegradationSpec::identity()).unwrap(), x);
    }

    #[test]
    fn zero_noise_only_quantizes() {
        let x = textured(2).map(|v| v * 0.999 + 1e-4);
        assert_eq!(apply(&x, &DegradationSpec::gaussian_noise(0.0, 9)).unwrap(), x.quantized());
    }

    #[test]
    fn noise_level_matches_sigma() {
        let shape = Shape::gray(100, 100);
        let x = ImageVector::filled(shape, 0.5);
        let out = apply(&x, &DegradationSpec::gaussian_noise(20.0, 4)).unwrap();
        let base = x.quantized();
        let diffs: Vec<f64> = out.as_slice().iter().zip(base.as_slice()).map(|(a, b)| a - b).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd / (20.0 / 255.0) - 1.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn stochastic_kinds_are_seeded() {
        let x = textured(3);
        let a = apply(&x, &DegradationSpec::gaussian_noise(10.0, 5)).unwrap();
        assert_eq!(a, apply(&x, &DegradationSpec::gaussian_noise(10.0, 5)).unwrap());
        assert_ne!(a, apply(&x, &DegradationSpec::gaussian_noise(10.0, 6)).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let x = textured(3);
        for spec in [
            DegradationSpec { kind: DegradationKind::Identity, severity: 1.0, seed: 0 },
            DegradationSpec::gaussian_noise(-1.0, 0),
            DegradationSpec::gaussian_noise(f64::NAN, 0),
            DegradationSpec { kind: DegradationKind::JpegLike, severity: 0.0, seed: 0 },
            DegradationSpec { kind: DegradationKind::JpegLike, severity: 101.0, seed: 0 },
            DegradationSpec { kind: DegradationKind::JpegLike, severity: 50.5, seed: 0 },
            DegradationSpec { kind: DegradationKind::Resize, severity: 0.0, seed: 0 },
            DegradationSpec { kind: DegradationKind::Resize, severity: 1.5, seed: 0 },
        ] {
            assert!(apply(&x, &spec).is_err(), "{spec:?}");
        }
        assert!("blur".parse::<DegradationKind>().is_err());
        assert_eq!("jpeg_like".parse::<DegradationKind>().unwrap(), DegradationKind::JpegLike);
    }

    #[test]
    fn psnr_falls_with_severity() {
        let x = textured(8);
        let curve = |specs: Vec<DegradationSpec>| -> Vec<f64> {
            specs.iter().map(|s| psnr(&x, &apply(&x, s).unwrap())).collect()
        };
        let noise = curve([0.0, 10.0, 20.0, 30.0].map(|s| DegradationSpec::gaussian_noise(s, 17)).to_vec());
        let jpeg = curve([80, 40, 20].map(DegradationSpec::jpeg_like).to_vec());
        let resize = curve([1, 2, 4].map(DegradationSpec::resize).to_vec());
        for c in [&noise, &jpeg, &resize] {
            assert!(c.windows(2).all(|w| w[0] >= w[1]), "{c:?}");
        }
    }

    #[test]
    fn default_grid_is_valid() {
        let grid = default_grid();
        assert_eq!(grid.len(), 8);
        assert!(grid.iter().all(|s| s.validate().is_ok()));
        assert_eq!(grid[0].kind, DegradationKind::Identity);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn channels_stay_in_unit_range(
            values in prop::collection::vec(0.0f64..=1.0, 24 * 16),
            kind in 0usize..4,
            sev in 0usize..4,
            seed in any::<u64>(),
        ) {
            let x = ImageVector::new(Shape::gray(24, 16), values).unwrap();
            let spec = match kind {
                0 => DegradationSpec::identity(),
                1 => DegradationSpec::gaussian_noise([0.0, 10.0, 30.0, 255.0][sev], seed),
                2 => DegradationSpec::jpeg_like([1, 20, 80, 100][sev]),
                _ => DegradationSpec::resize([1, 2, 3, 4][sev]),
            };
            let out = apply(&x, &spec).unwrap();
            prop_assert_eq!(out.shape(), x.shape());
            prop_assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

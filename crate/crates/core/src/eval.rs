//! Fidelity metrics and experiment harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply, DegradationKind, DegradationSpec};
use crate::ddim::SolverConfig;
use crate::error::{Error, Result};
use crate::image::{squared_distance, ImageVector};
use crate::prior::{ConditionKey, EstimatorRegistry, GmmPrior};
use crate::seed::derive_seed;
use crate::stego::{hide, reveal, StegoJob};

/// Returned by [`psnr`] when the MSE is below [`MSE_FLOOR`].
pub const PSNR_CAP: f64 = 99.0;
pub const MSE_FLOOR: f64 = 1e-10;

pub fn mse(a: &ImageVector, b: &ImageVector) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.is_empty() {
        return Err(Error::Empty("image"));
    }
    Ok(squared_distance(a.as_slice(), b.as_slice()) / a.len() as f64)
}

/// `10·log10(1/MSE)` on the `[0, 1]` scale, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageVector, b: &ImageVector) -> Result<f64> {
    let e = mse(a, b)?;
    Ok(if e < MSE_FLOOR { PSNR_CAP } else { (10.0 * (1.0 / e).log10()).min(PSNR_CAP) })
}

/// PSNR after storing both images at 8 bits.
pub fn psnr_u8(a: &ImageVector, b: &ImageVector) -> Result<f64> {
    psnr(&a.quantized(), &b.quantized())
}

pub fn rms(a: &ImageVector, b: &ImageVector) -> Result<f64> {
    mse(a, b).map(f64::sqrt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub grid: Vec<DegradationSpec>,
    pub solver: SolverConfig,
    pub seed: u64,
    /// Channel draws per corpus item and grid cell.
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: DegradationKind,
    pub severity: f64,
    pub mean_psnr: f64,
    pub mean_psnr_u8: f64,
    pub mean_rms: f64,
    /// Share of trials whose revealed image falls nearest to the same
    /// private-prior component as the secret. `None` for non-mixture keys.
    pub class_agreement: Option<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSnapshot {
    /// Omitted from published reports unless diagnostics are requested.
    pub private_key: Option<String>,
    pub public_key: String,
    pub corpus_size: usize,
    pub schedule_steps: usize,
    pub settings: SweepSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub config: SweepSnapshot,
}

impl SweepReport {
    pub fn row(&self, kind: DegradationKind, severity: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.kind == kind && r.severity == severity)
    }
}

struct Trial {
    psnr: f64,
    psnr_u8: f64,
    rms: f64,
    agrees: Option<bool>,
}

/// Hide every corpus item, push the container through each channel in the
/// grid, reveal, and average fidelity per grid cell.
///
/// Channel seeds come from `(seed, cell, item, repeat)` so results do not
/// depend on scheduling.
pub fn robustness_sweep(
    corpus: &[ImageVector],
    private_key: &ConditionKey,
    public_key: &ConditionKey,
    settings: &SweepSettings,
    registry: &EstimatorRegistry,
) -> Result<SweepReport> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if settings.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    if !settings.grid.iter().any(|s| s.kind == DegradationKind::Identity) {
        return Err(Error::InvalidDegradation("grid must include the identity channel".into()));
    }
    for spec in &settings.grid {
        spec.validate()?;
    }
    registry.estimator(private_key)?;
    registry.estimator(public_key)?;
    let classifier = registry.mixture(private_key).ok();

    let containers: Vec<ImageVector> = corpus
        .par_iter()
        .map(|secret| {
            let job = StegoJob::new(secret.clone(), private_key.clone(), public_key.clone(), settings.solver)
                .diagnostic(private_key == public_key);
            hide(&job, registry).map(|r| r.container)
        })
        .collect::<Result<_>>()?;
    let secret_classes: Vec<Option<usize>> =
        corpus.iter().map(|s| classifier.map(|p| p.nearest_component(s.as_slice()))).collect();

    let n_items = corpus.len();
    let per_cell = n_items * settings.repeats;
    let jobs: Vec<(usize, usize, usize)> = (0..settings.grid.len())
        .flat_map(|c| (0..n_items).flat_map(move |i| (0..settings.repeats).map(move |r| (c, i, r))))
        .collect();
    let trials: Vec<Trial> = jobs
        .par_iter()
        .map(|&(cell, item, rep)| {
            let base = settings.grid[cell];
            let spec = base.with_seed(derive_seed(settings.seed ^ base.seed, &[cell as u64, item as u64, rep as u64]));
            let received = apply(&containers[item], &spec)?;
            let revealed = reveal(&received, public_key, private_key, &settings.solver, registry)?;
            let secret = &corpus[item];
            Ok(Trial {
                psnr: psnr(secret, &revealed)?,
                psnr_u8: psnr_u8(secret, &revealed)?,
                rms: rms(secret, &revealed)?,
                agrees: classifier
                    .zip(secret_classes[item])
                    .map(|(p, k)| p.nearest_component(revealed.as_slice()) == k),
            })
        })
        .collect::<Result<_>>()?;

    let rows = settings
        .grid
        .iter()
        .zip(trials.chunks(per_cell))
        .map(|(spec, cell)| {
            let n = cell.len() as f64;
            let mean = |f: fn(&Trial) -> f64| cell.iter().map(f).sum::<f64>() / n;
            SweepRow {
                kind: spec.kind,
                severity: spec.severity,
                mean_psnr: mean(|t| t.psnr),
                mean_psnr_u8: mean(|t| t.psnr_u8),
                mean_rms: mean(|t| t.rms),
                class_agreement: classifier.map(|_| cell.iter().filter(|t| t.agrees == Some(true)).count() as f64 / n),
                trials: cell.len(),
            }
        })
        .collect();

    Ok(SweepReport {
        rows,
        config: SweepSnapshot {
            private_key: Some(private_key.name().to_owned()),
            public_key: public_key.name().to_owned(),
            corpus_size: n_items,
            schedule_steps: registry.schedule().num_steps(),
            settings: settings.clone(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRow {
    pub key: String,
    pub correct: bool,
    pub psnr: f64,
    pub rms: f64,
    /// Registry key whose prior has the mean nearest to the revealed image.
    pub nearest_prior: Option<String>,
    pub nearest_component: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeySensitivityReport {
    pub rows: Vec<KeyRow>,
}

impl KeySensitivityReport {
    /// The candidate with the highest PSNR to the secret.
    pub fn best(&self) -> &KeyRow {
        self.rows.iter().max_by(|a, b| a.psnr.total_cmp(&b.psnr)).expect("at least two rows")
    }
}

/// Nearest mean over every mixture in the registry: `(key, component)`.
pub fn nearest_prior(x: &ImageVector, registry: &EstimatorRegistry) -> Option<(ConditionKey, usize)> {
    registry
        .keys()
        .into_iter()
        .filter_map(|k| {
            let (comp, d2) = registry.mixture(&k).ok()?.nearest_mean(x.as_slice());
            Some((k, comp, d2))
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(k, c, _)| (k, c))
}

/// Hide under `(k_pri, k_pub)`, then reveal with the true private key and with
/// each guessed key.
pub fn key_sensitivity(
    secret: &ImageVector,
    private_key: &ConditionKey,
    public_key: &ConditionKey,
    wrong_keys: &[ConditionKey],
    solver: &SolverConfig,
    registry: &EstimatorRegistry,
) -> Result<KeySensitivityReport> {
    if wrong_keys.is_empty() {
        return Err(Error::Empty("wrong_keys"));
    }
    if let Some(k) = wrong_keys.iter().find(|k| *k == private_key) {
        return Err(Error::InvalidArgument(format!("wrong key list contains the private key `{k}`")));
    }
    for k in wrong_keys {
        registry.estimator(k)?;
    }
    let job = StegoJob::new(secret.clone(), private_key.clone(), public_key.clone(), *solver)
        .diagnostic(private_key == public_key);
    let container = hide(&job, registry)?.container;

    let candidates: Vec<&ConditionKey> = std::iter::once(private_key).chain(wrong_keys).collect();
    let rows = candidates
        .par_iter()
        .map(|&key| {
            let revealed = reveal(&container, public_key, key, solver, registry)?;
            let nearest = nearest_prior(&revealed, registry);
            Ok(KeyRow {
                key: key.name().to_owned(),
                correct: key == private_key,
                psnr: psnr(secret, &revealed)?,
                rms: rms(secret, &revealed)?,
                nearest_prior: nearest.as_ref().map(|(k, _)| k.name().to_owned()),
                nearest_component: nearest.map(|(_, c)| c),
            })
        })
        .collect::<Result<_>>()?;
    Ok(KeySensitivityReport { rows })
}

pub const MOMENT_TEST_MIN_BATCH: usize = 30;
pub const MOMENT_TEST_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTest {
    /// Largest per-coordinate |z| of the batch mean.
    pub mean_z_max: f64,
    /// z-score of the summed per-coordinate sample variances.
    pub variance_z: f64,
    /// `max(mean_z_max, |variance_z|)`, compared with the threshold.
    pub statistic: f64,
    pub passed: bool,
}

/// Analytic moments of an isotropic mixture.
struct MixtureMoments {
    mean: Vec<f64>,
    coord_var: Vec<f64>,
    /// `E‖X − m‖²`.
    total_var: f64,
    /// `Var ‖X − m‖²`.
    total_var_var: f64,
    /// `tr(Σ²)`.
    trace_cov_sq: f64,
}

impl MixtureMoments {
    fn of(prior: &GmmPrior) -> Self {
        let d = prior.dim();
        let mean = prior.mean();
        let offsets: Vec<Vec<f64>> =
            prior.means().iter().map(|mu| mu.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
        let w = prior.weights();
        let var = prior.variances();

        let mut coord_var = vec![0.0; d];
        for ((wk, vk), a) in w.iter().zip(var).zip(&offsets) {
            for (cv, ai) in coord_var.iter_mut().zip(a) {
                *cv += wk * (vk + ai * ai);
            }
        }

        let norms: Vec<f64> = offsets.iter().map(|a| a.iter().map(|v| v * v).sum()).collect();
        let df = d as f64;
        let mut e_q = 0.0;
        let mut e_q2 = 0.0;
        for k in 0..w.len() {
            let e = norms[k] + df * var[k];
            let v = 4.0 * var[k] * norms[k] + 2.0 * df * var[k] * var[k];
            e_q += w[k] * e;
            e_q2 += w[k] * (v + e * e);
        }

        let within: f64 = w.iter().zip(var).map(|(a, b)| a * b).sum();
        let between_trace: f64 = w.iter().zip(&norms).map(|(a, b)| a * b).sum();
        let mut between_sq = 0.0;
        for (j, aj) in offsets.iter().enumerate() {
            for (k, ak) in offsets.iter().enumerate() {
                let dot: f64 = aj.iter().zip(ak).map(|(x, y)| x * y).sum();
                between_sq += w[j] * w[k] * dot * dot;
            }
        }
        Self {
            mean,
            coord_var,
            total_var: e_q,
            total_var_var: e_q2 - e_q * e_q,
            trace_cov_sq: df * within * within + 2.0 * within * between_trace + between_sq,
        }
    }
}

/// Checks whether a batch is consistent with the first two moments of the
/// key's prior.
///
/// The mean is tested coordinate by coordinate and summarized by the largest
/// |z|. The variance is tested through the sum of per-coordinate sample
/// variances against its analytic expectation, which stays close to normal at
/// the supported batch sizes where single-coordinate variances do not.
pub fn container_moment_test(
    containers: &[ImageVector],
    public_key: &ConditionKey,
    registry: &EstimatorRegistry,
) -> Result<MomentTest> {
    if containers.len() < MOMENT_TEST_MIN_BATCH {
        return Err(Error::BatchTooSmall { found: containers.len(), min: MOMENT_TEST_MIN_BATCH });
    }
    let prior = registry.mixture(public_key)?;
    for c in containers {
        registry.ensure_shape(c)?;
    }
    let m = MixtureMoments::of(prior);
    let n = containers.len() as f64;
    let d = prior.dim();

    let mut sample_mean = vec![0.0; d];
    for c in containers {
        for (s, v) in sample_mean.iter_mut().zip(c.as_slice()) {
            *s += v;
        }
    }
    sample_mean.iter_mut().for_each(|s| *s /= n);
    let mut sample_var = vec![0.0; d];
    for c in containers {
        for ((s, v), mu) in sample_var.iter_mut().zip(c.as_slice()).zip(&sample_mean) {
            *s += (v - mu) * (v - mu);
        }
    }
    sample_var.iter_mut().for_each(|s| *s /= n - 1.0);

    let mean_z_max =
        (0..d).map(|i| ((sample_mean[i] - m.mean[i]) / (m.coord_var[i] / n).sqrt()).abs()).fold(0.0, f64::max);
    let trace: f64 = sample_var.iter().sum();
    let se = (m.total_var_var / n + 2.0 * m.trace_cov_sq / (n * n)).sqrt();
    let variance_z = (trace - m.total_var) / se;

    let statistic = mean_z_max.max(variance_z.abs());
    Ok(MomentTest { mean_z_max, variance_z, statistic, passed: statistic <= MOMENT_TEST_THRESHOLD })
}

//! Noise schedule and the closed-form forward (noising) process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageVector;

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Per-step retention factors `α_t` and their cumulative products `ᾱ_t`.
///
/// Step indices run over `0..=T`. Index 0 is the clean image with `ᾱ_0 = 1`;
/// `α_t` is only defined for `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear-β schedule with `α_t = 1 − β_t`.
    pub fn linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidSchedule("num_steps must be at least 1".into()));
        }
        for (name, b) in [("beta_start", beta_start), ("beta_end", beta_end)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidSchedule(format!("{name} = {b} is outside (0, 1)")));
            }
        }
        if beta_start > beta_end {
            return Err(Error::InvalidSchedule(format!("beta_start {beta_start} exceeds beta_end {beta_end}")));
        }
        let alphas = (0..num_steps)
            .map(|i| {
                let frac = if num_steps == 1 { 0.0 } else { i as f64 / (num_steps - 1) as f64 };
                1.0 - (beta_start + (beta_end - beta_start) * frac)
            })
            .collect();
        Self::from_alphas(alphas)
    }

    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_TRAIN_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }

    /// Builds a schedule from `α_1..α_T`.
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidSchedule("no steps".into()));
        }
        if let Some((i, a)) = alphas.iter().enumerate().find(|(_, &a)| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InvalidSchedule(format!("alpha_{} = {a} is outside (0, 1]", i + 1)));
        }
        let mut alpha_bars = Vec::with_capacity(alphas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for &a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let last = *alpha_bars.last().unwrap();
        if !(last > 0.0 && last < 1.0) {
            return Err(Error::InvalidSchedule(format!("terminal alpha_bar {last} must lie strictly inside (0, 1)")));
        }
        Ok(Self { alphas, alpha_bars })
    }

    /// `T`.
    pub fn num_steps(&self) -> usize {
        self.alphas.len()
    }

    /// `α_t` for `1 ≤ t ≤ T`.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.num_steps() {
            return Err(Error::StepOutOfRange { index: t, max: self.num_steps() });
        }
        Ok(self.alphas[t - 1])
    }

    /// `ᾱ_t` for `0 ≤ t ≤ T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars.get(t).copied().ok_or(Error::StepOutOfRange { index: t, max: self.num_steps() })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `ᾱ_0..=ᾱ_T`, with the leading 1.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub(crate) fn check_index(&self, t: usize) -> Result<()> {
        if t > self.num_steps() {
            return Err(Error::StepOutOfRange { index: t, max: self.num_steps() });
        }
        Ok(())
    }

    /// Marginal forward process `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·eps`.
    pub fn forward_diffuse(&self, x0: &ImageVector, t: usize, eps: &ImageVector) -> Result<ImageVector> {
        if t == 0 || t > self.num_steps() {
            return Err(Error::StepOutOfRange { index: t, max: self.num_steps() });
        }
        x0.ensure_same_shape(eps)?;
        let ab = self.alpha_bars[t];
        Ok(mix(x0, ab.sqrt(), eps, (1.0 - ab).sqrt()))
    }

    /// One step of the forward chain, `x_t = √α_t·x_{t−1} + √(1−α_t)·eps`.
    pub fn forward_step(&self, x_prev: &ImageVector, t: usize, eps: &ImageVector) -> Result<ImageVector> {
        let a = self.alpha(t)?;
        x_prev.ensure_same_shape(eps)?;
        Ok(mix(x_prev, a.sqrt(), eps, (1.0 - a).sqrt()))
    }
}

fn mix(a: &ImageVector, wa: f64, b: &ImageVector, wb: f64) -> ImageVector {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, e)| wa * x + wb * e).collect();
    a.with_data(data).expect("shapes checked by caller")
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::LatentVector;

/// Parameters that fully determine a linear beta schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleConfig {
    /// Linear schedule with the default endpoints rescaled by `1000 / steps`,
    /// so short schedules still end near pure noise.
    pub fn scaled_linear(steps: usize) -> Self {
        let scale = 1000.0 / steps as f64;
        ScheduleConfig {
            steps,
            beta_start: 1e-4 * scale,
            beta_end: (0.02 * scale).min(0.999),
        }
    }

    pub fn build(&self) -> Result<DiffusionSchedule> {
        build_linear_schedule(self.steps, self.beta_start, self.beta_end)
    }
}

/// Noise levels for steps `1..=T`, with `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    config: ScheduleConfig,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    // index t holds ᾱ_t; index 0 is exactly 1
    alpha_bars: Vec<f64>,
}

pub fn build_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(Error::InvalidParameter("schedule needs T >= 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "schedule needs 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(steps + 1);
    alpha_bars.push(1.0);
    let mut acc = 1.0;
    for a in &alphas {
        acc *= a;
        alpha_bars.push(acc);
    }
    Ok(DiffusionSchedule {
        config: ScheduleConfig {
            steps,
            beta_start,
            beta_end,
        },
        betas,
        alphas,
        alpha_bars,
    })
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    /// β_t for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// α_t for `t` in `1..=T`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Posterior variance β̃_t = β_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t).
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))
    }

    /// Whether the final cumulative product is small enough to treat `d_T` as pure noise.
    pub fn ends_in_noise(&self) -> bool {
        self.alpha_bar(self.steps()) < 1e-4
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(Error::InvalidParameter(format!(
                "step {t} outside 0..={}",
                self.steps()
            )));
        }
        Ok(())
    }
}

/// `d_t = sqrt(ᾱ_t) d0 + sqrt(1 − ᾱ_t) eps`.
pub fn forward_diffuse(
    d0: &LatentVector,
    t: usize,
    eps: &LatentVector,
    schedule: &DiffusionSchedule,
) -> Result<LatentVector> {
    schedule.check_t(t)?;
    diffuse_with_alpha_bar(d0, schedule.alpha_bar(t), eps)
}

/// The forward process for an explicit ᾱ in `[0, 1]`.
pub fn diffuse_with_alpha_bar(d0: &LatentVector, alpha_bar: f64, eps: &LatentVector) -> Result<LatentVector> {
    if d0.dim() != eps.dim() {
        return Err(Error::dims("forward_diffuse noise", d0.dim(), eps.dim()));
    }
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::InvalidParameter(format!(
            "alpha_bar {alpha_bar} outside [0, 1]"
        )));
    }
    let a = alpha_bar.sqrt();
    let b = (1.0 - alpha_bar).sqrt();
    let mut out = vec![0.0; d0.dim()];
    diffuse_into(d0, eps, a, b, &mut out);
    Ok(LatentVector::from_vec_unchecked(out))
}

#[inline]
pub(crate) fn diffuse_into(d0: &[f64], eps: &[f64], sqrt_ab: f64, sqrt_one_minus_ab: f64, out: &mut [f64]) {
    for ((o, x), e) in out.iter_mut().zip(d0).zip(eps) {
        *o = sqrt_ab * x + sqrt_one_minus_ab * e;
    }
}

//! Finite-difference verification of the analytic backward pass.

use serde::{Deserialize, Serialize};

use crate::diffusion::{
    backward_accumulate, denoiser_forward, init_params, BackwardFault, DenoiserConfig,
    DenoiserParams, DiffusionSchedule, ScheduleConfig,
};
use crate::error::Result;
use crate::numerics::{sample_standard_normal, LatentVector, RngStream};
use crate::training::loss::simple_loss;

pub const FD_STEP: f64 = 1e-6;
/// Denominator floor for the relative error, so parameters with vanishing
/// gradients are compared on an absolute scale.
///
/// Central differences at `h = 1e-6` carry about 1e-10 to 3e-10 of absolute
/// rounding noise on these probes whatever the gradient's size, so entries
/// below 1e-4 are judged against an absolute error of `tol · 1e-4`.
pub const REL_ERROR_FLOOR: f64 = 1e-4;
const CHECK_BATCH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub passed: bool,
    pub tolerance: f64,
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub parameters_checked: usize,
    pub fd_step: f64,
}

/// A fixed loss instance: a few `(d0, t, eps)` triples evaluated with the simple loss.
struct Probe {
    d_t: Vec<LatentVector>,
    t: Vec<usize>,
    eps: Vec<LatentVector>,
}

impl Probe {
    fn new(cfg: &DenoiserConfig, schedule: &DiffusionSchedule, rng: &mut RngStream) -> Result<Self> {
        let mut probe = Probe {
            d_t: Vec::new(),
            t: Vec::new(),
            eps: Vec::new(),
        };
        for _ in 0..CHECK_BATCH {
            let d0 = sample_standard_normal(cfg.input_dim, rng)?;
            let t = 1 + rng.below(schedule.steps() as u64) as usize;
            let eps = sample_standard_normal(cfg.input_dim, rng)?;
            probe
                .d_t
                .push(crate::diffusion::forward_diffuse(&d0, t, &eps, schedule)?);
            probe.t.push(t);
            probe.eps.push(eps);
        }
        Ok(probe)
    }

    fn outputs(&self, p: &DenoiserParams) -> Result<Vec<Vec<f64>>> {
        self.d_t
            .iter()
            .zip(&self.t)
            .map(|(d_t, &t)| Ok(denoiser_forward(p, d_t, t)?.0.into_vec()))
            .collect()
    }

    /// `loss(up) − loss(down)`, formed as `Σ (a − b)(a + b − 2ε)` so the large
    /// common part of the two losses cancels before rounding.
    fn loss_difference(&self, up: &[Vec<f64>], down: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for ((a, b), eps) in up.iter().zip(down).zip(&self.eps) {
            total += a
                .iter()
                .zip(b)
                .zip(eps.iter())
                .map(|((a, b), e)| (a - b) * (a + b - 2.0 * e))
                .sum::<f64>();
        }
        total / self.d_t.len() as f64
    }

    fn gradient(&self, p: &DenoiserParams, fault: Option<BackwardFault>) -> Result<DenoiserParams> {
        let mut grads = DenoiserParams::zeros(*p.config())?;
        let scale = 1.0 / self.d_t.len() as f64;
        for ((d_t, &t), eps) in self.d_t.iter().zip(&self.t).zip(&self.eps) {
            let (hat, tape) = denoiser_forward(p, d_t, t)?;
            let (_, mut g) = simple_loss(eps, &hat)?;
            g.iter_mut().for_each(|v| *v *= scale);
            backward_accumulate(p, &tape, &g, &mut grads, fault)?;
        }
        Ok(grads)
    }
}

/// Compare every analytic parameter gradient against central differences.
///
/// The relative error of one entry is `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn gradient_check(cfg: &DenoiserConfig, tol: f64, rng: &mut RngStream) -> Result<GradCheckReport> {
    check_with_fault(cfg, tol, rng, None)
}

#[doc(hidden)]
pub fn check_with_fault(
    cfg: &DenoiserConfig,
    tol: f64,
    rng: &mut RngStream,
    fault: Option<BackwardFault>,
) -> Result<GradCheckReport> {
    cfg.validate()?;
    let schedule = ScheduleConfig::scaled_linear(100).build()?;
    let mut params = init_params(cfg, rng)?;
    // Move layer-norm and bias parameters off their initial values so every
    // term of the backward pass is exercised.
    for t in cfg.layout() {
        if t.shape.len() == 1 {
            for v in &mut params.as_flat_mut()[t.range()] {
                *v += 0.3 * rng.standard_normal();
            }
        }
    }
    let probe = Probe::new(cfg, &schedule, rng)?;
    let analytic = probe.gradient(&params, fault)?;

    let mut worst = (0.0f64, 0usize, 0.0, 0.0);
    let mut work = params.clone();
    for i in 0..params.len() {
        let orig = params.as_flat()[i];
        work.as_flat_mut()[i] = orig + FD_STEP;
        let up = probe.outputs(&work)?;
        work.as_flat_mut()[i] = orig - FD_STEP;
        let down = probe.outputs(&work)?;
        work.as_flat_mut()[i] = orig;
        let numeric = probe.loss_difference(&up, &down) / (2.0 * FD_STEP);
        let a = analytic.as_flat()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        if rel > worst.0 || i == 0 {
            worst = (rel, i, a, numeric);
        }
    }
    Ok(GradCheckReport {
        passed: worst.0 < tol,
        tolerance: tol,
        max_relative_error: worst.0,
        worst_parameter: params.describe_index(worst.1),
        worst_index: worst.1,
        worst_analytic: worst.2,
        worst_numeric: worst.3,
        parameters_checked: params.len(),
        fd_step: FD_STEP,
    })
}

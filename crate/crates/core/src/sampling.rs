//! Ancestral sampling of edit directions and the scale-and-shift edit rule.

use serde::{Deserialize, Serialize};

use crate::diffusion::{predict_noise, time_embedding, DenoiserParams, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::numerics::{LatentVector, RngStream};

/// One ancestral update given a noise estimate:
///
/// ```text
/// d_{t-1} = (d_t − β_t / sqrt(1 − ᾱ_t) · eps_hat) / sqrt(α_t) + σ_t z
/// σ_t² = β_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t)
/// ```
///
/// `z` is drawn from `rng` only when `t > 1`; at `t = 1` no noise is added and
/// the stream is left untouched.
pub fn ancestral_update(
    d_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    schedule: &DiffusionSchedule,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidParameter(format!(
            "reverse step {t} outside 1..={}",
            schedule.steps()
        )));
    }
    if d_t.len() != eps_hat.len() {
        return Err(Error::dims("reverse step noise estimate", d_t.len(), eps_hat.len()));
    }
    let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let mut out: Vec<f64> = d_t
        .iter()
        .zip(eps_hat)
        .map(|(x, e)| inv_sqrt_alpha * (x - coef * e))
        .collect();
    if t > 1 {
        let sigma = schedule.posterior_variance(t).sqrt();
        for o in &mut out {
            *o += sigma * rng.standard_normal();
        }
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite value at coordinate {i} after reverse step {t}"
        )));
    }
    Ok(out)
}

/// Clean-sample estimate `(d_t − sqrt(1 − ᾱ_t) eps_hat) / sqrt(ᾱ_t)` implied by a noise estimate.
pub fn predicted_clean(d_t: &[f64], eps_hat: &[f64], t: usize, schedule: &DiffusionSchedule) -> Vec<f64> {
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    d_t.iter().zip(eps_hat).map(|(x, e)| (x - b * e) / a).collect()
}

/// `d_{t−1}` from `d_t` using the trained denoiser.
pub fn reverse_step(
    params: &DenoiserParams,
    d_t: &LatentVector,
    t: usize,
    schedule: &DiffusionSchedule,
    rng: &mut RngStream,
) -> Result<LatentVector> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidParameter(format!(
            "reverse step {t} outside 1..={}",
            schedule.steps()
        )));
    }
    let eps_hat = predict_noise(params, d_t, &time_embedding(params, t))?;
    LatentVector::new(ancestral_update(d_t, &eps_hat, t, schedule, rng)?)
}

/// Draw `d_T ~ N(0, I)` from `rng`, then apply reverse steps `T..=1`.
pub fn sample_direction(params: &DenoiserParams, schedule: &DiffusionSchedule, rng: &mut RngStream) -> Result<LatentVector> {
    let mut d = vec![0.0; params.config().input_dim];
    rng.fill_normal(&mut d);
    for t in (1..=schedule.steps()).rev() {
        let eps_hat = predict_noise(params, &d, &time_embedding(params, t))?;
        d = ancestral_update(&d, &eps_hat, t, schedule, rng)?;
    }
    LatentVector::new(d)
}

/// `count` samples; sample `i` uses `rng.substream(i)` and equals
/// `sample_direction(params, schedule, &mut rng.substream(i))`.
pub fn sample_directions(
    params: &DenoiserParams,
    schedule: &DiffusionSchedule,
    count: usize,
    rng: &RngStream,
) -> Result<Vec<LatentVector>> {
    let dim = params.config().input_dim;
    let mut streams: Vec<RngStream> = (0..count as u64).map(|i| rng.substream(i)).collect();
    let mut states: Vec<Vec<f64>> = streams
        .iter_mut()
        .map(|s| {
            let mut d = vec![0.0; dim];
            s.fill_normal(&mut d);
            d
        })
        .collect();
    for t in (1..=schedule.steps()).rev() {
        let time = time_embedding(params, t);
        for (d, s) in states.iter_mut().zip(&mut streams) {
            let eps_hat = predict_noise(params, d, &time)?;
            *d = ancestral_update(d, &eps_hat, t, schedule, s)?;
        }
    }
    states.into_iter().map(LatentVector::new).collect()
}

/// Diversity scale γ and mean-strength λ of an edit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditSpec {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for EditSpec {
    fn default() -> Self {
        EditSpec {
            gamma: 1.0,
            lambda: 1.0,
        }
    }
}

impl EditSpec {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        if !gamma.is_finite() || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma and lambda must be finite, got ({gamma}, {lambda})"
            )));
        }
        Ok(EditSpec { gamma, lambda })
    }
}

/// `w_e = w_s + (γ d0 + λ m_a)`.
pub fn apply_edit(w_s: &LatentVector, d0: &LatentVector, spec: &EditSpec, mean: &LatentVector) -> Result<LatentVector> {
    if d0.dim() != w_s.dim() {
        return Err(Error::dims("apply_edit direction", w_s.dim(), d0.dim()));
    }
    if mean.dim() != w_s.dim() {
        return Err(Error::dims("apply_edit mean direction", w_s.dim(), mean.dim()));
    }
    let out: Vec<f64> = w_s
        .iter()
        .zip(d0.iter())
        .zip(mean.iter())
        .map(|((w, d), m)| w + (spec.gamma * d + spec.lambda * m))
        .collect();
    LatentVector::new(out)
}

/// One stage of a sequential edit.
#[derive(Debug, Clone, PartialEq)]
pub struct EditStage {
    pub direction: LatentVector,
    pub spec: EditSpec,
    pub mean: LatentVector,
}

/// Apply edits left to right.
pub fn sequential_edit(w_s: &LatentVector, stages: &[EditStage]) -> Result<LatentVector> {
    stages.iter().enumerate().try_fold(w_s.clone(), |w, (i, s)| {
        apply_edit(&w, &s.direction, &s.spec, &s.mean).map_err(|e| match e {
            Error::DimensionMismatch {
                context,
                expected,
                actual,
            } => Error::DimensionMismatch {
                context: format!("edit stage {i}: {context}"),
                expected,
                actual,
            },
            other => other,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{build_linear_schedule, init_params, DenoiserConfig, ScheduleConfig};

    fn v(x: &[f64]) -> LatentVector {
        LatentVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn perfect_denoiser_recovers_clean_sample() {
        let s = build_linear_schedule(100, 1e-3, 0.05).unwrap();
        let d0 = [0.3, -1.2, 0.8];
        let eps = [1.1, 0.4, -0.7];
        for t in [1, 2, 50, 100] {
            let ab = s.alpha_bar(t);
            let d_t: Vec<f64> = d0.iter().zip(&eps).map(|(x, e)| ab.sqrt() * x + (1.0 - ab).sqrt() * e).collect();
            let perfect: Vec<f64> = d_t.iter().zip(&d0).map(|(x, c)| (x - ab.sqrt() * c) / (1.0 - ab).sqrt()).collect();
            let clean = predicted_clean(&d_t, &perfect, t, &s);
            for (a, b) in clean.iter().zip(&d0) {
                assert!((a - b).abs() < 1e-9, "t={t}: {a} vs {b}");
            }
            // With z = 0 the update is the posterior mean
            // sqrt(ᾱ_{t−1}) β_t / (1 − ᾱ_t) d0 + sqrt(α_t) (1 − ᾱ_{t−1}) / (1 − ᾱ_t) d_t.
            if t == 1 {
                let mut rng = RngStream::from_seed(0);
                let next = ancestral_update(&d_t, &perfect, t, &s, &mut rng).unwrap();
                for (a, b) in next.iter().zip(&d0) {
                    assert!((a - b).abs() < 1e-9);
                }
                assert_eq!(rng.position(), 0, "no noise drawn at t = 1");
            } else {
                let ab_prev = s.alpha_bar(t - 1);
                let c0 = ab_prev.sqrt() * s.beta(t) / (1.0 - ab);
                let ct = s.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
                let mean = ancestral_update(&d_t, &perfect, t, &s, &mut RngStream::from_seed(1)).unwrap();
                let sigma = s.posterior_variance(t).sqrt();
                let mut rng = RngStream::from_seed(1);
                for i in 0..3 {
                    let z = rng.standard_normal();
                    let expected = c0 * d0[i] + ct * d_t[i] + sigma * z;
                    assert!((mean[i] - expected).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn out_of_range_steps() {
        let s = build_linear_schedule(10, 0.01, 0.1).unwrap();
        let mut rng = RngStream::from_seed(0);
        assert!(ancestral_update(&[0.0], &[0.0], 0, &s, &mut rng).is_err());
        assert!(ancestral_update(&[0.0], &[0.0], 11, &s, &mut rng).is_err());
    }

    #[test]
    fn zero_denoiser_step_variance() {
        let s = build_linear_schedule(100, 1e-3, 0.05).unwrap();
        let t = 40;
        let target = s.posterior_variance(t);
        let n = 10_000;
        let mut rng = RngStream::from_seed(5);
        let d_t = [0.5, -0.5];
        let draws: Vec<Vec<f64>> = (0..n).map(|_| ancestral_update(&d_t, &[0.0, 0.0], t, &s, &mut rng).unwrap()).collect();
        for k in 0..2 {
            let mean = draws.iter().map(|d| d[k]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d[k] - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((var / target - 1.0).abs() < 0.1, "var {var} vs {target}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_finite() {
        let cfg = DenoiserConfig {
            input_dim: 4,
            depth: 2,
            width: 16,
            time_pe_dim: 8,
            time_hidden: 8,
        };
        let p = init_params(&cfg, &mut RngStream::from_seed(1)).unwrap();
        let s = ScheduleConfig::default().build().unwrap();
        let a = sample_direction(&p, &s, &mut RngStream::from_seed(2)).unwrap();
        let b = sample_direction(&p, &s, &mut RngStream::from_seed(2)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.is_finite()) && a.norm() < 1e6);

        let root = RngStream::from_seed(3);
        let batch = sample_directions(&p, &s, 3, &root).unwrap();
        assert_eq!(batch[2], sample_direction(&p, &s, &mut root.substream(2)).unwrap());

        let d = v(&[0.1, 0.2, 0.3, 0.4]);
        let mut r1 = RngStream::from_seed(9);
        let mut r2 = RngStream::from_seed(9);
        assert_eq!(
            reverse_step(&p, &d, 7, &s, &mut r1).unwrap(),
            reverse_step(&p, &d, 7, &s, &mut r2).unwrap()
        );
    }

    #[test]
    fn edit_examples() {
        let w = v(&[0.0, 0.0]);
        let d = v(&[1.0, 0.0]);
        let m = v(&[0.0, 1.0]);
        assert_eq!(apply_edit(&w, &d, &EditSpec::new(2.0, 1.0).unwrap(), &m).unwrap().as_slice(), &[2.0, 1.0]);
        let ws = v(&[0.3, -7.25]);
        assert_eq!(apply_edit(&ws, &d, &EditSpec::new(0.0, 0.0).unwrap(), &m).unwrap(), ws);
        assert!(apply_edit(&ws, &v(&[1.0]), &EditSpec::default(), &m).is_err());
        assert!(EditSpec::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn sequential_edits() {
        let w = v(&[1.0, 2.0, 3.0]);
        assert_eq!(sequential_edit(&w, &[]).unwrap(), w);
        let stage = |d: &[f64], m: &[f64], g: f64, l: f64| EditStage {
            direction: v(d),
            spec: EditSpec::new(g, l).unwrap(),
            mean: v(m),
        };
        let a = stage(&[0.5, 0.1, -0.3], &[0.0, 1.0, 0.0], 1.5, 0.5);
        let b = stage(&[-0.2, 0.7, 0.9], &[1.0, 0.0, 0.25], 0.75, 2.0);
        let c = stage(&[0.3, 0.3, 0.3], &[0.1, 0.2, 0.3], -1.0, 1.0);
        let ab = sequential_edit(&w, &[a.clone(), b.clone()]).unwrap();
        let ba = sequential_edit(&w, &[b.clone(), a.clone()]).unwrap();
        for (x, y) in ab.iter().zip(ba.iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
        let abc = sequential_edit(&w, &[a.clone(), b.clone(), c.clone()]).unwrap();
        for i in 0..3 {
            let expected = w[i]
                + [&a, &b, &c]
                    .iter()
                    .map(|s| s.spec.gamma * s.direction[i] + s.spec.lambda * s.mean[i])
                    .sum::<f64>();
            assert!((abc[i] - expected).abs() <= 1e-12);
        }
        let bad = stage(&[1.0], &[1.0], 1.0, 1.0);
        let err = sequential_edit(&w, &[a, bad]).unwrap_err().to_string();
        assert!(err.contains("edit stage 1"), "{err}");
    }
}

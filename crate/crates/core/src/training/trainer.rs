use serde::{Deserialize, Serialize};

use crate::diffusion::{
    backward_accumulate, diffuse_into, forward_with_time, init_params, time_embedding,
    DenoiserConfig, DenoiserGrads, DenoiserParams, DiffusionSchedule, ScheduleConfig,
};
use crate::directions::DirectionDataset;
use crate::error::{Error, Result};
use crate::numerics::{LatentVector, RngStream};
use crate::training::adam::{AdamConfig, AdamState};
use crate::training::loss::simple_loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub total_steps: usize,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
    pub log_interval: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-4,
            total_steps: 10_000,
            seed: 0,
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserConfig::desk(),
            log_interval: 100,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::InvalidParameter("total_steps must be >= 1".into()));
        }
        if self.log_interval == 0 {
            return Err(Error::InvalidParameter("log_interval must be >= 1".into()));
        }
        self.denoiser.validate()?;
        self.schedule.build()?;
        Ok(())
    }
}

/// Mean loss over one logging window, starting at `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DenoiserParams,
    pub trace: Vec<LossRecord>,
    /// Mean batch loss of every step.
    pub step_losses: Vec<f64>,
}

/// Scratch buffers reused across steps.
struct StepBuffers {
    grads: DenoiserGrads,
    eps: Vec<f64>,
    d_t: Vec<f64>,
}

/// One optimizer step on `batch`.
///
/// Per sample, in batch order, the stream supplies `t` uniform in `1..=T`
/// followed by `D` standard normals for the noise. The loss is summed over
/// coordinates and averaged over the batch.
pub fn train_step(
    params: &mut DenoiserParams,
    adam: &mut AdamState,
    batch: &[&[f64]],
    schedule: &DiffusionSchedule,
    rng: &mut RngStream,
    learning_rate: f64,
) -> Result<f64> {
    let mut buffers = StepBuffers {
        grads: DenoiserParams::zeros(*params.config())?,
        eps: vec![0.0; params.config().input_dim],
        d_t: vec![0.0; params.config().input_dim],
    };
    step_with(params, adam, batch, schedule, rng, learning_rate, &mut buffers)
}

fn step_with(
    params: &mut DenoiserParams,
    adam: &mut AdamState,
    batch: &[&[f64]],
    schedule: &DiffusionSchedule,
    rng: &mut RngStream,
    learning_rate: f64,
    buf: &mut StepBuffers,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let dim = params.config().input_dim;
    let scale = 1.0 / batch.len() as f64;
    buf.grads.fill_zero();
    let mut total = 0.0;
    for (i, d0) in batch.iter().enumerate() {
        if d0.len() != dim {
            return Err(Error::dims(format!("batch item {i}"), dim, d0.len()));
        }
        let t = 1 + rng.below(schedule.steps() as u64) as usize;
        rng.fill_normal(&mut buf.eps);
        let ab = schedule.alpha_bar(t);
        diffuse_into(d0, &buf.eps, ab.sqrt(), (1.0 - ab).sqrt(), &mut buf.d_t);
        let time = time_embedding(params, t);
        let (eps_hat, tape) = forward_with_time(params, &buf.d_t, time)?;
        let (loss, mut grad) = simple_loss(&buf.eps, &eps_hat)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss {loss} at batch item {i} (t = {t})"
            )));
        }
        total += loss;
        grad.iter_mut().for_each(|g| *g *= scale);
        backward_accumulate(params, &tape, &grad, &mut buf.grads, None)?;
    }
    adam.update(params.as_flat_mut(), buf.grads.as_flat(), learning_rate)?;
    Ok(total * scale)
}

/// Train on a normalized direction dataset.
///
/// Refuses datasets whose directions are not unit length within 1e-6.
pub fn train(dataset: &DirectionDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    dataset.check_normalized(1e-6)?;
    if dataset.dim() != cfg.denoiser.input_dim {
        return Err(Error::dims(
            "dataset dimension vs denoiser input_dim",
            cfg.denoiser.input_dim,
            dataset.dim(),
        ));
    }
    train_on_directions(&dataset.directions, cfg)
}

/// Training loop over arbitrary directions, without the normalization check.
///
/// Parameters are initialized from the `"init"` sub-stream of `cfg.seed`; batch
/// indices (uniform with replacement) and per-sample noise come from the
/// `"train"` sub-stream.
pub fn train_on_directions(directions: &[LatentVector], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if directions.is_empty() {
        return Err(Error::InvalidParameter("no training directions".into()));
    }
    let schedule = cfg.schedule.build()?;
    let root = RngStream::from_seed(cfg.seed);
    let mut params = init_params(&cfg.denoiser, &mut root.named_substream("init"))?;
    let mut rng = root.named_substream("train");
    let mut adam = AdamState::new(params.len(), cfg.adam);
    let mut buffers = StepBuffers {
        grads: DenoiserParams::zeros(cfg.denoiser)?,
        eps: vec![0.0; cfg.denoiser.input_dim],
        d_t: vec![0.0; cfg.denoiser.input_dim],
    };

    let n = directions.len() as u64;
    let mut step_losses = Vec::with_capacity(cfg.total_steps);
    let mut trace = Vec::with_capacity(cfg.total_steps.div_ceil(cfg.log_interval));
    let mut indices = vec![0usize; cfg.batch_size];
    for step in 0..cfg.total_steps {
        indices.iter_mut().for_each(|i| *i = rng.below(n) as usize);
        let batch: Vec<&[f64]> = indices.iter().map(|&i| directions[i].as_slice()).collect();
        let loss = step_with(
            &mut params,
            &mut adam,
            &batch,
            &schedule,
            &mut rng,
            cfg.learning_rate,
            &mut buffers,
        )?;
        step_losses.push(loss);
        if (step + 1) % cfg.log_interval == 0 || step + 1 == cfg.total_steps {
            let start = step - step % cfg.log_interval;
            let window = &step_losses[start..];
            trace.push(LossRecord {
                step: start,
                loss: window.iter().sum::<f64>() / window.len() as f64,
            });
        }
    }
    Ok(TrainOutcome {
        params,
        trace,
        step_losses,
    })
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{DenoiserConfig, ScheduleConfig};
use crate::directions::read_json;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::synthworld::{AttributeSpec, WorldSpec};
use crate::training::{AdamConfig, TrainConfig};

/// The latent world, minus its seed (derived from the master seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub dim: usize,
    pub attributes: Vec<AttributeSpec>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dim: 16,
            attributes: vec![
                AttributeSpec {
                    name: "hair".into(),
                    rank: 4,
                    modes: 4,
                    magnitude: 3.0,
                    mode_noise: 0.5,
                    outlier_rate: 0.0,
                    observable_dim: 6,
                },
                AttributeSpec {
                    name: "smile".into(),
                    rank: 2,
                    modes: 2,
                    magnitude: 2.0,
                    mode_noise: 0.1,
                    outlier_rate: 0.0,
                    observable_dim: 4,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Attribute to build directions for; the first attribute when absent.
    pub attribute: Option<String>,
    pub pairs: usize,
    /// Number of source latents `w_s` written for editing.
    pub source_count: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            attribute: None,
            pairs: 1000,
            source_count: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub total_steps: usize,
    pub log_interval: usize,
    pub schedule: ScheduleConfig,
    pub depth: usize,
    pub width: usize,
    pub time_pe_dim: usize,
    pub time_hidden: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 64,
            learning_rate: 1e-3,
            total_steps: 3000,
            log_interval: 100,
            schedule: ScheduleConfig::scaled_linear(200),
            depth: 4,
            width: 128,
            time_pe_dim: 32,
            time_hidden: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub count: usize,
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            count: 5,
            gamma: 1.0,
            lambda: 1.0,
        }
    }
}

/// One stage of a sequential edit: row `index` of a samples file, shifted by
/// the mean direction stored in `checkpoint`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub samples: PathBuf,
    pub checkpoint: PathBuf,
    pub index: usize,
    pub gamma: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditConfig {
    /// When present, each source latent gets this fold of edits instead of one
    /// edit per sampled direction.
    pub sequence: Option<Vec<StageConfig>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratedSource {
    Samples,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub mode_threshold: f64,
    pub bins: usize,
    pub generated: GeneratedSource,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 3,
            mode_threshold: 0.9,
            bins: 20,
            generated: GeneratedSource::Samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub denoiser: DenoiserConfig,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            denoiser: DenoiserConfig {
                input_dim: 8,
                depth: 3,
                width: 32,
                time_pe_dim: 16,
                time_hidden: 32,
            },
            tolerance: 1e-5,
        }
    }
}

/// One flat configuration per experiment. Every random choice derives from
/// `seed` through a named sub-stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub world: WorldConfig,
    pub dataset: DatasetConfig,
    pub train: TrainSection,
    pub sample: SampleConfig,
    pub edit: EditConfig,
    pub eval: EvalConfig,
    pub grad_check: GradCheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("out"),
            world: WorldConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainSection::default(),
            sample: SampleConfig::default(),
            edit: EditConfig::default(),
            eval: EvalConfig::default(),
            grad_check: GradCheckConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    /// Seed of the named sub-stream of the master seed.
    pub fn derived_seed(&self, name: &str) -> u64 {
        RngStream::from_seed(self.seed).named_substream(name).next_u64()
    }

    pub fn world_spec(&self) -> WorldSpec {
        WorldSpec {
            dim: self.world.dim,
            attributes: self.world.attributes.clone(),
            seed: self.derived_seed("world"),
        }
    }

    pub fn attribute(&self) -> Result<String> {
        match &self.dataset.attribute {
            Some(a) => Ok(a.clone()),
            None => self
                .world
                .attributes
                .first()
                .map(|a| a.name.clone())
                .ok_or_else(|| Error::InvalidParameter("world has no attributes".into())),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            total_steps: t.total_steps,
            seed: self.derived_seed("train"),
            schedule: t.schedule,
            denoiser: DenoiserConfig {
                input_dim: self.world.dim,
                depth: t.depth,
                width: t.width,
                time_pe_dim: t.time_pe_dim,
                time_hidden: t.time_hidden,
            },
            log_interval: t.log_interval,
            adam: t.adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world_spec().validate()?;
        let attr = self.attribute()?;
        if !self.world.attributes.iter().any(|a| a.name == attr) {
            return Err(Error::InvalidParameter(format!("dataset attribute '{attr}' is not in the world")));
        }
        if self.dataset.pairs == 0 {
            return Err(Error::InvalidParameter("dataset.pairs must be >= 1".into()));
        }
        self.train_config().validate()?;
        if self.sample.count == 0 {
            return Err(Error::InvalidParameter("sample.count must be >= 1".into()));
        }
        if !self.sample.gamma.is_finite() || !self.sample.lambda.is_finite() {
            return Err(Error::InvalidParameter("sample.gamma and sample.lambda must be finite".into()));
        }
        if self.eval.k == 0 || self.eval.bins == 0 {
            return Err(Error::InvalidParameter("eval.k and eval.bins must be >= 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.eval.mode_threshold) {
            return Err(Error::InvalidParameter("eval.mode_threshold must lie in [-1, 1]".into()));
        }
        self.grad_check.denoiser.validate()?;
        if self.grad_check.tolerance.is_nan() || self.grad_check.tolerance <= 0.0 {
            return Err(Error::InvalidParameter("grad_check.tolerance must be > 0".into()));
        }
        Ok(())
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::cli::config::{ExperimentConfig, GeneratedSource};
use crate::directions::{build_raw_dataset, normalize_dataset, read_dataset, sidecar_path, write_dataset, write_json};
use crate::error::{Error, Result};
use crate::eval::{
    cosine_histogram, cosine_similarity, disentanglement_std, euclidean_distance, improved_precision_recall,
    mode_coverage, MetricsReport,
};
use crate::numerics::{norm, read_tensor, sample_standard_normal, write_tensor, LatentVector, RngStream};
use crate::sampling::{apply_edit, sample_directions, sequential_edit, EditSpec, EditStage};
use crate::synthworld::{generate_world, read_world, write_world, PairTruth, SynthWorld};
use crate::training::{gradient_check, load_checkpoint, save_checkpoint, train, CheckpointMeta, GradCheckReport};

pub const WORLD_STEM: &str = "world";
pub const DATASET_FILE: &str = "dataset.ldir";
pub const RAW_FILE: &str = "raw.ldir";
pub const SOURCES_FILE: &str = "sources.ldir";
pub const CHECKPOINT_FILE: &str = "checkpoint.lckp";
pub const LOSS_FILE: &str = "loss.csv";
pub const SAMPLES_FILE: &str = "samples.ldir";
pub const EDITED_FILE: &str = "edited.ldir";
pub const EDIT_REPORT_FILE: &str = "edit_report.json";
pub const REPORT_FILE: &str = "report.json";
pub const GRAD_CHECK_FILE: &str = "grad_check.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    GenWorld,
    GenPairs,
    Train,
    Sample,
    Edit,
    Eval,
    GradCheck,
}

/// What a command did, for the terminal. `ok == false` is a non-error failure
/// (a gradient check that ran but did not pass).
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub summary: String,
    pub ok: bool,
}

impl CommandOutput {
    fn done(summary: String) -> Self {
        CommandOutput { summary, ok: true }
    }
}

pub fn run(verb: Verb, cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match verb {
        Verb::GenWorld => cmd_gen_world(cfg, out),
        Verb::GenPairs => cmd_gen_pairs(cfg, out),
        Verb::Train => cmd_train(cfg, out),
        Verb::Sample => cmd_sample(cfg, out),
        Verb::Edit => cmd_edit(cfg, out),
        Verb::Eval => cmd_eval(cfg, out),
        Verb::GradCheck => cmd_grad_check(cfg, out),
    }
}

fn world_files(out: &Path) -> Vec<PathBuf> {
    ["meta.json", "basis.ldir", "centers.ldir", "observe.ldir"]
        .iter()
        .map(|s| out.join(format!("{WORLD_STEM}.{s}")))
        .collect()
}

fn require(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts(missing))
    }
}

fn load_world(out: &Path) -> Result<SynthWorld> {
    require(&world_files(out))?;
    read_world(out.join(WORLD_STEM))
}

pub fn write_latents(path: &Path, rows: &[LatentVector]) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.dim());
    let mut data = Vec::with_capacity(rows.len() * d);
    for (i, r) in rows.iter().enumerate() {
        if r.dim() != d {
            return Err(Error::dims(format!("row {i}"), d, r.dim()));
        }
        data.extend_from_slice(r);
    }
    write_tensor(path, &[rows.len(), d], &data)
}

pub fn read_latents(path: &Path) -> Result<Vec<LatentVector>> {
    let t = read_tensor(path)?;
    if t.dims.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "{}: expected a 2-D tensor, got dims {:?}",
            path.display(),
            t.dims
        )));
    }
    t.rows()?.into_iter().map(LatentVector::new).collect()
}

pub fn cmd_gen_world(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput> {
    let spec = cfg.world_spec();
    let world = generate_world(&spec)?;
    write_world(out.join(WORLD_STEM), &world)?;
    Ok(CommandOutput::done(format!(
        "world D={} with {} attribute(s) written to {}",
        spec.dim,
        spec.attributes.len(),
        out.join(WORLD_STEM).display()
    )))
}

pub fn cmd_gen_pairs(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput> {
    let world = load_world(out)?;
    let attribute = cfg.attribute()?;
    let a = world.attribute_index(&attribute)?;
    let mut rng = RngStream::from_seed(cfg.seed).named_substream("pairs");
    let mut pairs = Vec::with_capacity(cfg.dataset.pairs);
    let mut labels = Vec::with_capacity(cfg.dataset.pairs);
    for _ in 0..cfg.dataset.pairs {
        let p = world.sample_pair_index(a, &mut rng)?;
        pairs.push((p.w_p, p.w_n));
        labels.push(p.truth);
    }
    let raw = build_raw_dataset(&pairs)?;
    let provenance = format!(
        "synthworld pairs: attribute {attribute}, n {}, master seed {}",
        cfg.dataset.pairs, cfg.seed
    );
    let mut ds = normalize_dataset(&raw, &attribute, &provenance)?;
    ds.labels = Some(labels.clone());
    write_dataset(out.join(DATASET_FILE), &ds)?;
    write_latents(&out.join(RAW_FILE), &raw.directions)?;

    let mut src_rng = RngStream::from_seed(cfg.seed).named_substream("sources");
    let sources = (0..cfg.dataset.source_count)
        .map(|_| sample_standard_normal(world.dim(), &mut src_rng))
        .collect::<Result<Vec<_>>>()?;
    write_latents(&out.join(SOURCES_FILE), &sources)?;

    let outliers = labels.iter().filter(|l| **l == PairTruth::Outlier).count();
    Ok(CommandOutput::done(format!(
        "{} directions for '{attribute}' ({outliers} outliers), {} source latents",
        ds.len(),
        sources.len()
    )))
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput> {
    let path = out.join(DATASET_FILE);
    require(&[path.clone(), sidecar_path(&path)])?;
    let ds = read_dataset(&path)?;
    let tc = cfg.train_config();
    let outcome = train(&ds, &tc)?;
    let meta = CheckpointMeta {
        attribute: ds.attribute.clone(),
        schedule: tc.schedule,
        mean_direction: ds.mean_direction.to_vec(),
        centered_norm_mean: ds.centered_norm_mean,
        train_steps: tc.total_steps as u64,
        seed: tc.seed,
    };
    save_checkpoint(out.join(CHECKPOINT_FILE), &outcome.params, &meta)?;
    let mut csv = String::from("step,loss\n");
    for r in &outcome.trace {
        csv.push_str(&format!("{},{}\n", r.step, r.loss));
    }
    let loss_path = out.join(LOSS_FILE);
    fs::write(&loss_path, csv).map_err(|e| Error::io(&loss_path, e))?;
    let last = outcome.trace.last().map_or(f64::NAN, |r| r.loss);
    Ok(CommandOutput::done(format!(
        "trained {} steps on {} directions, final window loss {last:.6}",
        tc.total_steps,
        ds.len()
    )))
}

pub fn cmd_sample(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput> {
    let path = out.join(CHECKPOINT_FILE);
    require(std::slice::from_ref(&path))?;
    let (params, meta) = load_checkpoint(&path)?;
    if meta.schedule != cfg.train.schedule {
        return Err(Error::InvalidParameter(format!(
            "checkpoint schedule {:?} differs from configured schedule {:?}",
            meta.schedule, cfg.train.schedule
        )));
    }
    let schedule = meta.schedule.build()?;
    let rng = RngStream::from_seed(cfg.seed).named_substream("sample");
    let samples = sample_directions(&params, &schedule, cfg.sample.count, &rng)?;
    write_latents(&out.join(SAMPLES_FILE), &samples)?;
    Ok(CommandOutput::done(format!(
        "{} directions of dimension {} sampled",
        samples.len(),
        params.config().input_dim
    )))
}

#[derive(Serialize)]
struct StageRecord {
    samples: String,
    checkpoint: String,
    index: usize,
    gamma: f64,
    lambda: f64,
}

#[derive(Serialize)]
struct EditReport {
    mode: &'static str,
    gamma: f64,
    lambda: f64,
    sources: usize,
    directions: usize,
    rows: usize,
    stages: Vec<StageRecord>,
}

pub fn cmd_edit(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput> {
    let sources_path = out.join(SOURCES_FILE);
    let report;
    let edited = match &cfg.edit.sequence {
        None => {
            let (samples_path, ckpt_path) = (out.join(SAMPLES_FILE), out.join(CHECKPOINT_FILE));
            require(&[sources_path.clone(), samples_path.clone(), ckpt_path.clone()])?;
            let sources = read_latents(&sources_path)?;
            let samples = read_latents(&samples_path)?;
            let (_, meta) = load_checkpoint(&ckpt_path)?;
            let mean = LatentVector::new(meta.mean_direction)?;
            let spec = EditSpec::new(cfg.sample.gamma, cfg.sample.lambda)?;
            let mut rows = Vec::with_capacity(sources.len() * samples.len());
            for w_s in &sources {
                for d in &samples {
                    rows.push(apply_edit(w_s, d, &spec, &mean)?);
                }
            }
            report = EditReport {
                mode: "single",
                gamma: spec.gamma,
                lambda: spec.lambda,
                sources: sources.len(),
                directions: samples.len(),
                rows: rows.len(),
                stages: Vec::new(),
            };
            rows
        }
        Some(seq) => {
            let mut needed = vec![sources_path.clone()];
            for s in seq {
                needed.push(s.samples.clone());
                needed.push(s.checkpoint.clone());
            }
            require(&needed)?;
            let sources = read_latents(&sources_path)?;
            let mut stages = Vec::with_capacity(seq.len());
            for (i, s) in seq.iter().enumerate() {
                let samples = read_latents(&s.samples)?;
                let direction = samples.get(s.index).cloned().ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "edit stage {i}: index {} out of range for {} samples",
                        s.index,
                        samples.len()
                    ))
                })?;
                let (_, meta) = load_checkpoint(&s.checkpoint)?;
                stages.push(EditStage {
                    direction,
                    spec: EditSpec::new(s.gamma, s.lambda)?,
                    mean: LatentVector::new(meta.mean_direction)?,
                });
            }
            let rows = sources
                .iter()
                .map(|w| sequential_edit(w, &stages))
                .collect::<Result<Vec<_>>>()?;
            report = EditReport {
                mode: "sequential",
                gamma: cfg.sample.gamma,
                lambda: cfg.sample.lambda,
                sources: sources.len(),
                directions: seq.len(),
                rows: rows.len(),
                stages: seq
                    .iter()
                    .map(|s| StageRecord {
                        samples: s.samples.display().to_string(),
                        checkpoint: s.checkpoint.display().to_string(),
                        index: s.index,
                        gamma: s.gamma,
                        lambda: s.lambda,
                    })
                    .collect(),
            };
            rows
        }
    };
    write_latents(&out.join(EDITED_FILE), &edited)?;
    write_json(&out.join(EDIT_REPORT_FILE), &report)?;
    Ok(CommandOutput::done(format!("{} edited latents ({} mode)", edited.len(), report.mode)))
}

/// Map unit-space directions back to raw scale: `s · d + m_a`.
fn to_raw_scale(dirs: &[LatentVector], scale: f64, mean: &LatentVector) -> Result<Vec<LatentVector>> {
    let spec = EditSpec::new(scale, 1.0)?;
    let zero = LatentVector::zeros(mean.dim());
    dirs.iter().map(|d| apply_edit(&zero, d, &spec, mean)).collect()
}

pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput> {
    let dataset_path = out.join(DATASET_FILE);
    let mut needed = world_files(out);
    needed.extend([
        dataset_path.clone(),
        sidecar_path(&dataset_path),
        out.join(RAW_FILE),
        out.join(SOURCES_FILE),
    ]);
    if cfg.eval.generated == GeneratedSource::Samples {
        needed.push(out.join(SAMPLES_FILE));
    }
    require(&needed)?;

    let world = read_world(out.join(WORLD_STEM))?;
    let ds = read_dataset(&dataset_path)?;
    let raw = read_latents(&out.join(RAW_FILE))?;
    let sources = read_latents(&out.join(SOURCES_FILE))?;
    let a = world.attribute_index(&ds.attribute)?;
    let generated = match cfg.eval.generated {
        GeneratedSource::Samples => read_latents(&out.join(SAMPLES_FILE))?,
        GeneratedSource::Dataset => ds.directions.clone(),
    };
    if generated.first().map(|g| g.dim()) != Some(ds.dim()) {
        return Err(Error::dims("generated directions", ds.dim(), generated.first().map_or(0, |g| g.dim())));
    }
    let mean = &ds.mean_direction;
    let gen_raw = to_raw_scale(&generated, ds.centered_norm_mean, mean)?;

    let mut report = MetricsReport::default();
    report.provenance.insert("master_seed".into(), json!(cfg.seed));
    report.provenance.insert("attribute".into(), json!(ds.attribute));
    report.provenance.insert("dataset_count".into(), json!(ds.len()));
    report.provenance.insert("generated_count".into(), json!(generated.len()));
    report.provenance.insert("generated_source".into(), json!(cfg.eval.generated));
    report.provenance.insert("k".into(), json!(cfg.eval.k));
    report.provenance.insert("mode_threshold".into(), json!(cfg.eval.mode_threshold));
    report.provenance.insert("dataset_provenance".into(), json!(ds.provenance));
    report.notes.push("FID is not computed: it needs a pretrained image feature extractor".into());

    match improved_precision_recall(&ds.directions, &generated, cfg.eval.k) {
        Ok(pr) => {
            report.set("precision", pr.precision);
            report.set("recall", pr.recall);
        }
        Err(e) => report.notes.push(format!("precision/recall skipped: {e}")),
    }

    let cov = mode_coverage(&world, a, &gen_raw, cfg.eval.mode_threshold)?;
    report.set("mode_coverage", cov.coverage);
    report.set("mode_unmatched_fraction", cov.unmatched_fraction);
    report.provenance.insert("mode_counts".into(), json!(cov.per_mode_counts));

    let plain = EditSpec::new(1.0, 0.0)?;
    let zero = LatentVector::zeros(world.dim());
    let w_s = sources
        .first()
        .cloned()
        .unwrap_or_else(|| LatentVector::zeros(world.dim()));
    for (name, dirs) in [("generated", &gen_raw), ("dataset", &raw)] {
        match disentanglement_std(&world, a, &w_s, dirs, &plain, &zero) {
            Ok(d) => {
                report.set(&format!("disentanglement_ratio_{name}"), d.ratio);
                if d.degenerate {
                    report.notes.push(format!("disentanglement of {name} directions is degenerate (no on-target spread)"));
                }
            }
            Err(e) => report.notes.push(format!("disentanglement of {name} skipped: {e}")),
        }
    }

    if norm(mean) > 0.0 {
        for (name, dirs) in [("dataset", &raw), ("generated", &gen_raw)] {
            let h = cosine_histogram(dirs, mean, cfg.eval.bins)?;
            let path = out.join(format!("hist_{name}.csv"));
            fs::write(&path, h.to_csv()).map_err(|e| Error::io(&path, e))?;
            report.histograms.insert(name.into(), h);
        }
    } else {
        report.notes.push("cosine histograms skipped: mean direction is zero".into());
    }

    let edited_path = out.join(EDITED_FILE);
    if edited_path.exists() && !sources.is_empty() {
        let edited = read_latents(&edited_path)?;
        let per_source = (edited.len() / sources.len()).max(1);
        let (mut cs, mut ed) = (0.0, 0.0);
        for (i, w_e) in edited.iter().enumerate() {
            let w_s = &sources[(i / per_source).min(sources.len() - 1)];
            let (o_s, o_e) = (world.observe(w_s)?, world.observe(w_e)?);
            cs += cosine_similarity(&o_s, &o_e)?;
            ed += euclidean_distance(&o_s, &o_e)?;
        }
        report.set("identity_cosine_mean", cs / edited.len() as f64);
        report.set("identity_distance_mean", ed / edited.len() as f64);
        report.provenance.insert("edited_count".into(), json!(edited.len()));
    }

    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(CommandOutput::done(format!(
        "{} metrics written to {}",
        report.metrics.len(),
        out.join(REPORT_FILE).display()
    )))
}

pub fn cmd_grad_check(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput> {
    let mut rng = RngStream::from_seed(cfg.seed).named_substream("grad_check");
    let report: GradCheckReport = gradient_check(&cfg.grad_check.denoiser, cfg.grad_check.tolerance, &mut rng)?;
    write_json(&out.join(GRAD_CHECK_FILE), &report)?;
    Ok(CommandOutput {
        summary: format!(
            "gradient check {}: max relative error {:.3e} at {} (tolerance {:.1e})",
            if report.passed { "passed" } else { "FAILED" },
            report.max_relative_error,
            report.worst_parameter,
            report.tolerance
        ),
        ok: report.passed,
    })
}

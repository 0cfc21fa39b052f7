//! Four well-separated modes in a synthetic world: does the sampler cover all of them?
//!
//! cargo run --release --example mode_coverage

use std::time::Instant;

use diffedit::diffusion::{DenoiserConfig, ScheduleConfig};
use diffedit::directions::{build_raw_dataset, normalize_dataset};
use diffedit::eval::{cosine_similarity, mode_coverage};
use diffedit::numerics::{LatentVector, RngStream};
use diffedit::sampling::{apply_edit, sample_directions, EditSpec};
use diffedit::synthworld::{generate_world, AttributeSpec, WorldSpec};
use diffedit::training::{train, TrainConfig};

fn main() -> diffedit::Result<()> {
    let world = generate_world(&WorldSpec {
        dim: 16,
        attributes: vec![AttributeSpec {
            name: "hair".into(),
            rank: 4,
            modes: 4,
            magnitude: 3.0,
            mode_noise: 0.1,
            outlier_rate: 0.0,
            observable_dim: 6,
        }],
        seed: 21,
    })?;
    let centers = world.centers(0);
    let mut max_cos = f64::NEG_INFINITY;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            max_cos = max_cos.max(cosine_similarity(&centers[i], &centers[j])?);
        }
    }
    println!("max pairwise cosine between mode centers: {max_cos:.3e}");

    let mut rng = RngStream::named(21, "pairs");
    let pairs = (0..2000)
        .map(|_| world.sample_pair("hair", &mut rng).map(|p| (p.w_p, p.w_n)))
        .collect::<diffedit::Result<Vec<_>>>()?;
    let dataset = normalize_dataset(&build_raw_dataset(&pairs)?, "hair", "mode_coverage example")?;

    let cfg = TrainConfig {
        batch_size: 64,
        learning_rate: 1e-3,
        total_steps: 5000,
        seed: 4,
        schedule: ScheduleConfig::scaled_linear(200),
        denoiser: DenoiserConfig {
            input_dim: 16,
            depth: 4,
            width: 128,
            time_pe_dim: 32,
            time_hidden: 64,
        },
        log_interval: 1000,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train(&dataset, &cfg)?;
    for r in &outcome.trace {
        println!("step {:>5}  loss {:.5}", r.step, r.loss);
    }

    let schedule = cfg.schedule.build()?;
    let samples = sample_directions(&outcome.params, &schedule, 1000, &RngStream::named(4, "sample"))?;
    // Back to raw scale: s·d0 + m_a.
    let spec = EditSpec::new(dataset.centered_norm_mean, 1.0)?;
    let zero = LatentVector::zeros(16);
    let raw_scale = samples
        .iter()
        .map(|d| apply_edit(&zero, d, &spec, &dataset.mean_direction))
        .collect::<diffedit::Result<Vec<_>>>()?;
    let cov = mode_coverage(&world, 0, &raw_scale, 0.9)?;
    println!(
        "matched {}/1000, per-mode counts {:?}, coverage {:.2}, took {:.1?}",
        cov.matched,
        cov.per_mode_counts,
        cov.coverage,
        start.elapsed()
    );
    Ok(())
}

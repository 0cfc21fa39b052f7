//! Train on a single repeated unit direction and check that samples recover it.
//!
//! cargo run --release --example point_mass

use std::time::Instant;

use diffedit::diffusion::{DenoiserConfig, ScheduleConfig};
use diffedit::eval::cosine_similarity;
use diffedit::numerics::{sample_standard_normal, LatentVector, RngStream};
use diffedit::sampling::sample_directions;
use diffedit::training::{train_on_directions, TrainConfig};

fn main() -> diffedit::Result<()> {
    let dim = 16;
    let raw = sample_standard_normal(dim, &mut RngStream::named(3, "target"))?;
    let target = raw.scaled(1.0 / raw.norm());
    let cfg = TrainConfig {
        batch_size: 64,
        learning_rate: 1e-3,
        total_steps: 5000,
        seed: 11,
        schedule: ScheduleConfig::scaled_linear(200),
        denoiser: DenoiserConfig {
            input_dim: dim,
            depth: 4,
            width: 128,
            time_pe_dim: 32,
            time_hidden: 64,
        },
        log_interval: 500,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let data: Vec<LatentVector> = vec![target.clone(); 8];
    let outcome = train_on_directions(&data, &cfg)?;
    for r in &outcome.trace {
        println!("step {:>5}  loss {:.5}", r.step, r.loss);
    }
    println!("training took {:.1?}", start.elapsed());

    let schedule = cfg.schedule.build()?;
    let samples = sample_directions(&outcome.params, &schedule, 200, &RngStream::named(5, "sample"))?;
    let cosines: Vec<f64> = samples
        .iter()
        .map(|s| cosine_similarity(s, &target))
        .collect::<diffedit::Result<_>>()?;
    let hits = cosines.iter().filter(|&&c| c >= 0.99).count();
    let worst = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "{hits}/200 samples at cosine >= 0.99 (worst {worst:.4}), total {:.1?}",
        start.elapsed()
    );
    Ok(())
}

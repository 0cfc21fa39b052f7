//! Train on directions with 10% entangled outliers and compare the
//! disentanglement of model samples against the raw training directions.
//!
//! cargo run --release --example outlier_robustness [steps] [mode_noise]

use std::time::Instant;

use diffedit::diffusion::{DenoiserConfig, ScheduleConfig};
use diffedit::directions::{build_raw_dataset, normalize_dataset};
use diffedit::eval::disentanglement_std;
use diffedit::numerics::{sample_standard_normal, LatentVector, RngStream};
use diffedit::sampling::{apply_edit, sample_directions, EditSpec};
use diffedit::synthworld::{generate_world, AttributeSpec, PairTruth, WorldSpec};
use diffedit::training::{train, TrainConfig};

fn main() -> diffedit::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("numeric argument"));
    let steps = args.next().map_or(5000, |s| s as usize);
    let mode_noise = args.next().unwrap_or(0.3);
    let attr = |name: &str, rho: f64| AttributeSpec {
        name: name.into(),
        rank: 4,
        modes: 4,
        magnitude: 3.0,
        mode_noise,
        outlier_rate: rho,
        observable_dim: 6,
    };
    let world = generate_world(&WorldSpec {
        dim: 16,
        attributes: vec![attr("hair", 0.1), attr("smile", 0.0)],
        seed: 8,
    })?;
    let mut rng = RngStream::named(8, "pairs");
    let mut pairs = Vec::new();
    let mut outliers = 0;
    for _ in 0..2000 {
        let p = world.sample_pair("hair", &mut rng)?;
        outliers += usize::from(p.truth == PairTruth::Outlier);
        pairs.push((p.w_p, p.w_n));
    }
    let raw = build_raw_dataset(&pairs)?;
    let dataset = normalize_dataset(&raw, "hair", "outlier_robustness example")?;
    println!("{outliers} outliers among {} pairs", pairs.len());

    let cfg = TrainConfig {
        batch_size: 64,
        learning_rate: 1e-3,
        total_steps: steps,
        seed: 6,
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
    let schedule = cfg.schedule.build()?;
    let samples = sample_directions(&outcome.params, &schedule, 500, &RngStream::named(6, "sample"))?;

    let to_raw = EditSpec::new(dataset.centered_norm_mean, 1.0)?;
    let zero = LatentVector::zeros(16);
    let generated = samples
        .iter()
        .map(|d| apply_edit(&zero, d, &to_raw, &dataset.mean_direction))
        .collect::<diffedit::Result<Vec<_>>>()?;

    let w_s = sample_standard_normal(16, &mut RngStream::named(8, "source"))?;
    let plain = EditSpec::new(1.0, 0.0)?;
    let base = disentanglement_std(&world, 0, &w_s, &raw.directions, &plain, &zero)?;
    let model = disentanglement_std(&world, 0, &w_s, &generated, &plain, &zero)?;
    println!(
        "off/on ratio: raw dataset {:.4}, model samples {:.4} ({:.2}x), took {:.1?}",
        base.ratio,
        model.ratio,
        model.ratio / base.ratio,
        start.elapsed()
    );
    Ok(())
}

//! Train one small model per attribute, then edit a source latent with
//! sampled directions: each attribute on its own, then both in sequence.
//!
//! cargo run --release --example sequential_edit [steps]

use diffedit::diffusion::{DenoiserConfig, ScheduleConfig};
use diffedit::directions::{build_raw_dataset, normalize_dataset, DirectionDataset};
use diffedit::numerics::{sample_standard_normal, LatentVector, RngStream};
use diffedit::sampling::{apply_edit, sample_directions, sequential_edit, EditSpec, EditStage};
use diffedit::synthworld::{generate_world, AttributeSpec, SynthWorld, WorldSpec};
use diffedit::training::{train, TrainConfig};

fn dataset(world: &SynthWorld, attribute: &str, seed: u64) -> diffedit::Result<DirectionDataset> {
    let mut rng = RngStream::named(seed, attribute);
    let pairs = (0..800)
        .map(|_| world.sample_pair(attribute, &mut rng).map(|p| (p.w_p, p.w_n)))
        .collect::<diffedit::Result<Vec<_>>>()?;
    normalize_dataset(&build_raw_dataset(&pairs)?, attribute, "sequential_edit example")
}

/// Mean absolute change of each observable block.
fn block_changes(world: &SynthWorld, before: &LatentVector, after: &LatentVector) -> diffedit::Result<Vec<f64>> {
    let (a, b) = (world.observe(before)?, world.observe(after)?);
    Ok(world
        .observable_blocks()
        .iter()
        .map(|blk| blk.range.clone().map(|i| (b[i] - a[i]).abs()).sum::<f64>() / blk.range.len() as f64)
        .collect())
}

fn main() -> diffedit::Result<()> {
    let steps = std::env::args().nth(1).map_or(6000, |s| s.parse().expect("step count"));
    let attr = |name: &str, modes| AttributeSpec {
        name: name.into(),
        rank: 3,
        modes,
        magnitude: 3.0,
        mode_noise: 0.2,
        outlier_rate: 0.0,
        observable_dim: 4,
    };
    let world = generate_world(&WorldSpec {
        dim: 12,
        attributes: vec![attr("hair", 3), attr("smile", 2)],
        seed: 4,
    })?;

    let cfg = TrainConfig {
        total_steps: steps,
        seed: 4,
        schedule: ScheduleConfig::scaled_linear(200),
        denoiser: DenoiserConfig {
            input_dim: 12,
            depth: 3,
            width: 64,
            time_pe_dim: 16,
            time_hidden: 32,
        },
        log_interval: 500,
        ..TrainConfig::default()
    };
    let schedule = cfg.schedule.build()?;
    let mut stages = Vec::new();
    for name in ["hair", "smile"] {
        let ds = dataset(&world, name, 4)?;
        let out = train(&ds, &cfg)?;
        let d0 = sample_directions(&out.params, &schedule, 1, &RngStream::named(4, name))?.remove(0);
        println!("{name}: final loss window {:.4}", out.trace.last().map_or(f64::NAN, |r| r.loss));
        stages.push(EditStage {
            direction: d0,
            spec: EditSpec::new(ds.centered_norm_mean, 1.0)?,
            mean: ds.mean_direction,
        });
    }

    let w_s = sample_standard_normal(12, &mut RngStream::named(4, "source"))?;
    println!("blocks are [hair, smile, identity]");
    for (name, stage) in ["hair", "smile"].iter().zip(&stages) {
        let w_e = apply_edit(&w_s, &stage.direction, &stage.spec, &stage.mean)?;
        println!("{name} only: block change {:.3?}", block_changes(&world, &w_s, &w_e)?);
    }
    let both = sequential_edit(&w_s, &stages)?;
    println!("hair then smile: block change {:.3?}", block_changes(&world, &w_s, &both)?);
    Ok(())
}

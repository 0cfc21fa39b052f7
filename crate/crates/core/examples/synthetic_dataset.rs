//! Generate a synthetic world, draw labelled pairs, normalize them into a
//! direction dataset and round-trip it through the on-disk format.
//!
//! cargo run --release --example synthetic_dataset

use diffedit::directions::{build_raw_dataset, normalize_dataset, read_dataset, write_dataset};
use diffedit::eval::cosine_histogram;
use diffedit::numerics::RngStream;
use diffedit::synthworld::{generate_world, read_world, write_world, AttributeSpec, PairTruth, WorldSpec};

fn main() -> diffedit::Result<()> {
    let world = generate_world(&WorldSpec {
        dim: 16,
        attributes: vec![
            AttributeSpec {
                name: "hair".into(),
                rank: 4,
                modes: 4,
                magnitude: 3.0,
                mode_noise: 0.3,
                outlier_rate: 0.1,
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
        seed: 11,
    })?;
    for block in world.observable_blocks() {
        println!("observable block {:?}: {:?}", block.attribute, block.range);
    }

    let mut rng = RngStream::named(11, "pairs");
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..1000 {
        let p = world.sample_pair("hair", &mut rng)?;
        labels.push(p.truth);
        pairs.push((p.w_p, p.w_n));
    }
    let mut per_mode = [0usize; 4];
    let mut outliers = 0;
    for t in &labels {
        match *t {
            PairTruth::Mode(m) => per_mode[m] += 1,
            PairTruth::Outlier => outliers += 1,
        }
    }
    println!("pairs per mode {per_mode:?}, outliers {outliers}");

    let raw = build_raw_dataset(&pairs)?;
    let outside: Vec<f64> = raw.directions.iter().map(|d| world.energy_outside(0, d)).collect();
    let entangled = outside.iter().filter(|&&e| e > 1e-10).count();
    println!("{entangled} raw directions carry energy outside the hair subspace");

    let mut ds = normalize_dataset(&raw, "hair", "synthetic_dataset example")?;
    ds.labels = Some(labels);
    println!(
        "normalized {} directions, |m_a| = {:.4}, mean centered norm {:.4}",
        ds.len(),
        ds.mean_direction.norm(),
        ds.centered_norm_mean
    );

    let hist = cosine_histogram(&ds.directions, world.centers(0)[0].as_slice(), 10)?;
    print!("cosine to the first mode center\n{}", hist.to_csv());

    let dir = std::env::temp_dir().join("diffedit_synthetic_dataset");
    std::fs::create_dir_all(&dir).map_err(|source| diffedit::Error::Io { path: dir.clone(), source })?;
    write_world(dir.join("world"), &world)?;
    write_dataset(dir.join("dataset.ldir"), &ds)?;
    assert_eq!(read_world(dir.join("world"))?, world);
    assert_eq!(read_dataset(dir.join("dataset.ldir"))?, ds);
    println!("world and dataset round-tripped through {}", dir.display());
    Ok(())
}

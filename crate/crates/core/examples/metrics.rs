//! Evaluation metrics on hand-built point sets: k-NN precision/recall,
//! disentanglement of raw directions with and without outliers, and the
//! identity metrics between a source and its edit.
//!
//! cargo run --release --example metrics

use diffedit::eval::{cosine_similarity, disentanglement_std, euclidean_distance, improved_precision_recall};
use diffedit::numerics::{sample_standard_normal, LatentVector, RngStream};
use diffedit::sampling::{apply_edit, EditSpec};
use diffedit::synthworld::{generate_world, AttributeSpec, WorldSpec};

fn gaussian_cloud(n: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::named(seed, "cloud");
    (0..n)
        .map(|_| (0..4).map(|_| rng.standard_normal() + shift).collect())
        .collect()
}

fn main() -> diffedit::Result<()> {
    let real = gaussian_cloud(400, 0.0, 1);
    for shift in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let fake = gaussian_cloud(400, shift, 2);
        let pr = improved_precision_recall(&real, &fake, 3)?;
        println!("shift {shift:.1}: precision {:.3}, recall {:.3}", pr.precision, pr.recall);
    }

    let zero = LatentVector::zeros(16);
    let w_s = sample_standard_normal(16, &mut RngStream::named(3, "source"))?;
    for rho in [0.0, 0.05, 0.1, 0.2] {
        let spec = |name: &str, rho| AttributeSpec {
            name: name.into(),
            rank: 4,
            modes: 4,
            magnitude: 3.0,
            mode_noise: 0.3,
            outlier_rate: rho,
            observable_dim: 6,
        };
        let world = generate_world(&WorldSpec {
            dim: 16,
            attributes: vec![spec("hair", rho), spec("smile", 0.0)],
            seed: 3,
        })?;
        let mut rng = RngStream::named(3, "pairs");
        let dirs = (0..1000)
            .map(|_| world.sample_pair("hair", &mut rng).and_then(|p| p.w_p.sub(&p.w_n)))
            .collect::<diffedit::Result<Vec<_>>>()?;
        let d = disentanglement_std(&world, 0, &w_s, &dirs, &EditSpec::new(1.0, 0.0)?, &zero)?;
        println!(
            "outlier rate {rho:.2}: on-target std {:.3}, off-target std {:.4}, ratio {:.4}",
            d.on_target_mean_std, d.off_target_mean_std, d.ratio
        );
    }

    let d0 = sample_standard_normal(16, &mut RngStream::named(3, "direction"))?;
    for gamma in [0.0, 0.5, 1.0, 2.0] {
        let w_e = apply_edit(&w_s, &d0, &EditSpec::new(gamma, 0.0)?, &zero)?;
        println!(
            "gamma {gamma:.1}: CS {:.4}, ED {:.4}",
            cosine_similarity(&w_s, &w_e)?,
            euclidean_distance(&w_s, &w_e)?
        );
    }
    Ok(())
}

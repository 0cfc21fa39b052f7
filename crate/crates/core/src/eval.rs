//! Sample-quality and disentanglement metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, squared_distance, LatentVector};
use crate::sampling::{apply_edit, EditSpec};
use crate::synthworld::SynthWorld;

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("cosine_similarity", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidParameter("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("euclidean_distance", a.len(), b.len()));
    }
    Ok(squared_distance(a, b).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

/// Squared distance from each point to its `k`-th nearest neighbour in the same
/// set, the point itself excluded (duplicates count at distance zero).
fn knn_radii_sq<V: AsRef<[f64]>>(points: &[V], k: usize) -> Vec<f64> {
    let mut scratch = Vec::with_capacity(points.len());
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            scratch.clear();
            scratch.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| squared_distance(p.as_ref(), q.as_ref())),
            );
            let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Fraction of `queries` inside at least one ball around `refs`.
fn covered_fraction<V: AsRef<[f64]>>(refs: &[V], radii_sq: &[f64], queries: &[V]) -> f64 {
    // Try the widest balls first.
    let mut order: Vec<usize> = (0..refs.len()).collect();
    order.sort_by(|&a, &b| radii_sq[b].total_cmp(&radii_sq[a]));
    let hits = queries
        .iter()
        .filter(|q| {
            order
                .iter()
                .any(|&r| squared_distance(q.as_ref(), refs[r].as_ref()) <= radii_sq[r])
        })
        .count();
    hits as f64 / queries.len() as f64
}

/// k-NN manifold precision and recall with Euclidean distances.
///
/// Precision is the fraction of `generated` points lying in some real point's
/// k-NN ball; recall swaps the roles.
pub fn improved_precision_recall<V: AsRef<[f64]>>(real: &[V], generated: &[V], k: usize) -> Result<PrecisionRecall> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if real.len() <= k || generated.len() <= k {
        return Err(Error::InvalidParameter(format!(
            "precision/recall with k = {k} needs more than {k} points per set, got {} real and {} generated",
            real.len(),
            generated.len()
        )));
    }
    let dim = real[0].as_ref().len();
    for (i, v) in real.iter().chain(generated).enumerate() {
        if v.as_ref().len() != dim {
            return Err(Error::dims(format!("point {i}"), dim, v.as_ref().len()));
        }
    }
    let real_r = knn_radii_sq(real, k);
    let gen_r = knn_radii_sq(generated, k);
    Ok(PrecisionRecall {
        precision: covered_fraction(real, &real_r, generated),
        recall: covered_fraction(generated, &gen_r, real),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    pub per_mode_counts: Vec<usize>,
    pub matched: usize,
    /// Modes receiving at least 5% of matched samples, over the mode count.
    pub coverage: f64,
    pub unmatched_fraction: f64,
}

pub const MODE_SHARE_FLOOR: f64 = 0.05;

/// Assign each sample to its best true mode when the cosine reaches `threshold`.
pub fn mode_coverage<V: AsRef<[f64]>>(world: &SynthWorld, attribute: usize, samples: &[V], threshold: f64) -> Result<ModeCoverage> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("mode coverage needs samples".into()));
    }
    let modes = world
        .spec()
        .attributes
        .get(attribute)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown attribute index {attribute}")))?
        .modes;
    let mut counts = vec![0usize; modes];
    let mut unmatched = 0;
    for s in samples {
        let s = s.as_ref();
        if norm(s) == 0.0 {
            unmatched += 1;
            continue;
        }
        let (m, score) = world.true_mode_assignment(attribute, s)?;
        if score >= threshold {
            counts[m] += 1;
        } else {
            unmatched += 1;
        }
    }
    let matched = samples.len() - unmatched;
    let covered = if matched == 0 {
        0
    } else {
        counts
            .iter()
            .filter(|&&c| c as f64 >= MODE_SHARE_FLOOR * matched as f64)
            .count()
    };
    Ok(ModeCoverage {
        per_mode_counts: counts,
        matched,
        coverage: covered as f64 / modes as f64,
        unmatched_fraction: unmatched as f64 / samples.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disentanglement {
    /// Population standard deviation of each observable change across directions.
    pub per_observable_std: Vec<f64>,
    pub on_target_mean_std: f64,
    pub off_target_mean_std: f64,
    /// Off-target over on-target mean std; 0 when the target block does not move.
    pub ratio: f64,
    pub degenerate: bool,
}

/// Spread of observable changes `observe(apply_edit(w_s, d)) − observe(w_s)`
/// over `directions`, split into the target attribute's block and everything else.
pub fn disentanglement_std<V: AsRef<[f64]>>(
    world: &SynthWorld,
    attribute: usize,
    w_s: &LatentVector,
    directions: &[V],
    spec: &EditSpec,
    mean: &LatentVector,
) -> Result<Disentanglement> {
    if directions.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "disentanglement needs at least 2 directions, got {}",
            directions.len()
        )));
    }
    let base = world.observe(w_s)?;
    let p = base.len();
    let mut sum = vec![0.0; p];
    let mut changes = Vec::with_capacity(directions.len());
    for d in directions {
        let d = LatentVector::new(d.as_ref().to_vec())?;
        let edited = world.observe(&apply_edit(w_s, &d, spec, mean)?)?;
        let delta: Vec<f64> = edited.iter().zip(&base).map(|(e, b)| e - b).collect();
        for (s, x) in sum.iter_mut().zip(&delta) {
            *s += x;
        }
        changes.push(delta);
    }
    let n = directions.len() as f64;
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let per_observable_std: Vec<f64> = (0..p)
        .map(|i| (changes.iter().map(|c| (c[i] - means[i]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();

    let (mut on, mut on_n, mut off, mut off_n) = (0.0, 0usize, 0.0, 0usize);
    for block in world.observable_blocks() {
        let s: f64 = per_observable_std[block.range.clone()].iter().sum();
        if block.attribute == Some(attribute) {
            on += s;
            on_n += block.range.len();
        } else {
            off += s;
            off_n += block.range.len();
        }
    }
    let on_mean = if on_n > 0 { on / on_n as f64 } else { 0.0 };
    let off_mean = if off_n > 0 { off / off_n as f64 } else { 0.0 };
    let degenerate = on_mean == 0.0;
    Ok(Disentanglement {
        per_observable_std,
        on_target_mean_std: on_mean,
        off_target_mean_std: off_mean,
        ratio: if degenerate { 0.0 } else { off_mean / on_mean },
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Two-column CSV: `bin_center,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let center = 0.5 * (self.edges[i] + self.edges[i + 1]);
            let _ = writeln!(out, "{center},{c}");
        }
        out
    }
}

/// Cosine of each direction with `reference`, binned uniformly over `[-1, 1]`.
/// A cosine of exactly 1 lands in the top bin; zero directions are counted at cosine 0.
pub fn cosine_histogram<V: AsRef<[f64]>>(directions: &[V], reference: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    if norm(reference) == 0.0 {
        return Err(Error::InvalidParameter("histogram reference is the zero vector".into()));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| (2.0 * i as f64 - bins as f64) / bins as f64).collect();
    let mut counts = vec![0u64; bins];
    for d in directions {
        let d = d.as_ref();
        let c = if norm(d) == 0.0 { 0.0 } else { cosine_similarity(d, reference)? };
        let idx = (((c + 1.0) / 2.0) * bins as f64).floor() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Machine-readable bundle of named metrics, histograms and provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: BTreeMap<String, f64>,
    pub histograms: BTreeMap<String, Histogram>,
    pub provenance: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn set(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }
}

impl AsRef<[f64]> for LatentVector {
    fn as_ref(&self) -> &[f64] {
        self.as_slice()
    }
}

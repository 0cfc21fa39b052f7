//! Edit-direction datasets: pair differencing, centering and unit normalization,
//! and their on-disk form (an `LDIR` tensor of shape `[N, D]` plus a
//! `<basename>.meta.json` sidecar).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm, read_tensor, write_tensor, LatentVector};
use crate::synthworld::PairTruth;

/// Centered directions shorter than this are rejected by [`normalize_dataset`].
pub const MIN_CENTERED_NORM: f64 = 1e-12;

/// `w_p − w_n`.
pub fn pair_difference(w_p: &LatentVector, w_n: &LatentVector) -> Result<LatentVector> {
    w_p.sub(w_n)
}

/// Unnormalized directions in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDirections {
    pub directions: Vec<LatentVector>,
    /// Indices of pairs whose difference is exactly zero.
    pub zero_difference: Vec<usize>,
}

impl RawDirections {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Difference every `(w_p, w_n)` pair. Duplicates and zero differences are kept.
pub fn build_raw_dataset(pairs: &[(LatentVector, LatentVector)]) -> Result<RawDirections> {
    let Some((first, _)) = pairs.first() else {
        return Err(Error::InvalidParameter("no pairs to difference".into()));
    };
    let dim = first.dim();
    let mut directions = Vec::with_capacity(pairs.len());
    let mut zero_difference = Vec::new();
    for (i, (w_p, w_n)) in pairs.iter().enumerate() {
        if w_p.dim() != dim || w_n.dim() != dim {
            return Err(Error::dims(
                format!("pair {i}"),
                dim,
                if w_p.dim() != dim { w_p.dim() } else { w_n.dim() },
            ));
        }
        let d = pair_difference(w_p, w_n)?;
        if d.iter().all(|&v| v == 0.0) {
            zero_difference.push(i);
        }
        directions.push(d);
    }
    Ok(RawDirections {
        directions,
        zero_difference,
    })
}

/// Normalized directions for one attribute plus the statistics needed to undo
/// the normalization at edit time.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionDataset {
    pub attribute: String,
    /// Unit-length directions after subtracting `mean_direction`.
    pub directions: Vec<LatentVector>,
    /// m_a: arithmetic mean of the raw directions.
    pub mean_direction: LatentVector,
    /// Mean length of the centered raw directions.
    pub centered_norm_mean: f64,
    pub provenance: String,
    /// Ground-truth labels when the pairs came from a synthetic world.
    pub labels: Option<Vec<PairTruth>>,
}

impl DirectionDataset {
    pub fn dim(&self) -> usize {
        self.mean_direction.dim()
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Mean of the stored (normalized) directions.
    pub fn stored_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for d in &self.directions {
            for (m, v) in mean.iter_mut().zip(d.iter()) {
                *m += v;
            }
        }
        let n = self.directions.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Errors unless every stored direction has unit length within `tol`.
    ///
    /// Centering cannot be verified from the stored units alone: a skewed raw
    /// set legitimately leaves a large mean after the unit-length step.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        if self.directions.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "dataset '{}' is empty",
                self.attribute
            )));
        }
        for (i, d) in self.directions.iter().enumerate() {
            if d.dim() != self.dim() {
                return Err(Error::dims(format!("direction {i}"), self.dim(), d.dim()));
            }
            let len = d.norm();
            if (len - 1.0).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "dataset '{}' is not normalized: direction {i} has length {len} \
                     (expected 1 within {tol}); run normalize_dataset first",
                    self.attribute
                )));
            }
        }
        Ok(())
    }
}

/// Subtract the raw mean m_a from every direction and scale each to unit length.
pub fn normalize_dataset(raw: &RawDirections, attribute: &str, provenance: &str) -> Result<DirectionDataset> {
    let n = raw.directions.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "normalization needs at least 2 directions, got {n}"
        )));
    }
    let dim = raw.directions[0].dim();
    let mut mean = vec![0.0; dim];
    for (i, d) in raw.directions.iter().enumerate() {
        if d.dim() != dim {
            return Err(Error::dims(format!("direction {i}"), dim, d.dim()));
        }
        for (m, v) in mean.iter_mut().zip(d.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut directions = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    let mut norm_sum = 0.0;
    for (i, d) in raw.directions.iter().enumerate() {
        let centered: Vec<f64> = d.iter().zip(&mean).map(|(v, m)| v - m).collect();
        let len = norm(&centered);
        if len < MIN_CENTERED_NORM {
            degenerate.push(i);
            continue;
        }
        norm_sum += len;
        directions.push(LatentVector::from_vec_unchecked(
            centered.iter().map(|v| v / len).collect(),
        ));
    }
    if !degenerate.is_empty() {
        return Err(Error::Degenerate(format!(
            "centered directions with near-zero norm at indices {degenerate:?}"
        )));
    }
    Ok(DirectionDataset {
        attribute: attribute.to_string(),
        directions,
        mean_direction: LatentVector::new(mean)?,
        centered_norm_mean: norm_sum / n as f64,
        provenance: provenance.to_string(),
        labels: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetSidecar {
    attribute: String,
    n: usize,
    d: usize,
    provenance: String,
    mean_direction: Vec<f64>,
    centered_norm_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<PairTruth>>,
}

/// `foo.ldir` → `foo.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &DirectionDataset) -> Result<()> {
    let path = path.as_ref();
    let (n, d) = (ds.len(), ds.dim());
    let mut data = Vec::with_capacity(n * d);
    for (i, v) in ds.directions.iter().enumerate() {
        if v.dim() != d {
            return Err(Error::dims(format!("direction {i}"), d, v.dim()));
        }
        data.extend_from_slice(v);
    }
    if let Some(labels) = &ds.labels {
        if labels.len() != n {
            return Err(Error::dims("dataset labels", n, labels.len()));
        }
    }
    write_tensor(path, &[n, d], &data)?;
    let sidecar = DatasetSidecar {
        attribute: ds.attribute.clone(),
        n,
        d,
        provenance: ds.provenance.clone(),
        mean_direction: ds.mean_direction.to_vec(),
        centered_norm_mean: ds.centered_norm_mean,
        labels: ds.labels.clone(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DirectionDataset> {
    let path = path.as_ref();
    let tensor = read_tensor(path)?;
    let sidecar: DatasetSidecar = read_json(&sidecar_path(path))?;
    if tensor.dims != [sidecar.n, sidecar.d] {
        return Err(Error::ShapeMismatch(format!(
            "tensor dims {:?} disagree with sidecar [{}, {}]",
            tensor.dims, sidecar.n, sidecar.d
        )));
    }
    if sidecar.mean_direction.len() != sidecar.d {
        return Err(Error::ShapeMismatch(format!(
            "mean direction has {} entries, expected {}",
            sidecar.mean_direction.len(),
            sidecar.d
        )));
    }
    if let Some(labels) = &sidecar.labels {
        if labels.len() != sidecar.n {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} directions",
                labels.len(),
                sidecar.n
            )));
        }
    }
    let directions = tensor
        .rows()?
        .into_iter()
        .map(LatentVector::new)
        .collect::<Result<Vec<_>>>()?;
    Ok(DirectionDataset {
        attribute: sidecar.attribute,
        directions,
        mean_direction: LatentVector::new(sidecar.mean_direction)?,
        centered_norm_mean: sidecar.centered_norm_mean,
        provenance: sidecar.provenance,
        labels: sidecar.labels,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

//! A synthetic latent world with known attribute subspaces.
//!
//! The latent space `R^D` is split by a random orthonormal basis `Q` into one
//! subspace per attribute (`k_a` consecutive columns of `Q`, in attribute
//! order) and a complement holding the remaining columns. Each attribute has
//! `M_a` mode centers inside its subspace. The observable map is
//!
//! ```text
//! O = [ M_1 B_1ᵀ ; M_2 B_2ᵀ ; ... ; M_A B_Aᵀ ; Rᵀ ]
//! ```
//!
//! where `B_a` is attribute `a`'s basis, `M_a` a random `obs_dim_a × k_a`
//! mixing matrix and `R` the complement basis (the identity block). Each
//! observable coordinate therefore belongs to exactly one attribute block or
//! to the identity block.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::directions::{read_json, write_json};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm, read_tensor, write_tensor, DenseMatrix, LatentVector, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub rank: usize,
    pub modes: usize,
    pub magnitude: f64,
    /// Standard deviation of the in-subspace noise added to a mode center.
    pub mode_noise: f64,
    pub outlier_rate: f64,
    pub observable_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub dim: usize,
    pub attributes: Vec<AttributeSpec>,
    pub seed: u64,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("latent dimension must be >= 1".into()));
        }
        if self.attributes.is_empty() {
            return Err(Error::InvalidParameter("world needs at least one attribute".into()));
        }
        let rank_sum: usize = self.attributes.iter().map(|a| a.rank).sum();
        if rank_sum > self.dim {
            return Err(Error::InvalidParameter(format!(
                "sum of attribute ranks ({rank_sum}) exceeds latent dimension D = {}",
                self.dim
            )));
        }
        for (i, a) in self.attributes.iter().enumerate() {
            if self.attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidParameter(format!("duplicate attribute '{}'", a.name)));
            }
            if a.rank == 0 || a.modes == 0 {
                return Err(Error::InvalidParameter(format!(
                    "attribute '{}' needs rank >= 1 and modes >= 1",
                    a.name
                )));
            }
            if !(a.magnitude > 0.0 && a.magnitude.is_finite()) || !(a.mode_noise >= 0.0 && a.mode_noise.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "attribute '{}' needs magnitude > 0 and mode_noise >= 0",
                    a.name
                )));
            }
            if !(0.0..=1.0).contains(&a.outlier_rate) {
                return Err(Error::InvalidParameter(format!(
                    "attribute '{}' outlier rate {} outside [0, 1]",
                    a.name, a.outlier_rate
                )));
            }
            if a.outlier_rate > 0.0 && self.attributes.len() == 1 && rank_sum == self.dim {
                return Err(Error::InvalidParameter(format!(
                    "attribute '{}' has outliers but no foreign subspace exists",
                    a.name
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth for one sampled pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairTruth {
    Mode(usize),
    Outlier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub w_n: LatentVector,
    pub w_p: LatentVector,
    pub truth: PairTruth,
}

/// Which attribute an observable block belongs to; `None` is the identity block.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableBlock {
    pub attribute: Option<usize>,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    spec: WorldSpec,
    /// Orthonormal basis of R^D as column vectors.
    basis: Vec<Vec<f64>>,
    centers: Vec<Vec<LatentVector>>,
    observable: DenseMatrix,
}

/// Orthonormalize columns in place (modified Gram-Schmidt, two passes).
fn orthonormalize(cols: &mut [Vec<f64>]) -> Result<()> {
    for i in 0..cols.len() {
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = cols.split_at_mut(i);
                let proj = dot(&tail[0], &head[j]);
                for (x, q) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= proj * q;
                }
            }
        }
        let n = norm(&cols[i]);
        if n < 1e-8 {
            return Err(Error::Numerical("rank-deficient random matrix".into()));
        }
        cols[i].iter_mut().for_each(|x| *x /= n);
    }
    Ok(())
}

pub fn generate_world(spec: &WorldSpec) -> Result<SynthWorld> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = RngStream::from_seed(spec.seed);
    let mut basis: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.standard_normal()).collect())
        .collect();
    orthonormalize(&mut basis)?;

    let mut world = SynthWorld {
        spec: spec.clone(),
        basis,
        centers: Vec::new(),
        observable: DenseMatrix::zeros(0, d),
    };

    for (a, attr) in spec.attributes.iter().enumerate() {
        let k = attr.rank;
        let mut coeffs: Vec<Vec<f64>> = (0..attr.modes)
            .map(|_| (0..k).map(|_| rng.standard_normal()).collect())
            .collect();
        if attr.modes <= k {
            orthonormalize(&mut coeffs)?;
        } else {
            for c in &mut coeffs {
                let n = norm(c);
                c.iter_mut().for_each(|x| *x /= n);
            }
        }
        let centers = coeffs
            .iter()
            .map(|c| {
                let v = world.in_subspace(a, c);
                LatentVector::from_vec_unchecked(v.iter().map(|x| attr.magnitude * x).collect())
            })
            .collect();
        world.centers.push(centers);
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (a, attr) in spec.attributes.iter().enumerate() {
        let k = attr.rank;
        let scale = 1.0 / (k as f64).sqrt();
        let mixer: Vec<Vec<f64>> = (0..attr.observable_dim)
            .map(|_| (0..k).map(|_| scale * rng.standard_normal()).collect())
            .collect();
        for m in &mixer {
            rows.push(world.in_subspace(a, m));
        }
    }
    for col in world.complement_range() {
        rows.push(world.basis[col].clone());
    }
    world.observable = if rows.is_empty() {
        DenseMatrix::zeros(0, d)
    } else {
        DenseMatrix::from_rows(&rows)?
    };
    Ok(world)
}

impl SynthWorld {
    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.spec
            .attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown attribute '{name}'")))
    }

    fn column_range(&self, a: usize) -> Range<usize> {
        let start: usize = self.spec.attributes[..a].iter().map(|x| x.rank).sum();
        start..start + self.spec.attributes[a].rank
    }

    fn complement_range(&self) -> Range<usize> {
        let used: usize = self.spec.attributes.iter().map(|x| x.rank).sum();
        used..self.spec.dim
    }

    /// Orthonormal basis columns of attribute `a`'s subspace.
    pub fn basis(&self, a: usize) -> Vec<&[f64]> {
        self.column_range(a).map(|c| self.basis[c].as_slice()).collect()
    }

    pub fn complement_basis(&self) -> Vec<&[f64]> {
        self.complement_range().map(|c| self.basis[c].as_slice()).collect()
    }

    pub fn centers(&self, a: usize) -> &[LatentVector] {
        &self.centers[a]
    }

    pub fn observable_map(&self) -> &DenseMatrix {
        &self.observable
    }

    /// `B_a c` for coefficients `c` of length `k_a`.
    pub fn in_subspace(&self, a: usize, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.dim];
        for (col, &c) in self.column_range(a).zip(coeffs) {
            for (o, b) in out.iter_mut().zip(&self.basis[col]) {
                *o += c * b;
            }
        }
        out
    }

    /// `B_aᵀ v`.
    pub fn project_coeffs(&self, a: usize, v: &[f64]) -> Vec<f64> {
        self.column_range(a).map(|c| dot(&self.basis[c], v)).collect()
    }

    /// Fraction of `‖v‖²` outside attribute `a`'s subspace.
    pub fn energy_outside(&self, a: usize, v: &[f64]) -> f64 {
        let total = dot(v, v);
        if total == 0.0 {
            return 0.0;
        }
        let inside: f64 = self.project_coeffs(a, v).iter().map(|c| c * c).sum();
        ((total - inside) / total).max(0.0)
    }

    pub fn observable_blocks(&self) -> Vec<ObservableBlock> {
        let mut out = Vec::new();
        let mut start = 0;
        for (a, attr) in self.spec.attributes.iter().enumerate() {
            out.push(ObservableBlock {
                attribute: Some(a),
                range: start..start + attr.observable_dim,
            });
            start += attr.observable_dim;
        }
        let rest = self.complement_range().len();
        if rest > 0 {
            out.push(ObservableBlock {
                attribute: None,
                range: start..start + rest,
            });
        }
        out
    }

    /// Draw one `(w_n, w_p)` pair for attribute `a`.
    ///
    /// Stream order: `D` normals for `w_n`, one uniform for the outlier test,
    /// one integer for the mode, then the noise (inlier: `k_a` normals;
    /// outlier: one integer for the foreign subspace and its normals).
    pub fn sample_pair_index(&self, a: usize, rng: &mut RngStream) -> Result<SyntheticPair> {
        let attr = self
            .spec
            .attributes
            .get(a)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown attribute index {a}")))?;
        let d = self.spec.dim;
        let mut w_n = vec![0.0; d];
        rng.fill_normal(&mut w_n);
        let outlier = rng.uniform() < attr.outlier_rate;
        let m = rng.below(attr.modes as u64) as usize;
        let center = &self.centers[a][m];
        let delta: Vec<f64> = if outlier {
            let foreign = self.foreign_columns(a, rng);
            let mut z: Vec<f64> = (0..foreign.len()).map(|_| rng.standard_normal()).collect();
            let zn = norm(&z);
            z.iter_mut().for_each(|x| *x /= zn);
            let half = std::f64::consts::FRAC_1_SQRT_2;
            let cn = center.norm();
            let mut v: Vec<f64> = center.iter().map(|c| half * c / cn * attr.magnitude).collect();
            for (&col, zc) in foreign.iter().zip(&z) {
                for (x, b) in v.iter_mut().zip(&self.basis[col]) {
                    *x += half * attr.magnitude * zc * b;
                }
            }
            v
        } else {
            let z: Vec<f64> = (0..attr.rank)
                .map(|_| attr.mode_noise * rng.standard_normal())
                .collect();
            let noise = self.in_subspace(a, &z);
            center.iter().zip(&noise).map(|(c, e)| c + e).collect()
        };
        let w_p: Vec<f64> = w_n.iter().zip(&delta).map(|(x, y)| x + y).collect();
        Ok(SyntheticPair {
            w_n: LatentVector::from_vec_unchecked(w_n),
            w_p: LatentVector::from_vec_unchecked(w_p),
            truth: if outlier { PairTruth::Outlier } else { PairTruth::Mode(m) },
        })
    }

    /// Columns of a uniformly chosen foreign attribute, or the complement when
    /// the world has a single attribute.
    fn foreign_columns(&self, a: usize, rng: &mut RngStream) -> Vec<usize> {
        let n = self.spec.attributes.len();
        if n == 1 {
            return self.complement_range().collect();
        }
        let mut b = rng.below((n - 1) as u64) as usize;
        if b >= a {
            b += 1;
        }
        self.column_range(b).collect()
    }

    pub fn sample_pair(&self, attribute: &str, rng: &mut RngStream) -> Result<SyntheticPair> {
        self.sample_pair_index(self.attribute_index(attribute)?, rng)
    }

    /// `O w`.
    pub fn observe(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.spec.dim {
            return Err(Error::dims("observe", self.spec.dim, w.len()));
        }
        Ok((0..self.observable.rows())
            .map(|i| dot(self.observable.row(i), w))
            .collect())
    }

    /// Best-matching mode by cosine; ties go to the lowest mode id.
    pub fn true_mode_assignment(&self, a: usize, d: &[f64]) -> Result<(usize, f64)> {
        let centers = self
            .centers
            .get(a)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown attribute index {a}")))?;
        if d.len() != self.spec.dim {
            return Err(Error::dims("true_mode_assignment", self.spec.dim, d.len()));
        }
        let dn = norm(d);
        if dn == 0.0 {
            return Err(Error::InvalidParameter("cannot assign a zero direction".into()));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (m, c) in centers.iter().enumerate() {
            let cos = (dot(d, c) / (dn * c.norm())).clamp(-1.0, 1.0);
            if cos > best.1 {
                best = (m, cos);
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WorldSidecar {
    spec: WorldSpec,
    basis_file: String,
    centers_file: String,
    observable_file: String,
}

fn world_paths(stem: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let with = |suffix: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (
        with(".meta.json"),
        with(".basis.ldir"),
        with(".centers.ldir"),
        with(".observe.ldir"),
    )
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Writes `<stem>.meta.json`, `<stem>.basis.ldir` (`[D, D]`, row `i` is basis
/// column `i`), `<stem>.centers.ldir` (`[ΣM_a, D]`, attribute order) and
/// `<stem>.observe.ldir` (`[P, D]`).
pub fn write_world(stem: impl AsRef<Path>, world: &SynthWorld) -> Result<()> {
    let (meta, basis, centers, observe) = world_paths(stem.as_ref());
    let d = world.dim();
    let flat_basis: Vec<f64> = world.basis.iter().flatten().copied().collect();
    write_tensor(&basis, &[d, d], &flat_basis)?;
    let flat_centers: Vec<f64> = world.centers.iter().flatten().flat_map(|c| c.iter().copied()).collect();
    write_tensor(&centers, &[flat_centers.len() / d, d], &flat_centers)?;
    write_tensor(&observe, &[world.observable.rows(), d], world.observable.data())?;
    write_json(
        &meta,
        &WorldSidecar {
            spec: world.spec.clone(),
            basis_file: file_name(&basis),
            centers_file: file_name(&centers),
            observable_file: file_name(&observe),
        },
    )
}

pub fn read_world(stem: impl AsRef<Path>) -> Result<SynthWorld> {
    let (meta, basis_p, centers_p, observe_p) = world_paths(stem.as_ref());
    let sidecar: WorldSidecar = read_json(&meta)?;
    let spec = sidecar.spec;
    spec.validate()?;
    let d = spec.dim;
    let basis = read_tensor(&basis_p)?;
    if basis.dims != [d, d] {
        return Err(Error::ShapeMismatch(format!("basis dims {:?}, expected [{d}, {d}]", basis.dims)));
    }
    let total_modes: usize = spec.attributes.iter().map(|a| a.modes).sum();
    let centers = read_tensor(&centers_p)?;
    if centers.dims != [total_modes, d] {
        return Err(Error::ShapeMismatch(format!(
            "centers dims {:?}, expected [{total_modes}, {d}]",
            centers.dims
        )));
    }
    let obs_rows: usize =
        spec.attributes.iter().map(|a| a.observable_dim).sum::<usize>() + d - spec.attributes.iter().map(|a| a.rank).sum::<usize>();
    let observe = read_tensor(&observe_p)?;
    if observe.dims != [obs_rows, d] {
        return Err(Error::ShapeMismatch(format!(
            "observable dims {:?}, expected [{obs_rows}, {d}]",
            observe.dims
        )));
    }
    let mut rows = centers.rows()?.into_iter();
    let centers = spec
        .attributes
        .iter()
        .map(|a| (0..a.modes).map(|_| LatentVector::new(rows.next().expect("counted"))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthWorld {
        basis: basis.rows()?,
        centers,
        observable: DenseMatrix::new(obs_rows, d, observe.data)?,
        spec,
    })
}

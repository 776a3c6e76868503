//! Part-level appearance control: PCA over the features of one part's
//! vertices, projection onto that basis and additive coefficient edits.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::body::BodyTemplate;
use crate::error::{Error, Result};
use crate::feature_map::{vertex_features, FeatureMap, VertexFeatures};

pub const DEFAULT_COMPONENTS: usize = 30;
pub const PCA_VERSION: &str = "veri3d-pca/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartPcaBasis {
    pub version: String,
    pub part: usize,
    /// Template vertices labeled with `part`, ascending.
    pub vertices: Vec<usize>,
    pub channels: usize,
    pub c: usize,
    /// Flattened `n_part · L_F` mean.
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartEdit {
    pub part: usize,
    pub deltas: Vec<f64>,
}

/// Vertices whose dominant skinning part is `part`.
pub fn part_vertices(template: &BodyTemplate, part: usize) -> Vec<usize> {
    template
        .part_labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == part)
        .map(|(i, _)| i)
        .collect()
}

fn flatten(features: &VertexFeatures, vertices: &[usize]) -> Vec<f64> {
    vertices.iter().flat_map(|&v| features.row(v).iter().copied()).collect()
}

fn lex_max_positive(v: &mut [f64]) {
    // Largest magnitude wins; ties go to the earliest entry.
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Completes `basis` with unit vectors orthogonal to all of it.
fn complete_orthonormal(basis: &mut Vec<DVector<f64>>, dim: usize, target: usize) {
    let mut e = 0;
    while basis.len() < target && e < dim {
        let mut v = DVector::zeros(dim);
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for b in basis.iter() {
                let d = b.dot(&v);
                v -= b * d;
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            basis.push(v / n);
        }
    }
}

/// PCA over the part's flattened features, top `c` components (clipped to
/// `min(samples − 1, dim)`). The covariance divides by `samples − 1`.
pub fn part_pca(samples: &[VertexFeatures], template: &BodyTemplate, part: usize, c: usize) -> Result<PartPcaBasis> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if part >= template.num_parts() {
        return Err(Error::Parameter(format!("part {part} does not exist")));
    }
    let channels = samples[0].channels;
    let m = template.num_vertices();
    if let Some(bad) = samples.iter().find(|s| s.channels != channels || s.num_vertices() != m) {
        return Err(Error::DimensionMismatch(format!(
            "sample is {}×{}, expected {m}×{channels}",
            bad.num_vertices(),
            bad.channels
        )));
    }
    let vertices = part_vertices(template, part);
    if vertices.is_empty() {
        return Err(Error::InsufficientData(format!("part {part} owns no vertices")));
    }
    let n = samples.len();
    let dim = vertices.len() * channels;
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| flatten(s, &vertices)).collect();
    // Incremental mean, exact when all samples agree.
    let mut mean = rows[0].clone();
    for (k, r) in rows.iter().enumerate().skip(1) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += (v - *m) / (k + 1) as f64;
        }
    }
    let x = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);
    let norm = 1.0 / (n - 1) as f64;
    let c = c.min(n - 1).min(dim);
    // Eigenvalues below this are round-off of a rank-deficient covariance.
    let magnitude = rows.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let zero_tol = 1e-24 * (magnitude * magnitude * dim as f64).max(f64::MIN_POSITIVE);

    let (values, mut vectors): (Vec<f64>, Vec<DVector<f64>>) = if n < dim {
        // Gram trick: eigenvectors of X Xᵀ map to those of Xᵀ X through Xᵀ.
        let eig = SymmetricEigen::new(&x * x.transpose() * norm);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut vals = Vec::new();
        let mut vecs = Vec::new();
        for &k in order.iter().take(c) {
            let lambda = eig.eigenvalues[k];
            if lambda <= 1e-12 * scale || lambda <= zero_tol {
                break;
            }
            let v = x.transpose() * eig.eigenvectors.column(k);
            vals.push(lambda);
            vecs.push(v.normalize());
        }
        vals.resize(c, 0.0);
        (vals, vecs)
    } else {
        let eig = SymmetricEigen::new(x.transpose() * &x * norm);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = order
            .iter()
            .take(c)
            .map(|&k| Some(eig.eigenvalues[k]).filter(|v| *v > zero_tol).unwrap_or(0.0))
            .collect();
        let vecs = order.iter().take(c).map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
        (vals, vecs)
    };
    // Zero-variance directions are arbitrary; any orthonormal completion will do.
    complete_orthonormal(&mut vectors, dim, c);
    let components = vectors
        .into_iter()
        .map(|v| {
            let mut v: Vec<f64> = v.iter().copied().collect();
            lex_max_positive(&mut v);
            v
        })
        .collect();
    Ok(PartPcaBasis {
        version: PCA_VERSION.into(),
        part,
        vertices,
        channels,
        c,
        mean,
        components,
        eigenvalues: values,
    })
}

impl PartPcaBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PCA_VERSION {
            return Err(Error::Format(format!("unsupported PCA basis version {:?}", self.version)));
        }
        let dim = self.vertices.len() * self.channels;
        if self.mean.len() != dim
            || self.components.len() != self.c
            || self.eigenvalues.len() != self.c
            || self.components.iter().any(|v| v.len() != dim)
        {
            return Err(Error::Format("PCA basis arrays have inconsistent lengths".into()));
        }
        Ok(())
    }

    pub fn check(&self, features: &VertexFeatures) -> Result<()> {
        let max = self.vertices.iter().copied().max().unwrap_or(0);
        if features.channels != self.channels || max >= features.num_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "features are {}×{}, basis expects {} channels over vertices up to {max}",
                features.num_vertices(),
                features.channels,
                self.channels
            )));
        }
        Ok(())
    }

    /// `mean + Σ a_i · component_i`, flattened.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (a, comp) in coeffs.iter().zip(&self.components) {
            for (o, v) in out.iter_mut().zip(comp) {
                *o += a * v;
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let basis: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        basis.validate()?;
        Ok(basis)
    }
}

/// `a_i = ⟨flat − mean, component_i⟩`.
pub fn project_part(features: &VertexFeatures, basis: &PartPcaBasis) -> Result<Vec<f64>> {
    basis.check(features)?;
    let flat = flatten(features, &basis.vertices);
    let centered: Vec<f64> = flat.iter().zip(&basis.mean).map(|(f, m)| f - m).collect();
    Ok(basis
        .components
        .iter()
        .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
        .collect())
}

/// Adds `Σ Δ_i · component_i` to the part's rows; every other row is copied.
pub fn apply_part_edit(features: &VertexFeatures, basis: &PartPcaBasis, edit: &PartEdit) -> Result<VertexFeatures> {
    basis.check(features)?;
    if edit.part != basis.part {
        return Err(Error::Parameter(format!(
            "edit targets part {} but the basis is for part {}",
            edit.part, basis.part
        )));
    }
    if edit.deltas.len() != basis.c {
        return Err(Error::DimensionMismatch(format!(
            "{} deltas for {} components",
            edit.deltas.len(),
            basis.c
        )));
    }
    let mut out = features.clone();
    let l = basis.channels;
    for (delta, comp) in edit.deltas.iter().zip(&basis.components) {
        if *delta == 0.0 {
            continue;
        }
        for (slot, &v) in basis.vertices.iter().enumerate() {
            for (o, c) in out.row_mut(v).iter_mut().zip(&comp[slot * l..(slot + 1) * l]) {
                *o += delta * c;
            }
        }
    }
    Ok(out)
}

/// Seeded ensemble of smooth feature maps: each sample is a coarse random
/// `grid × grid` map, sampled bilinearly at the template UVs.
pub fn synthetic_ensemble(template: &BodyTemplate, samples: usize, channels: usize, grid: usize, seed: u64) -> Vec<VertexFeatures> {
    (0..samples)
        .map(|i| {
            let map = FeatureMap::random(grid, grid, channels, seed.wrapping_add(i as u64));
            vertex_features(&map, template)
        })
        .collect()
}

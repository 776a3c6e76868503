//! Order-invariant neighbor reductions: inverse-distance feature blending and
//! the 7-dim local-coordinate summary.

use std::cmp::Ordering;

use crate::math::Vec3;

pub const DISTANCE_EPS: f64 = 1e-8;

/// Normalized inverse-distance weights `p_k / Σ p`, `p_k = 1/(d_k + ε)`.
///
/// The normalizer is summed in ascending-distance order so the weights do not
/// depend on the order of `distances`.
pub fn inverse_distance_weights(distances: &[f64]) -> Vec<f64> {
    let p: Vec<f64> = distances.iter().map(|d| 1.0 / (d + DISTANCE_EPS)).collect();
    let mut sorted = p.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    p.iter().map(|v| v / total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub feature: Vec<f64>,
    pub weights: Vec<f64>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// `f̄ = Σ_k (p_k / Σ p) f_k`. Terms are accumulated in a canonical order
/// (distance, then feature values), so any permutation of the neighbors gives
/// a bitwise-identical result.
pub fn aggregate_features(features: &[&[f64]], distances: &[f64]) -> Aggregate {
    assert_eq!(features.len(), distances.len());
    let weights = inverse_distance_weights(distances);
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .total_cmp(&distances[b])
            .then_with(|| lexicographic(features[a], features[b]))
    });
    let dim = features.first().map_or(0, |f| f.len());
    let mut feature = vec![0.0; dim];
    for &k in &order {
        for (o, v) in feature.iter_mut().zip(features[k]) {
            *o += weights[k] * v;
        }
    }
    Aggregate { feature, weights }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalSummary {
    /// Mean of the unit directions, not renormalized.
    pub mean_direction: Vec3,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population variance (divides by K).
    pub variance: f64,
}

impl LocalSummary {
    /// `(mean_dir, min, max, mean, var)`, or only the four norm statistics.
    pub fn to_vec(&self, with_direction: bool) -> Vec<f64> {
        let stats = [self.min, self.max, self.mean, self.variance];
        if with_direction {
            let d = self.mean_direction;
            vec![d.x, d.y, d.z, stats[0], stats[1], stats[2], stats[3]]
        } else {
            stats.to_vec()
        }
    }
}

pub fn summary_dim(with_direction: bool) -> usize {
    if with_direction {
        7
    } else {
        4
    }
}

/// Averages unit directions and summarizes norms of the K local coordinates.
/// Inputs are reduced in lexicographic order, which makes the output exactly
/// permutation invariant.
pub fn local_summary(local_coords: &[Vec3]) -> LocalSummary {
    assert!(!local_coords.is_empty(), "local_summary needs at least one coordinate");
    let mut sorted = local_coords.to_vec();
    sorted.sort_by(|a, b| lexicographic(a.as_slice(), b.as_slice()));
    let k = sorted.len() as f64;
    let norms: Vec<f64> = sorted.iter().map(|c| c.norm()).collect();
    let mut dir = Vec3::zeros();
    for (c, n) in sorted.iter().zip(&norms) {
        if *n > 0.0 {
            dir += c / *n;
        }
    }
    let mean = norms.iter().sum::<f64>() / k;
    let variance = norms.iter().map(|n| (n - mean) * (n - mean)).sum::<f64>() / k;
    LocalSummary {
        mean_direction: dir / k,
        min: norms.iter().copied().fold(f64::INFINITY, f64::min),
        max: norms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_neighbor_passes_through() {
        let f = [1.5, -2.0, 0.25];
        let a = aggregate_features(&[&f], &[0.3]);
        assert_eq!(a.feature, f.to_vec());
        assert_eq!(a.weights, vec![1.0]);
    }

    #[test]
    fn equal_distances_give_mean() {
        let f = [[1.0, 0.0], [0.0, 3.0], [2.0, 3.0]];
        let a = aggregate_features(&[&f[0], &f[1], &f[2]], &[0.5; 3]);
        assert_relative_eq!(a.feature[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(a.feature[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_distance_example() {
        let a = aggregate_features(&[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 3.0]);
        let p1 = 1.0 / (1.0 + 1e-8);
        let p2 = 1.0 / (3.0 + 1e-8);
        assert_relative_eq!(a.feature[0], p1 / (p1 + p2), epsilon = 1e-15);
        assert_relative_eq!(a.feature[1], p2 / (p1 + p2), epsilon = 1e-15);
        assert_relative_eq!(a.feature[0], 0.75, epsilon = 1e-8);
    }

    #[test]
    fn zero_distance_is_finite() {
        let w = inverse_distance_weights(&[0.0, 0.1]);
        assert!(w.iter().all(|v| v.is_finite()));
        assert!(w[0] > 0.999_999);
    }

    #[test]
    fn summary_examples() {
        let s = local_summary(&[Vec3::new(0.0, 0.0, 2.0)]);
        assert_eq!(s.to_vec(true), vec![0.0, 0.0, 1.0, 2.0, 2.0, 2.0, 0.0]);
        let s = local_summary(&[Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)]);
        assert_eq!(s.to_vec(true), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(s.to_vec(false), vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_coordinate_contributes_no_direction() {
        let s = local_summary(&[Vec3::zeros(), Vec3::new(0.0, 3.0, 0.0)]);
        assert_eq!(s.mean_direction, Vec3::new(0.0, 0.5, 0.0));
        assert_eq!(s.min, 0.0);
        assert_eq!(s.variance, 2.25);
    }
}

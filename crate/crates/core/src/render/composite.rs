use crate::field::RadianceSample;

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeResult {
    pub color: [f64; 3],
    /// `T_i α_i` per sample.
    pub weights: Vec<f64>,
    /// `T_{N+1}`; the black background receives this share.
    pub residual: f64,
}

impl CompositeResult {
    pub fn alpha(&self) -> f64 {
        1.0 - self.residual
    }
}

/// Front-to-back alpha compositing with `α_i = 1 − exp(−σ_i δ_i)` and
/// `T_{i+1} = T_i (1 − α_i)`.
pub fn composite(samples: &[RadianceSample], deltas: &[f64]) -> CompositeResult {
    assert_eq!(samples.len(), deltas.len());
    let mut transmittance = 1.0;
    let mut color = [0.0; 3];
    let mut weights = Vec::with_capacity(samples.len());
    for (s, d) in samples.iter().zip(deltas) {
        let alpha = -(-s.density * d).exp_m1();
        let w = transmittance * alpha;
        for (c, v) in color.iter_mut().zip(&s.color) {
            *c += w * v;
        }
        weights.push(w);
        transmittance *= 1.0 - alpha;
    }
    CompositeResult {
        color,
        weights,
        residual: transmittance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(color: [f64; 3], density: f64) -> RadianceSample {
        RadianceSample { color, density }
    }

    #[test]
    fn empty_space_is_black() {
        let r = composite(&[s([1.0; 3], 0.0); 5], &[0.1; 5]);
        assert_eq!(r.color, [0.0; 3]);
        assert_eq!(r.residual, 1.0);
    }

    #[test]
    fn opaque_sample() {
        let c = [0.2, 0.4, 0.9];
        let r = composite(&[s(c, 40.0)], &[1.0]);
        for (a, b) in r.color.iter().zip(&c) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn half_then_opaque() {
        let c1 = [1.0, 0.0, 0.2];
        let c2 = [0.0, 1.0, 0.6];
        let r = composite(&[s(c1, std::f64::consts::LN_2), s(c2, 40.0)], &[1.0, 1.0]);
        for ch in 0..3 {
            let expected = 0.5 * c1[ch] + 0.5 * c2[ch];
            // Residual transmittance 0.5·e⁻⁴⁰ is below 1e-17.
            assert!((r.color[ch] - expected).abs() < 1e-15);
        }
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_density_tail_changes_nothing() {
        let a = [s([0.3, 0.1, 0.9], 2.0), s([0.5, 0.5, 0.5], 1.0)];
        let r1 = composite(&a, &[0.3, 0.2]);
        let mut b = a.to_vec();
        b.push(s([1.0; 3], 0.0));
        let r2 = composite(&b, &[0.3, 0.2, 0.5]);
        assert_eq!(r1.color, r2.color);
        assert_eq!(r1.residual, r2.residual);
    }
}

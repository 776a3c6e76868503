use std::f64::consts::PI;

pub const DEFAULT_OCTAVES: usize = 10;

pub fn encoded_dim(dim: usize, octaves: usize) -> usize {
    dim * (1 + 2 * octaves)
}

/// Sinusoidal encoding. Per component: `(x, sin(2⁰πx), cos(2⁰πx), …,
/// sin(2^{L−1}πx), cos(2^{L−1}πx))`.
pub fn positional_encoding(x: &[f64], octaves: usize) -> Vec<f64> {
    let mut out = vec![0.0; encoded_dim(x.len(), octaves)];
    encode_into(x, octaves, &mut out);
    out
}

pub fn encode_into(x: &[f64], octaves: usize, out: &mut [f64]) {
    let stride = 1 + 2 * octaves;
    debug_assert_eq!(out.len(), x.len() * stride);
    for (v, chunk) in x.iter().zip(out.chunks_mut(stride)) {
        chunk[0] = *v;
        let mut freq = PI;
        for o in 0..octaves {
            let (s, c) = (freq * v).sin_cos();
            chunk[1 + 2 * o] = s;
            chunk[2 + 2 * o] = c;
            freq *= 2.0;
        }
    }
}

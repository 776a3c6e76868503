//! MLP decoder `(f̄, γ(x^l)) ↦ (c, σ)`: ReLU hidden layers, sigmoid color and
//! softplus density. Evaluated in row batches with cached activations so the
//! reconstruction backward pass can reuse them.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MLP_MAGIC: &[u8; 4] = b"VRML";
pub const MLP_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];
/// Three color logits followed by one density logit.
pub const OUTPUT_DIM: usize = 4;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` as `max(x, 0) + ln(1 + e^{−|x|})`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadianceSample {
    pub color: [f64; 3],
    /// Per meter.
    pub density: f64,
}

impl RadianceSample {
    pub const EMPTY: RadianceSample = RadianceSample {
        color: [0.0; 3],
        density: 0.0,
    };

    pub fn from_logits(logits: &[f64]) -> Self {
        Self {
            color: [sigmoid(logits[0]), sigmoid(logits[1]), sigmoid(logits[2])],
            density: softplus(logits[3]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderMlp {
    pub layers: Vec<DenseLayer>,
}

/// Cached forward values for one batch.
#[derive(Clone, Debug)]
pub struct MlpActivations {
    /// Input to each layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl DecoderMlp {
    /// Uniform `±1/√fan_in` initialization drawn in `f32` (file-exact).
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(OUTPUT_DIM);
        let layers = dims
            .windows(2)
            .map(|d| {
                let bound = 1.0 / (d[0] as f32).sqrt();
                let weight =
                    Array2::from_shape_fn((d[1], d[0]), |_| rng.gen_range(-bound..bound) as f64);
                let bias = Array1::from_shape_fn(d[1], |_| rng.gen_range(-bound..bound) as f64);
                DenseLayer { weight, bias }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(OUTPUT_DIM);
        Self {
            layers: dims.windows(2).map(|d| DenseLayer::zeros(d[0], d[1])).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.outputs()));
        d
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Decoder("decoder has no layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Decoder(format!(
                    "layer output {} does not feed next layer input {}",
                    w[0].outputs(),
                    w[1].inputs()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::Decoder(format!("layer {i} bias length mismatch")));
            }
            if !l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::Decoder(format!("layer {i} has non-finite parameters")));
            }
        }
        if self.layers.last().unwrap().outputs() != OUTPUT_DIM {
            return Err(Error::Decoder(format!(
                "decoder must emit {OUTPUT_DIM} logits"
            )));
        }
        Ok(())
    }

    /// Forward pass over `n × input_dim` rows, keeping activations.
    pub fn forward_batch(&self, batch: ArrayView2<f64>) -> Result<MlpActivations> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Decoder(format!(
                "input has {} columns, decoder expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let mut inputs = vec![batch.to_owned()];
        let last = self.layers.len() - 1;
        let mut logits = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = inputs[i].dot(&layer.weight.t());
            z += &layer.bias;
            if i == last {
                logits = Some(z);
            } else {
                z.mapv_inplace(|v| v.max(0.0));
                inputs.push(z);
            }
        }
        Ok(MlpActivations {
            inputs,
            logits: logits.unwrap(),
        })
    }

    pub fn decode_batch(&self, batch: ArrayView2<f64>) -> Result<Vec<RadianceSample>> {
        let acts = self.forward_batch(batch)?;
        Ok(acts
            .logits
            .axis_iter(Axis(0))
            .map(|row| RadianceSample::from_logits(row.as_slice().unwrap()))
            .collect())
    }

    /// Backpropagates `∂L/∂logits`, returning per-layer parameter gradients
    /// and `∂L/∂input`.
    pub fn backward_batch(
        &self,
        acts: &MlpActivations,
        d_logits: ArrayView2<f64>,
    ) -> (Vec<DenseLayer>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_logits.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts.inputs[i];
            let weight = delta.t().dot(input);
            let bias = delta.sum_axis(Axis(0));
            grads.push(DenseLayer { weight, bias });
            let mut d_in = delta.dot(&layer.weight);
            if i > 0 {
                // ReLU derivative from the layer's (post-activation) input.
                ndarray::Zip::from(&mut d_in)
                    .and(input)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    });
            }
            delta = d_in;
        }
        grads.reverse();
        (grads, delta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// `VRML`, version, layer count, `count + 1` dims, then per layer the
    /// `out × in` weights followed by biases, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MLP_MAGIC);
        buf.extend_from_slice(&MLP_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for d in self.dims() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for l in &self.layers {
            for v in l.weight.iter().chain(l.bias.iter()) {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let word = |pos: &mut usize| -> Result<u32> {
            let b = bytes.get(*pos..*pos + 4).ok_or(Error::Truncated {
                expected: *pos + 4,
                found: bytes.len(),
            })?;
            *pos += 4;
            Ok(u32::from_le_bytes(b.try_into().unwrap()))
        };
        if bytes.get(..4) != Some(MLP_MAGIC.as_slice()) {
            return Err(Error::Format("bad decoder magic".into()));
        }
        pos += 4;
        let version = word(&mut pos)?;
        if version != MLP_VERSION {
            return Err(Error::Format(format!("unsupported decoder version {version}")));
        }
        let n_layers = word(&mut pos)? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Format(format!("implausible layer count {n_layers}")));
        }
        let dims = (0..=n_layers)
            .map(|_| word(&mut pos).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if dims.contains(&0) || dims.iter().any(|&d| d > 1 << 16) {
            return Err(Error::Format(format!("implausible layer dims {dims:?}")));
        }
        let total: usize = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
        let expected = pos + total * 4;
        if bytes.len() != expected {
            return Err(if bytes.len() < expected {
                Error::Truncated {
                    expected,
                    found: bytes.len(),
                }
            } else {
                Error::Format("trailing bytes after decoder weights".into())
            });
        }
        let mut values = bytes[pos..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
        let layers = dims
            .windows(2)
            .map(|d| {
                let weight = Array2::from_shape_vec((d[1], d[0]), values.by_ref().take(d[0] * d[1]).collect())
                    .expect("sized above");
                let bias = Array1::from_iter(values.by_ref().take(d[1]));
                DenseLayer { weight, bias }
            })
            .collect();
        let mlp = Self { layers };
        mlp.validate()?;
        Ok(mlp)
    }
}

/// Decodes one point from its blended feature and encoded local summary.
pub fn decode(feature: &[f64], encoding: &[f64], mlp: &DecoderMlp) -> Result<RadianceSample> {
    let dim = feature.len() + encoding.len();
    if dim != mlp.input_dim() {
        return Err(Error::Decoder(format!(
            "input of length {dim} does not match decoder input {}",
            mlp.input_dim()
        )));
    }
    let row: Vec<f64> = feature.iter().chain(encoding).copied().collect();
    let batch = ArrayView2::from_shape((1, dim), &row).unwrap();
    Ok(mlp.decode_batch(batch)?[0])
}

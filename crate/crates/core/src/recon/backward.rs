//! Reverse-mode gradients of the photometric loss with respect to the
//! decoder parameters and the feature-map texels. Geometry (frames, KNN
//! neighbors, blend weights, encodings) is a constant of the forward pass.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::decoder::{sigmoid, DecoderMlp, DenseLayer, RadianceSample};
use crate::field::scene::{stack_rows, FieldScene, PointInput};
use crate::field::RadianceField;
use crate::render::{composite, ray_box, ray_seed, sample_points, Ray};

/// Mean squared error over rays and RGB channels.
pub fn photometric_loss(rendered: &[[f64; 3]], target: &[[f64; 3]]) -> f64 {
    assert_eq!(rendered.len(), target.len());
    if rendered.is_empty() {
        return 0.0;
    }
    let sum: f64 = rendered
        .iter()
        .zip(target)
        .flat_map(|(r, t)| r.iter().zip(t).map(|(a, b)| (a - b) * (a - b)))
        .sum();
    sum / (3 * rendered.len()) as f64
}

/// Gradient buffers mirroring the decoder layers and the feature-map data.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub mlp: Vec<DenseLayer>,
    /// Same layout as `FeatureMap::data`.
    pub texels: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(mlp: &DecoderMlp, num_texel_values: usize) -> Self {
        Self {
            mlp: mlp
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs(), l.outputs()))
                .collect(),
            texels: vec![0.0; num_texel_values],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.texels.iter().all(|v| v.is_finite())
            && self
                .mlp
                .iter()
                .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn add_mlp(&mut self, other: &[DenseLayer]) {
        for (a, b) in self.mlp.iter_mut().zip(other) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

/// One supervised ray. `index` selects the stratified-sampling stream and is
/// reported in numeric errors.
#[derive(Clone, Copy, Debug)]
pub struct TrainRay<'a> {
    pub scene: &'a FieldScene,
    pub ray: Ray,
    pub target: [f64; 3],
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleConfig {
    pub samples_per_ray: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            samples_per_ray: crate::render::DEFAULT_SAMPLES,
            stratified: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BackwardOutput {
    pub loss: f64,
    pub colors: Vec<[f64; 3]>,
    pub grads: GradientSet,
}

/// Per-chunk partial sums: squared error, decoder grads and per-vertex
/// feature grads (row-major `M × L_F`).
struct Partial {
    sq_error: f64,
    colors: Vec<[f64; 3]>,
    mlp: Option<Vec<DenseLayer>>,
    vertex: Vec<f64>,
}

const CHUNK_RAYS: usize = 32;

fn ray_chunk(rays: &[TrainRay], cfg: &SampleConfig, norm: f64, mlp: &DecoderMlp, num_vertices: usize, channels: usize) -> Result<Partial> {
    let n = cfg.samples_per_ray;
    struct RayWork {
        deltas: Vec<f64>,
        /// Decoder row per sample, `None` outside the cutoff.
        slots: Vec<Option<usize>>,
    }
    let mut inputs: Vec<PointInput> = Vec::new();
    let mut work: Vec<Option<RayWork>> = Vec::with_capacity(rays.len());
    for tr in rays {
        let Some((near, far)) = ray_box(&tr.ray, &tr.scene.bounds()) else {
            work.push(None);
            continue;
        };
        let s = sample_points(near, far, n, cfg.stratified, ray_seed(cfg.seed, tr.index as u64));
        let mut slots = Vec::with_capacity(n);
        for p in s.points(&tr.ray) {
            match tr.scene.prepare(&p)? {
                Some(input) => {
                    slots.push(Some(inputs.len()));
                    inputs.push(input);
                }
                None => slots.push(None),
            }
        }
        work.push(Some(RayWork { deltas: s.deltas, slots }));
    }

    let acts = if inputs.is_empty() {
        None
    } else {
        Some(mlp.forward_batch(stack_rows(&inputs, mlp.input_dim()).view())?)
    };
    let decoded: Vec<RadianceSample> = acts.as_ref().map_or(Vec::new(), |a| {
        a.logits
            .rows()
            .into_iter()
            .map(|r| RadianceSample::from_logits(r.as_slice().unwrap()))
            .collect()
    });
    let mut d_logits = Array2::<f64>::zeros((inputs.len(), 4));
    let mut sq_error = 0.0;
    let mut colors = Vec::with_capacity(rays.len());

    for (tr, w) in rays.iter().zip(&work) {
        let Some(w) = w else {
            colors.push([0.0; 3]);
            sq_error += tr.target.iter().map(|t| t * t).sum::<f64>();
            continue;
        };
        let samples: Vec<RadianceSample> = w
            .slots
            .iter()
            .map(|s| s.map_or(RadianceSample::EMPTY, |i| decoded[i]))
            .collect();
        let comp = composite(&samples, &w.deltas);
        if !comp.color.iter().all(|c| c.is_finite()) {
            return Err(Error::Numeric { ray: tr.index });
        }
        colors.push(comp.color);
        let mut g = [0.0; 3];
        for c in 0..3 {
            let r = comp.color[c] - tr.target[c];
            sq_error += r * r;
            g[c] = 2.0 * r / norm;
        }
        // Suffix sums S_i = Σ_{j>i} w_j (g·c_j), walked back to front.
        let mut suffix = 0.0;
        let mut transmittance_next = comp.residual;
        for i in (0..samples.len()).rev() {
            let s = &samples[i];
            let gc = g[0] * s.color[0] + g[1] * s.color[1] + g[2] * s.color[2];
            let wi = comp.weights[i];
            if let Some(row) = w.slots[i] {
                let logits = acts.as_ref().unwrap().logits.row(row);
                for c in 0..3 {
                    d_logits[[row, c]] = wi * g[c] * s.color[c] * (1.0 - s.color[c]);
                }
                let d_sigma = w.deltas[i] * (transmittance_next * gc - suffix);
                d_logits[[row, 3]] = d_sigma * sigmoid(logits[3]);
            }
            suffix += wi * gc;
            // T_i = T_{i+1} / (1 − α_i) is unstable; rebuild from the weights instead.
            transmittance_next += wi;
        }
    }

    let mut vertex = vec![0.0; num_vertices * channels];
    let mlp_grads = match &acts {
        None => None,
        Some(a) => {
            let (grads, d_input) = mlp.backward_batch(a, d_logits.view());
            for (input, d_row) in inputs.iter().zip(d_input.rows()) {
                let d_feat = &d_row.as_slice().unwrap()[..channels];
                for &(v, weight) in &input.neighbors {
                    for (o, d) in vertex[v * channels..(v + 1) * channels].iter_mut().zip(d_feat) {
                        *o += weight * d;
                    }
                }
            }
            Some(grads)
        }
    };
    Ok(Partial {
        sq_error,
        colors,
        mlp: mlp_grads,
        vertex,
    })
}

/// Loss and exact gradients over `rays`, which must share one decoder,
/// feature set and tap table (scenes of the same model under different poses).
pub fn loss_and_gradients(rays: &[TrainRay], cfg: &SampleConfig, num_texel_values: usize) -> Result<BackwardOutput> {
    let Some(first) = rays.first() else {
        return Err(Error::Parameter("backward needs at least one ray".into()));
    };
    let base = first.scene;
    let mlp = base.mlp.as_ref();
    let channels = base.vertex_features.channels;
    let m = base.template.num_vertices();
    if rays.iter().any(|r| {
        !std::sync::Arc::ptr_eq(&r.scene.mlp, &base.mlp)
            || !std::sync::Arc::ptr_eq(&r.scene.vertex_features, &base.vertex_features)
            || !std::sync::Arc::ptr_eq(&r.scene.taps, &base.taps)
    }) {
        return Err(Error::Parameter("all rays must share the decoder and feature set".into()));
    }
    let norm = (3 * rays.len()) as f64;
    let partials: Vec<Partial> = rays
        .par_chunks(CHUNK_RAYS)
        .map(|chunk| ray_chunk(chunk, cfg, norm, mlp, m, channels))
        .collect::<Result<_>>()?;

    // Deterministic merge in chunk order.
    let mut grads = GradientSet::zeros(mlp, num_texel_values);
    let mut vertex = vec![0.0; m * channels];
    let mut sq_error = 0.0;
    let mut colors = Vec::with_capacity(rays.len());
    for p in &partials {
        sq_error += p.sq_error;
        colors.extend_from_slice(&p.colors);
        if let Some(g) = &p.mlp {
            grads.add_mlp(g);
        }
        for (a, b) in vertex.iter_mut().zip(&p.vertex) {
            *a += b;
        }
    }
    for (v, taps) in base.taps.iter().enumerate() {
        let dv = &vertex[v * channels..(v + 1) * channels];
        for &(t, w) in taps {
            if w == 0.0 {
                continue;
            }
            for (o, d) in grads.texels[t * channels..(t + 1) * channels].iter_mut().zip(dv) {
                *o += w * d;
            }
        }
    }
    let loss = sq_error / norm;
    if !loss.is_finite() {
        return Err(Error::Numeric { ray: first.index });
    }
    Ok(BackwardOutput { loss, colors, grads })
}

/// Convenience wrapper for one scene with row-major `rays` and `targets`.
pub fn backward(scene: &FieldScene, rays: &[Ray], targets: &[[f64; 3]], cfg: &SampleConfig, num_texel_values: usize) -> Result<BackwardOutput> {
    if rays.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rays but {} targets",
            rays.len(),
            targets.len()
        )));
    }
    let items: Vec<TrainRay> = rays
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(index, (ray, target))| TrainRay {
            scene,
            ray: *ray,
            target: *target,
            index,
        })
        .collect();
    loss_and_gradients(&items, cfg, num_texel_values)
}

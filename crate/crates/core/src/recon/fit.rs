use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamParams, AdamState};
use super::backward::{loss_and_gradients, SampleConfig, TrainRay};
use crate::body::{BodyTemplate, Pose, ShapeCoeffs};
use crate::error::{Error, Result};
use crate::feature_map::features_from_taps;
use crate::field::{FieldConfig, FieldModel, FieldScene, RadianceField};
use crate::render::{ray_box, ray_seed, Camera, Image};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub rays_per_step: usize,
    pub samples_per_ray: usize,
    pub lr_features: f64,
    pub lr_mlp: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub k: usize,
    pub use_direction: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            rays_per_step: 1024,
            samples_per_ray: 64,
            lr_features: 1e-2,
            lr_mlp: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            k: 3,
            use_direction: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rays_per_step == 0 || self.samples_per_ray == 0 {
            return bad("rays_per_step and samples_per_ray must be positive".into());
        }
        if !(self.lr_features > 0.0 && self.lr_mlp > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad(format!("Adam betas ({}, {}) must lie in (0, 1)", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) {
            return bad("Adam ε must be positive".into());
        }
        Ok(())
    }

    /// Field configuration matching `k` and the direction toggle.
    pub fn field_config(&self, template: &BodyTemplate) -> FieldConfig {
        FieldConfig {
            k: self.k,
            use_direction: self.use_direction,
            ..FieldConfig::for_template(template)
        }
    }

    fn adam(&self, lr: f64) -> AdamParams {
        AdamParams {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainView {
    pub camera: Camera,
    /// Float RGB target, same size as the camera image.
    pub image: Image,
    pub pose: Pose,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: FieldModel,
    /// Batch loss per step.
    pub history: Vec<f64>,
    /// Running minimum of an exponential moving average of `history`.
    pub trend: Vec<f64>,
}

/// Non-increasing smoothed loss curve.
pub fn smoothed_trend(history: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(history.len());
    let mut ema = None;
    let mut best = f64::INFINITY;
    for &l in history {
        let e = match ema {
            None => l,
            Some(prev) => alpha * l + (1.0 - alpha) * prev,
        };
        ema = Some(e);
        best = best.min(e);
        out.push(best);
    }
    out
}

/// Scenes of `model` under each view's pose, sharing tap tables.
pub fn view_scenes(template: Arc<BodyTemplate>, model: &FieldModel, shape: &ShapeCoeffs, views: &[TrainView]) -> Result<Vec<FieldScene>> {
    let Some(first) = views.first() else {
        return Err(Error::InsufficientData("fit needs at least one view".into()));
    };
    let base = FieldScene::new(template, model, first.pose.clone(), shape.clone())?;
    let mut scenes = vec![base.clone()];
    for v in &views[1..] {
        scenes.push(base.reposed(v.pose.clone())?);
    }
    Ok(scenes)
}

pub fn fit(
    template: Arc<BodyTemplate>,
    shape: &ShapeCoeffs,
    model: FieldModel,
    views: &[TrainView],
    config: &TrainConfig,
) -> Result<FitResult> {
    fit_with_progress(template, shape, model, views, config, |_, _| {})
}

/// Adam on the feature map and decoder, supervising random rays that hit
/// the posed body's bounds. `progress` sees `(step, loss)`.
pub fn fit_with_progress(
    template: Arc<BodyTemplate>,
    shape: &ShapeCoeffs,
    mut model: FieldModel,
    views: &[TrainView],
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<FitResult> {
    config.validate()?;
    if model.config.k != config.k || model.config.use_direction != config.use_direction {
        return Err(Error::Config(format!(
            "model uses k={} direction={}, training config asks for k={} direction={}",
            model.config.k, model.config.use_direction, config.k, config.use_direction
        )));
    }
    for (i, v) in views.iter().enumerate() {
        v.camera.validate()?;
        if (v.image.width, v.image.height, v.image.channels) != (v.camera.width, v.camera.height, 3) {
            return Err(Error::DimensionMismatch(format!(
                "view {i}: image is {}×{}×{}, camera expects {}×{}×3",
                v.image.width, v.image.height, v.image.channels, v.camera.width, v.camera.height
            )));
        }
    }
    let scenes = view_scenes(template, &model, shape, views)?;
    if config.iterations == 0 {
        return Ok(FitResult {
            model,
            history: Vec::new(),
            trend: Vec::new(),
        });
    }

    // Supervise only rays that reach the body's bounds; the rest render black.
    let mut candidates = Vec::new();
    for (vi, (view, scene)) in views.iter().zip(&scenes).enumerate() {
        let bounds = scene.bounds();
        for (pi, ray) in view.camera.generate_rays().into_iter().enumerate() {
            if ray_box(&ray, &bounds).is_some() {
                candidates.push((vi, pi, ray));
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::InsufficientData("no training ray reaches the body".into()));
    }

    // Texels outside every vertex's taps never receive gradient, so Adam leaves
    // them untouched; their moments need not be stored.
    let taps = scenes[0].taps.clone();
    let channels = model.feature_map.channels;
    let touched: Vec<usize> = taps
        .iter()
        .flat_map(|t| t.iter().map(|(i, _)| *i))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut tex_state = AdamState::new(touched.len() * channels);
    let mut mlp_state: Vec<(AdamState, AdamState)> = model
        .mlp
        .layers
        .iter()
        .map(|l| (AdamState::new(l.weight.len()), AdamState::new(l.bias.len())))
        .collect();
    let tex_hp = config.adam(config.lr_features);
    let mlp_hp = config.adam(config.lr_mlp);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.iterations);
    let sample_cfg = |step: usize| SampleConfig {
        samples_per_ray: config.samples_per_ray,
        stratified: true,
        seed: ray_seed(config.seed, step as u64),
    };

    for step in 0..config.iterations {
        let features = Arc::new(features_from_taps(&model.feature_map, &taps));
        let mlp = Arc::new(model.mlp.clone());
        let step_scenes: Vec<FieldScene> = scenes
            .iter()
            .map(|s| FieldScene {
                vertex_features: features.clone(),
                mlp: mlp.clone(),
                ..s.clone()
            })
            .collect();
        let batch: Vec<TrainRay> = (0..config.rays_per_step)
            .map(|k| {
                let (vi, pi, ray) = candidates[rng.gen_range(0..candidates.len())];
                let px = &views[vi].image.data[3 * pi..3 * pi + 3];
                TrainRay {
                    scene: &step_scenes[vi],
                    ray,
                    target: [px[0], px[1], px[2]],
                    index: k,
                }
            })
            .collect();
        let out = loss_and_gradients(&batch, &sample_cfg(step), model.feature_map.data.len()).map_err(|e| match e {
            Error::Numeric { .. } => Error::Divergence { step },
            other => other,
        })?;
        if !out.loss.is_finite() || !out.grads.is_finite() {
            return Err(Error::Divergence { step });
        }

        let mut params: Vec<f64> = Vec::with_capacity(touched.len() * channels);
        let mut grads: Vec<f64> = Vec::with_capacity(touched.len() * channels);
        for &t in &touched {
            params.extend_from_slice(&model.feature_map.data[t * channels..(t + 1) * channels]);
            grads.extend_from_slice(&out.grads.texels[t * channels..(t + 1) * channels]);
        }
        adam_step(&mut params, &grads, &mut tex_state, &tex_hp);
        for (slot, &t) in touched.iter().enumerate() {
            model.feature_map.data[t * channels..(t + 1) * channels]
                .copy_from_slice(&params[slot * channels..(slot + 1) * channels]);
        }
        for ((layer, g), (sw, sb)) in model.mlp.layers.iter_mut().zip(&out.grads.mlp).zip(&mut mlp_state) {
            adam_step(layer.weight.as_slice_mut().unwrap(), g.weight.as_slice().unwrap(), sw, &mlp_hp);
            adam_step(layer.bias.as_slice_mut().unwrap(), g.bias.as_slice().unwrap(), sb, &mlp_hp);
        }
        progress(step, out.loss);
        history.push(out.loss);
    }
    let trend = smoothed_trend(&history, 0.05);
    Ok(FitResult {
        model,
        history,
        trend,
    })
}

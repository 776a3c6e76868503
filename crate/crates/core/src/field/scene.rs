//! The queryable radiance field: a posed, shaped body carrying per-vertex
//! features, plus the shared decoder.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_features, local_summary, summary_dim};
use super::decoder::{DecoderMlp, RadianceSample, DEFAULT_HIDDEN};
use super::encoding::{encode_into, encoded_dim, DEFAULT_OCTAVES};
use super::knn::{GridIndex, MAX_K};
use crate::body::{
    apply_shape, forward_kinematics, skin_vertices, vertex_normals, BodyTemplate, Pose,
    ShapeCoeffs, Skeleton,
};
use crate::error::{Error, Result};
use crate::feature_map::{features_from_taps, vertex_taps, FeatureMap, Taps, VertexFeatures};
use crate::frames::{pose_frames, rest_frames, to_local, LocalFrameSet, DEFAULT_UP};
use crate::math::{Aabb, RigidTransform, Vec3};

/// Fraction of the rest bounding-box diagonal used as the default cutoff.
pub const R_MAX_SCALE: f64 = 0.15;
pub const DEFAULT_K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub k: usize,
    /// Points whose nearest vertex lies farther than this are empty (meters).
    pub r_max: f64,
    pub octaves: usize,
    pub use_direction: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            r_max: 0.3,
            octaves: DEFAULT_OCTAVES,
            use_direction: true,
        }
    }
}

impl FieldConfig {
    /// Defaults with `r_max` scaled to the template's rest bounding box.
    pub fn for_template(template: &BodyTemplate) -> Self {
        let diag = Aabb::from_points(&template.rest_vertices).map_or(2.0, |b| b.diagonal());
        Self {
            r_max: R_MAX_SCALE * diag,
            ..Self::default()
        }
    }

    pub fn summary_dim(&self) -> usize {
        summary_dim(self.use_direction)
    }

    pub fn encoding_dim(&self) -> usize {
        encoded_dim(self.summary_dim(), self.octaves)
    }

    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        if self.k == 0 || self.k > MAX_K.min(num_vertices) {
            return Err(Error::Parameter(format!(
                "k = {} must lie in 1..={}",
                self.k,
                MAX_K.min(num_vertices)
            )));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::Parameter(format!("r_max = {} must be positive", self.r_max)));
        }
        if self.octaves > 30 {
            return Err(Error::Parameter(format!("{} octaves is too many", self.octaves)));
        }
        Ok(())
    }
}

/// Learnable state: the feature map and the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub feature_map: FeatureMap,
    pub mlp: DecoderMlp,
    pub config: FieldConfig,
}

impl FieldModel {
    /// Seeded initialization with a `height × width × channels` map.
    pub fn init(config: FieldConfig, map_dims: (usize, usize, usize), seed: u64) -> Self {
        let (h, w, l) = map_dims;
        let feature_map = FeatureMap::random(h, w, l, seed);
        let mlp = DecoderMlp::new(l + config.encoding_dim(), &DEFAULT_HIDDEN, seed.wrapping_add(1));
        Self {
            feature_map,
            mlp,
            config,
        }
    }

    pub fn validate(&self, template: &BodyTemplate) -> Result<()> {
        self.config.validate(template.num_vertices())?;
        self.mlp.validate()?;
        let expected = self.feature_map.channels + self.config.encoding_dim();
        if self.mlp.input_dim() != expected {
            return Err(Error::Decoder(format!(
                "decoder input {} does not match {} feature channels + {} encoding dims",
                self.mlp.input_dim(),
                self.feature_map.channels,
                self.config.encoding_dim()
            )));
        }
        Ok(())
    }
}

/// Everything that depends on pose and shape but not on learnable state.
#[derive(Clone, Debug)]
pub struct PosedGeometry {
    pub part_transforms: Vec<RigidTransform>,
    pub vertices: Vec<Vec3>,
    pub frames: LocalFrameSet,
    pub bounds: Aabb,
    index: GridIndex,
}

impl PosedGeometry {
    pub fn build(template: &BodyTemplate, pose: &Pose, shape: &ShapeCoeffs, r_max: f64) -> Result<Self> {
        let shaped = apply_shape(template, shape)?;
        let skeleton = Skeleton {
            joints: shaped.joints.clone(),
            parent: template.parent.clone(),
        };
        let part_transforms = forward_kinematics(&skeleton, pose)?;
        let vertices = skin_vertices(&shaped.vertices, &template.skin_weights, &part_transforms)?;
        let normals = vertex_normals(&shaped.vertices, &template.faces)?;
        let rest = rest_frames(&shaped.vertices, &normals, &DEFAULT_UP)?;
        let posed = pose_frames(&rest, &template.skin_weights, &part_transforms)?;
        let bounds = Aabb::from_points(&vertices)
            .ok_or_else(|| Error::InsufficientData("template has no vertices".into()))?;
        let index = GridIndex::build(&vertices, r_max)?;
        Ok(Self {
            part_transforms,
            vertices,
            frames: LocalFrameSet {
                rest_frames: rest,
                posed_frames: posed,
            },
            bounds,
            index,
        })
    }

    pub fn index(&self) -> &GridIndex {
        &self.index
    }
}

/// Decoder input for one sample point and the blend weights that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct PointInput {
    /// `(vertex, weight)` for the K neighbors, ascending distance.
    pub neighbors: Vec<(usize, f64)>,
    /// `[f̄ | γ(x^l)]`.
    pub row: Vec<f64>,
}

/// Anything the volume renderer can march through.
pub trait RadianceField: Sync {
    /// Region outside of which the field is empty.
    fn bounds(&self) -> Aabb;
    fn query_batch(&self, points: &[Vec3]) -> Result<Vec<RadianceSample>>;
}

#[derive(Clone, Debug)]
pub struct FieldScene {
    pub template: Arc<BodyTemplate>,
    pub pose: Pose,
    pub shape: ShapeCoeffs,
    pub geometry: Arc<PosedGeometry>,
    pub mlp: Arc<DecoderMlp>,
    pub config: FieldConfig,
    pub taps: Arc<Vec<Taps>>,
    pub vertex_features: Arc<VertexFeatures>,
}

impl FieldScene {
    pub fn new(template: Arc<BodyTemplate>, model: &FieldModel, pose: Pose, shape: ShapeCoeffs) -> Result<Self> {
        model.validate(&template)?;
        let geometry = PosedGeometry::build(&template, &pose, &shape, model.config.r_max)?;
        let taps = vertex_taps(&model.feature_map, &template);
        let vertex_features = features_from_taps(&model.feature_map, &taps);
        Ok(Self {
            template,
            pose,
            shape,
            geometry: Arc::new(geometry),
            mlp: Arc::new(model.mlp.clone()),
            config: model.config,
            taps: Arc::new(taps),
            vertex_features: Arc::new(vertex_features),
        })
    }

    /// Same features and decoder under a new pose.
    pub fn reposed(&self, pose: Pose) -> Result<Self> {
        let geometry = PosedGeometry::build(&self.template, &pose, &self.shape, self.config.r_max)?;
        Ok(Self {
            pose,
            geometry: Arc::new(geometry),
            ..self.clone()
        })
    }

    pub fn reshaped(&self, shape: ShapeCoeffs) -> Result<Self> {
        let geometry = PosedGeometry::build(&self.template, &self.pose, &shape, self.config.r_max)?;
        Ok(Self {
            shape,
            geometry: Arc::new(geometry),
            ..self.clone()
        })
    }

    pub fn with_vertex_features(&self, features: VertexFeatures) -> Result<Self> {
        if features.num_vertices() != self.template.num_vertices()
            || features.channels != self.vertex_features.channels
        {
            return Err(Error::DimensionMismatch(format!(
                "vertex features are {}×{}, scene expects {}×{}",
                features.num_vertices(),
                features.channels,
                self.template.num_vertices(),
                self.vertex_features.channels
            )));
        }
        Ok(Self {
            vertex_features: Arc::new(features),
            ..self.clone()
        })
    }

    pub fn with_mlp(&self, mlp: DecoderMlp) -> Self {
        Self {
            mlp: Arc::new(mlp),
            ..self.clone()
        }
    }

    /// Neighbors, blend weights and decoder input, or `None` beyond `r_max`.
    pub fn prepare(&self, point: &Vec3) -> Result<Option<PointInput>> {
        let cfg = &self.config;
        let Some(nn) = self.geometry.index.knn_within(point, cfg.k, cfg.r_max)? else {
            return Ok(None);
        };
        let frames = &self.geometry.frames.posed_frames;
        let local: Vec<Vec3> = nn.indices.iter().map(|&i| to_local(point, &frames[i])).collect();
        let feats: Vec<&[f64]> = nn.indices.iter().map(|&i| self.vertex_features.row(i)).collect();
        let agg = aggregate_features(&feats, &nn.distances);
        let summary = local_summary(&local).to_vec(cfg.use_direction);
        let l = self.vertex_features.channels;
        let mut row = vec![0.0; l + cfg.encoding_dim()];
        row[..l].copy_from_slice(&agg.feature);
        encode_into(&summary, cfg.octaves, &mut row[l..]);
        Ok(Some(PointInput {
            neighbors: nn.indices.into_iter().zip(agg.weights).collect(),
            row,
        }))
    }

    /// Decoder inputs stacked into one matrix for the points inside the cutoff.
    pub fn prepare_batch(&self, points: &[Vec3]) -> Result<(Vec<Option<usize>>, Vec<PointInput>)> {
        let mut slots = Vec::with_capacity(points.len());
        let mut inputs = Vec::new();
        for p in points {
            match self.prepare(p)? {
                Some(input) => {
                    slots.push(Some(inputs.len()));
                    inputs.push(input);
                }
                None => slots.push(None),
            }
        }
        Ok((slots, inputs))
    }
}

pub fn stack_rows(inputs: &[PointInput], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((inputs.len(), dim));
    for (mut row, input) in m.rows_mut().into_iter().zip(inputs) {
        row.as_slice_mut().unwrap().copy_from_slice(&input.row);
    }
    m
}

/// Radiance at a single world point.
pub fn query_field(point: &Vec3, scene: &FieldScene) -> Result<RadianceSample> {
    Ok(scene.query_batch(std::slice::from_ref(point))?[0])
}

impl RadianceField for FieldScene {
    fn bounds(&self) -> Aabb {
        self.geometry.bounds.dilate(self.config.r_max)
    }

    fn query_batch(&self, points: &[Vec3]) -> Result<Vec<RadianceSample>> {
        let (slots, inputs) = self.prepare_batch(points)?;
        if inputs.is_empty() {
            return Ok(vec![RadianceSample::EMPTY; points.len()]);
        }
        let decoded = self
            .mlp
            .decode_batch(stack_rows(&inputs, self.mlp.input_dim()).view())?;
        Ok(slots
            .iter()
            .map(|s| s.map_or(RadianceSample::EMPTY, |i| decoded[i]))
            .collect())
    }
}

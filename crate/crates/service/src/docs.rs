//! Versioned structured-text documents. Field names carry their units
//! (`_rad`, `_m`, `_px`); unknown fields are rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vrf_core::body::{Pose, ShapeCoeffs};
use vrf_core::field::FieldConfig;
use vrf_core::math::{Mat3, RigidTransform, Vec3};
use vrf_core::render::Camera;

use crate::error::{AppError, AppResult};

pub const POSE_VERSION: &str = "veri3d-pose/1";
pub const SHAPE_VERSION: &str = "veri3d-shape/1";
pub const CAMERA_VERSION: &str = "veri3d-camera/1";
pub const SCENE_VERSION: &str = "veri3d-scene/1";
pub const TRAIN_VERSION: &str = "veri3d-train/1";
pub const DATASET_VERSION: &str = "veri3d-dataset/1";

fn check_version(field: &'static str, got: &str, want: &str) -> AppResult<()> {
    if got != want {
        return Err(AppError::Field {
            field,
            source: vrf_core::Error::Format(format!("version {got:?}, expected {want:?}")),
        });
    }
    Ok(())
}

fn finite(field: &'static str, values: impl IntoIterator<Item = f64>) -> AppResult<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(AppError::Field {
            field,
            source: vrf_core::Error::InvariantViolation("non-finite value".into()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDoc {
    pub version: String,
    /// Axis-angle per joint.
    pub joint_rotations_rad: Vec<[f64; 3]>,
    #[serde(default)]
    pub root_translation_m: [f64; 3],
}

impl PoseDoc {
    pub fn from_pose(pose: &Pose) -> Self {
        Self {
            version: POSE_VERSION.into(),
            joint_rotations_rad: pose.joint_rotations.iter().map(|v| [v.x, v.y, v.z]).collect(),
            root_translation_m: pose.root_translation.into(),
        }
    }

    pub fn to_pose(&self) -> AppResult<Pose> {
        check_version("pose", &self.version, POSE_VERSION)?;
        finite("pose", self.joint_rotations_rad.iter().flatten().chain(&self.root_translation_m).copied())?;
        Ok(Pose {
            joint_rotations: self.joint_rotations_rad.iter().map(|v| Vec3::from(*v)).collect(),
            root_translation: Vec3::from(self.root_translation_m),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeDoc {
    pub version: String,
    /// Unitless blendshape coefficients.
    pub beta: Vec<f64>,
}

impl ShapeDoc {
    pub fn from_shape(shape: &ShapeCoeffs) -> Self {
        Self {
            version: SHAPE_VERSION.into(),
            beta: shape.beta.clone(),
        }
    }

    pub fn to_shape(&self) -> AppResult<ShapeCoeffs> {
        check_version("shape", &self.version, SHAPE_VERSION)?;
        finite("shape", self.beta.iter().copied())?;
        Ok(ShapeCoeffs { beta: self.beta.clone() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Extrinsic {
    LookAt {
        eye_m: [f64; 3],
        target_m: [f64; 3],
        up: [f64; 3],
    },
    /// Around `target_m` in the y-up world; azimuth from +z about +y.
    Orbit {
        target_m: [f64; 3],
        azimuth_rad: f64,
        elevation_rad: f64,
        distance_m: f64,
    },
    /// Camera-to-world rotation (row-major) and camera position.
    Rigid {
        rotation: [[f64; 3]; 3],
        translation_m: [f64; 3],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub version: String,
    pub width_px: usize,
    pub height_px: usize,
    pub fx_px: f64,
    /// Defaults to `fx_px`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fy_px: Option<f64>,
    /// Defaults to the image center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy_px: Option<f64>,
    pub extrinsic: Extrinsic,
}

impl CameraDoc {
    pub fn orbit(size: (usize, usize), fx: f64, target: [f64; 3], azimuth: f64, elevation: f64, distance: f64) -> Self {
        Self {
            version: CAMERA_VERSION.into(),
            width_px: size.0,
            height_px: size.1,
            fx_px: fx,
            fy_px: None,
            cx_px: None,
            cy_px: None,
            extrinsic: Extrinsic::Orbit {
                target_m: target,
                azimuth_rad: azimuth,
                elevation_rad: elevation,
                distance_m: distance,
            },
        }
    }

    pub fn from_camera(camera: &Camera) -> Self {
        let r = camera.pose.rotation;
        Self {
            version: CAMERA_VERSION.into(),
            width_px: camera.width,
            height_px: camera.height,
            fx_px: camera.fx,
            fy_px: Some(camera.fy),
            cx_px: Some(camera.cx),
            cy_px: Some(camera.cy),
            extrinsic: Extrinsic::Rigid {
                rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
                translation_m: camera.pose.translation.into(),
            },
        }
    }

    /// Same view at a new resolution; intrinsics scale with the image.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width_px as f64;
        let sy = height as f64 / self.height_px as f64;
        Self {
            width_px: width,
            height_px: height,
            fx_px: self.fx_px * sx,
            fy_px: self.fy_px.map(|f| f * sy),
            cx_px: self.cx_px.map(|c| c * sx),
            cy_px: self.cy_px.map(|c| c * sy),
            ..self.clone()
        }
    }

    pub fn to_camera(&self) -> AppResult<Camera> {
        check_version("camera", &self.version, CAMERA_VERSION)?;
        let at = AppError::at("camera");
        let (w, h) = (self.width_px, self.height_px);
        let fx = self.fx_px;
        let fy = self.fy_px.unwrap_or(fx);
        let mut camera = match &self.extrinsic {
            Extrinsic::LookAt { eye_m, target_m, up } => {
                Camera::look_at(Vec3::from(*eye_m), Vec3::from(*target_m), Vec3::from(*up), fx, fy, w, h).map_err(at)?
            }
            Extrinsic::Orbit {
                target_m,
                azimuth_rad,
                elevation_rad,
                distance_m,
            } => {
                let mut c = Camera::orbit(Vec3::from(*target_m), *azimuth_rad, *elevation_rad, *distance_m, fx, (w, h))
                    .map_err(at)?;
                c.fy = fy;
                c
            }
            Extrinsic::Rigid {
                rotation,
                translation_m,
            } => Camera {
                fx,
                fy,
                cx: w as f64 / 2.0,
                cy: h as f64 / 2.0,
                width: w,
                height: h,
                pose: RigidTransform::new(
                    Mat3::from_row_slice(&rotation.iter().flatten().copied().collect::<Vec<_>>()),
                    Vec3::from(*translation_m),
                ),
            },
        };
        if let Some(cx) = self.cx_px {
            camera.cx = cx;
        }
        if let Some(cy) = self.cy_px {
            camera.cy = cy;
        }
        camera.validate().map_err(AppError::at("camera"))?;
        Ok(camera)
    }
}

/// Sparse coefficient deltas `{component index: delta}` for one part basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditDoc {
    /// Basis file (scene specs) ...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<PathBuf>,
    /// ... or part id resolved against the service's loaded bases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<usize>,
    pub deltas: BTreeMap<usize, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDoc {
    pub k: usize,
    pub r_max_m: f64,
    pub octaves: usize,
    pub use_direction: bool,
}

impl From<FieldConfig> for FieldDoc {
    fn from(c: FieldConfig) -> Self {
        Self {
            k: c.k,
            r_max_m: c.r_max,
            octaves: c.octaves,
            use_direction: c.use_direction,
        }
    }
}

impl From<FieldDoc> for FieldConfig {
    fn from(d: FieldDoc) -> Self {
        Self {
            k: d.k,
            r_max: d.r_max_m,
            octaves: d.octaves,
            use_direction: d.use_direction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderDoc {
    pub samples_per_ray: usize,
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

impl Default for RenderDoc {
    fn default() -> Self {
        Self {
            samples_per_ray: vrf_core::render::DEFAULT_SAMPLES,
            seed: 0,
            stratified: false,
        }
    }
}

/// A renderable scene: artifact paths (relative to the spec file) plus the
/// default pose, shape, camera and edits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub version: String,
    pub template: PathBuf,
    pub feature_map: PathBuf,
    pub decoder: PathBuf,
    pub field: FieldDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraDoc>,
    #[serde(default)]
    pub render: RenderDoc,
    /// Part bases made available to edit-by-part requests.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bases: Vec<PathBuf>,
    /// Applied to every render of this scene.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edits: Vec<EditDoc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Default for MapDims {
    fn default() -> Self {
        use vrf_core::feature_map::{DEFAULT_CHANNELS, DEFAULT_HEIGHT, DEFAULT_WIDTH};
        Self {
            height: DEFAULT_HEIGHT,
            width: DEFAULT_WIDTH,
            channels: DEFAULT_CHANNELS,
        }
    }
}

/// Training configuration file for `fit` and `ablate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDoc {
    pub version: String,
    #[serde(default)]
    pub train: vrf_core::recon::TrainConfig,
    #[serde(default)]
    pub feature_map: MapDims,
    /// Render settings used for evaluation.
    #[serde(default)]
    pub eval: RenderDoc,
}

impl Default for TrainDoc {
    fn default() -> Self {
        Self {
            version: TRAIN_VERSION.into(),
            train: Default::default(),
            feature_map: MapDims::default(),
            eval: RenderDoc::default(),
        }
    }
}

impl TrainDoc {
    pub fn check(&self) -> AppResult<()> {
        check_version("version", &self.version, TRAIN_VERSION)?;
        self.train.validate().map_err(AppError::at("train"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    NovelView,
    NovelPose,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::NovelView => "novel_view",
            Split::NovelPose => "novel_pose",
        }
    }

    pub fn parse(s: &str) -> AppResult<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "novel_view" => Ok(Split::NovelView),
            "novel_pose" => Ok(Split::NovelPose),
            other => Err(AppError::Usage(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRecord {
    pub split: Split,
    pub camera: CameraDoc,
    pub pose: PoseDoc,
    /// 8-bit PNG.
    pub image: PathBuf,
    /// Float dump of the same image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDoc {
    pub version: String,
    pub template: PathBuf,
    pub shape: ShapeDoc,
    pub views: Vec<ViewRecord>,
}

pub fn parse_deltas(spec: &str) -> AppResult<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (idx, val) = item
            .split_once(':')
            .ok_or_else(|| AppError::Usage(format!("delta {item:?} must look like INDEX:VALUE")))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| AppError::Usage(format!("bad component index in {item:?}")))?;
        let val: f64 = val
            .trim()
            .trim_start_matches('+')
            .parse()
            .map_err(|_| AppError::Usage(format!("bad delta value in {item:?}")))?;
        if !val.is_finite() {
            return Err(AppError::Usage(format!("delta in {item:?} is not finite")));
        }
        *out.entry(idx).or_insert(0.0) += val;
    }
    Ok(out)
}

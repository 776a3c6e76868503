//! Scene loading and the single render path shared by the CLI and HTTP.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use vrf_core::body::{load_template, BodyTemplate, Pose, ShapeCoeffs};
use vrf_core::edit::{apply_part_edit, project_part, PartEdit, PartPcaBasis};
use vrf_core::feature_map::FeatureMap;
use vrf_core::field::{DecoderMlp, FieldConfig, FieldModel, FieldScene};
use vrf_core::render::{render_image, RenderConfig, RenderOutput};

use crate::dataset::{DESK_DISTANCE, DESK_TARGET};
use crate::docs::{CameraDoc, EditDoc, PoseDoc, RenderDoc, SceneSpec, ShapeDoc, SCENE_VERSION};
use crate::error::{load_json, AppError, AppResult};

/// Largest image side a request may ask for.
pub const MAX_SIDE_PX: usize = 1024;

/// Front view used when neither the spec nor the request names a camera.
pub fn default_camera() -> CameraDoc {
    CameraDoc::orbit((64, 64), 80.0, DESK_TARGET, 0.0, 0.1, DESK_DISTANCE)
}

/// Overrides on top of a scene's defaults. Also the `POST /render` body.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edits: Vec<EditDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Rescales the camera intrinsics with the image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_ray: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartInfo {
    pub id: usize,
    pub name: String,
    pub vertices: usize,
    pub pca_components: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Meta {
    pub parts: Vec<PartInfo>,
    pub joints: usize,
    pub shape_dim: usize,
    pub vertices: usize,
    pub feature_channels: usize,
    pub k: usize,
    pub r_max_m: f64,
    pub use_direction: bool,
    pub pca_parts: Vec<usize>,
    pub camera: CameraDoc,
    pub render: RenderDoc,
}

/// Immutable snapshot of a loaded scene.
#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub spec: SceneSpec,
    pub dir: PathBuf,
    pub template: Arc<BodyTemplate>,
    pub model: FieldModel,
    /// Default pose and shape, spec edits applied.
    pub scene: FieldScene,
    pub bases: BTreeMap<usize, Arc<PartPcaBasis>>,
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

impl LoadedScene {
    pub fn load(spec_path: &Path) -> AppResult<Self> {
        let spec: SceneSpec = load_json(spec_path)?;
        let dir = spec_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_spec(spec, dir)
    }

    /// Files a scene depends on, for change detection.
    pub fn dependencies(spec: &SceneSpec, dir: &Path) -> Vec<PathBuf> {
        let mut out = vec![
            resolve(dir, &spec.template),
            resolve(dir, &spec.feature_map),
            resolve(dir, &spec.decoder),
        ];
        out.extend(spec.bases.iter().map(|b| resolve(dir, b)));
        out.extend(spec.edits.iter().filter_map(|e| e.basis.as_ref()).map(|b| resolve(dir, b)));
        out
    }

    pub fn from_spec(spec: SceneSpec, dir: PathBuf) -> AppResult<Self> {
        if spec.version != SCENE_VERSION {
            return Err(AppError::Field {
                field: "version",
                source: vrf_core::Error::Format(format!("scene version {:?}, expected {SCENE_VERSION:?}", spec.version)),
            });
        }
        let template = Arc::new(load_template(resolve(&dir, &spec.template)).map_err(AppError::at("template"))?);
        let feature_map = FeatureMap::load(resolve(&dir, &spec.feature_map)).map_err(AppError::at("feature_map"))?;
        let mlp = DecoderMlp::load(resolve(&dir, &spec.decoder)).map_err(AppError::at("decoder"))?;
        let model = FieldModel {
            feature_map,
            mlp,
            config: FieldConfig::from(spec.field),
        };
        model.validate(&template).map_err(AppError::at("field"))?;
        let pose = match &spec.pose {
            Some(p) => p.to_pose()?,
            None => Pose::rest(template.num_parts()),
        };
        let shape = match &spec.shape {
            Some(s) => s.to_shape()?,
            None => ShapeCoeffs::zeros(template.shape_dim()),
        };
        let base = FieldScene::new(template.clone(), &model, pose, shape).map_err(|e| attribute(e, "pose"))?;
        let mut bases = BTreeMap::new();
        for path in LoadedScene::dependencies(&spec, &dir).into_iter().skip(3) {
            let b = PartPcaBasis::load(&path).map_err(AppError::at("basis"))?;
            b.check(&base.vertex_features).map_err(AppError::at("basis"))?;
            bases.entry(b.part).or_insert_with(|| Arc::new(b));
        }
        let mut loaded = Self {
            spec,
            dir,
            template,
            model,
            scene: base,
            bases,
        };
        let edits: Vec<EditDoc> = loaded.spec.edits.clone();
        loaded.scene = loaded.apply_edits(&loaded.scene, &edits)?;
        Ok(loaded)
    }

    /// Adds a basis (e.g. from the `edit` command line) to the snapshot.
    pub fn with_basis(mut self, basis: PartPcaBasis) -> AppResult<Self> {
        basis.check(&self.scene.vertex_features).map_err(AppError::at("basis"))?;
        self.bases.insert(basis.part, Arc::new(basis));
        Ok(self)
    }

    fn basis_for(&self, edit: &EditDoc) -> AppResult<Arc<PartPcaBasis>> {
        if let Some(path) = &edit.basis {
            let b = PartPcaBasis::load(resolve(&self.dir, path)).map_err(AppError::at("edits"))?;
            if let Some(p) = edit.part {
                if p != b.part {
                    return Err(AppError::Field {
                        field: "edits",
                        source: vrf_core::Error::Parameter(format!("basis is for part {}, edit names part {p}", b.part)),
                    });
                }
            }
            return Ok(Arc::new(b));
        }
        let Some(part) = edit.part else {
            return Err(AppError::Field {
                field: "edits",
                source: vrf_core::Error::Parameter("an edit needs a part or a basis".into()),
            });
        };
        self.part_basis(part)
    }

    pub fn part_basis(&self, part: usize) -> AppResult<Arc<PartPcaBasis>> {
        if part >= self.template.num_parts() {
            return Err(AppError::NotFound(format!(
                "part {part} does not exist (template has {} parts)",
                self.template.num_parts()
            )));
        }
        self.bases
            .get(&part)
            .cloned()
            .ok_or_else(|| AppError::NotFound(format!("no PCA basis loaded for part {part}")))
    }

    fn apply_edits(&self, scene: &FieldScene, edits: &[EditDoc]) -> AppResult<FieldScene> {
        if edits.is_empty() {
            return Ok(scene.clone());
        }
        let mut features = (*scene.vertex_features).clone();
        for e in edits {
            let basis = self.basis_for(e)?;
            let mut deltas = vec![0.0; basis.c];
            for (&i, &d) in &e.deltas {
                if i >= basis.c || !d.is_finite() {
                    return Err(AppError::Field {
                        field: "edits",
                        source: vrf_core::Error::Parameter(format!(
                            "delta for component {i} = {d} (basis has {} components)",
                            basis.c
                        )),
                    });
                }
                deltas[i] = d;
            }
            let edit = PartEdit {
                part: basis.part,
                deltas,
            };
            features = apply_part_edit(&features, &basis, &edit).map_err(AppError::at("edits"))?;
        }
        scene.with_vertex_features(features).map_err(AppError::at("edits"))
    }

    pub fn camera_doc(&self, req: &RenderRequest) -> AppResult<CameraDoc> {
        let mut cam = req
            .camera
            .clone()
            .or_else(|| self.spec.camera.clone())
            .unwrap_or_else(default_camera);
        if req.width.is_some() || req.height.is_some() {
            let w = req.width.unwrap_or(cam.width_px);
            let h = req.height.unwrap_or(cam.height_px);
            cam = cam.resized(w, h);
        }
        if cam.width_px == 0 || cam.height_px == 0 || cam.width_px > MAX_SIDE_PX || cam.height_px > MAX_SIDE_PX {
            return Err(AppError::Field {
                field: "camera",
                source: vrf_core::Error::Config(format!(
                    "image size {}×{} must lie in 1..={MAX_SIDE_PX}",
                    cam.width_px, cam.height_px
                )),
            });
        }
        Ok(cam)
    }

    /// The scene a request describes.
    pub fn scene_for(&self, req: &RenderRequest) -> AppResult<FieldScene> {
        let mut scene = self.scene.clone();
        if let Some(s) = &req.shape {
            scene = scene.reshaped(s.to_shape()?).map_err(|e| attribute(e, "shape"))?;
        }
        if let Some(p) = &req.pose {
            scene = scene.reposed(p.to_pose()?).map_err(|e| attribute(e, "pose"))?;
        }
        if let Some(k) = req.k {
            let config = FieldConfig { k, ..scene.config };
            config.validate(self.template.num_vertices()).map_err(AppError::at("k"))?;
            scene.config = config;
        }
        self.apply_edits(&scene, &req.edits)
    }

    pub fn render_config(&self, req: &RenderRequest) -> AppResult<RenderConfig> {
        let cfg = RenderConfig {
            samples_per_ray: req.samples_per_ray.unwrap_or(self.spec.render.samples_per_ray),
            stratified: self.spec.render.stratified,
            seed: req.seed.unwrap_or(self.spec.render.seed),
            ..RenderConfig::default()
        };
        cfg.validate().map_err(AppError::at("samples_per_ray"))?;
        Ok(cfg)
    }

    pub fn render(&self, req: &RenderRequest) -> AppResult<RenderOutput> {
        let camera = self.camera_doc(req)?.to_camera()?;
        let cfg = self.render_config(req)?;
        let scene = self.scene_for(req)?;
        Ok(render_image(&scene, &camera, &cfg)?)
    }

    pub fn render_png(&self, req: &RenderRequest) -> AppResult<Vec<u8>> {
        Ok(self.render(req)?.rgb.to_png_bytes()?)
    }

    /// PCA coefficients of the part's current features.
    pub fn project(&self, part: usize) -> AppResult<Vec<f64>> {
        let basis = self.part_basis(part)?;
        Ok(project_part(&self.scene.vertex_features, &basis)?)
    }

    pub fn meta(&self) -> Meta {
        let labels = self.template.part_labels();
        Meta {
            parts: self
                .template
                .part_names
                .iter()
                .enumerate()
                .map(|(id, name)| PartInfo {
                    id,
                    name: name.clone(),
                    vertices: labels.iter().filter(|l| **l == id).count(),
                    pca_components: self.bases.get(&id).map(|b| b.c),
                })
                .collect(),
            joints: self.template.num_parts(),
            shape_dim: self.template.shape_dim(),
            vertices: self.template.num_vertices(),
            feature_channels: self.model.feature_map.channels,
            k: self.model.config.k,
            r_max_m: self.model.config.r_max,
            use_direction: self.model.config.use_direction,
            pca_parts: self.bases.keys().copied().collect(),
            camera: self.spec.camera.clone().unwrap_or_else(default_camera),
            render: self.spec.render,
        }
    }
}

/// Pins shape and pose failures to the request field they came from.
fn attribute(e: vrf_core::Error, fallback: &'static str) -> AppError {
    let field = match &e {
        vrf_core::Error::ShapeDimension { .. } => "shape",
        vrf_core::Error::Kinematics(_) => "pose",
        _ => fallback,
    };
    AppError::Field { field, source: e }
}

//! Synthetic capsule-person datasets rendered by the oracle.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use vrf_core::body::capsule::{capsule_person, HEAD, LEFT_ARM, LEFT_LEG, RIGHT_ARM, RIGHT_LEG, TORSO};
use vrf_core::body::{load_template, save_template, BodyTemplate, Pose, ShapeCoeffs};
use vrf_core::math::Vec3;
use vrf_core::recon::TrainView;
use vrf_core::render::Image;

use crate::docs::{CameraDoc, DatasetDoc, PoseDoc, ShapeDoc, Split, ViewRecord, DATASET_VERSION};
use crate::error::{io_at, load_json, write_json, AppError, AppResult};
use crate::figure::{oracle_render, CapsuleFigure};

pub const DATASET_FILE: &str = "dataset.json";
pub const TEMPLATE_FILE: &str = "template.json";

/// Which pose and camera one output view combines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewPlan {
    pub split: Split,
    pub camera: usize,
    pub pose: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub split: Split,
    pub camera: CameraDoc,
    pub pose: Pose,
    pub image: Image,
}

/// Oracle renders for every planned (camera, pose) pair, in plan order.
pub fn make_capsule_dataset(figure: &CapsuleFigure, poses: &[Pose], cameras: &[CameraDoc], plan: &[ViewPlan]) -> AppResult<Vec<RenderedView>> {
    if poses.len() < 3 || cameras.len() < 2 {
        return Err(AppError::Core(vrf_core::Error::Config(format!(
            "a dataset needs at least 3 poses and 2 cameras, got {} and {}",
            poses.len(),
            cameras.len()
        ))));
    }
    let built = cameras
        .iter()
        .map(|c| c.to_camera())
        .collect::<AppResult<Vec<_>>>()?;
    plan.iter()
        .map(|v| {
            let (Some(camera), Some(pose)) = (built.get(v.camera), poses.get(v.pose)) else {
                return Err(AppError::Usage(format!(
                    "view plan references camera {} / pose {} out of range",
                    v.camera, v.pose
                )));
            };
            Ok(RenderedView {
                split: v.split,
                camera: cameras[v.camera].clone(),
                pose: pose.clone(),
                image: oracle_render(figure, pose, camera)?,
            })
        })
        .collect()
}

fn pose_from(items: &[(usize, [f64; 3])]) -> Pose {
    let mut p = Pose::rest(6);
    for (j, r) in items {
        p.joint_rotations[*j] = Vec3::from(*r);
    }
    p
}

/// Four training poses followed by two held-out ones.
pub fn desk_poses() -> Vec<Pose> {
    vec![
        pose_from(&[(LEFT_ARM, [0.0, 0.0, -0.6]), (RIGHT_ARM, [0.0, 0.0, 0.6])]),
        pose_from(&[
            (LEFT_ARM, [0.0, 0.0, 0.4]),
            (RIGHT_ARM, [0.0, 0.0, -0.4]),
            (LEFT_LEG, [0.3, 0.0, 0.0]),
            (RIGHT_LEG, [-0.3, 0.0, 0.0]),
        ]),
        pose_from(&[
            (TORSO, [0.0, 0.3, 0.0]),
            (HEAD, [0.2, 0.0, 0.0]),
            (LEFT_ARM, [0.0, 0.0, -0.3]),
            (RIGHT_ARM, [0.0, 0.0, 0.3]),
        ]),
        pose_from(&[
            (LEFT_ARM, [0.0, 0.0, -0.2]),
            (RIGHT_ARM, [0.0, 0.0, 0.8]),
            (LEFT_LEG, [0.0, 0.0, 0.15]),
            (RIGHT_LEG, [0.0, 0.0, -0.15]),
        ]),
        // Unseen.
        pose_from(&[
            (LEFT_ARM, [0.0, 0.0, -0.4]),
            (RIGHT_ARM, [0.0, 0.0, 0.2]),
            (LEFT_LEG, [0.15, 0.0, 0.0]),
            (RIGHT_LEG, [-0.15, 0.0, 0.0]),
        ]),
        pose_from(&[
            (TORSO, [0.0, -0.2, 0.0]),
            (LEFT_ARM, [0.0, 0.0, 0.1]),
            (RIGHT_ARM, [0.0, 0.0, 0.5]),
            (HEAD, [-0.1, 0.0, 0.0]),
        ]),
    ]
}

pub const DESK_TARGET: [f64; 3] = [0.0, -0.03, 0.0];
pub const DESK_DISTANCE: f64 = 2.6;

/// Eight training cameras every 45° followed by four held-out ones halfway between.
pub fn desk_cameras(size: usize) -> Vec<CameraDoc> {
    let fx = 80.0 * size as f64 / 64.0;
    let deg = std::f64::consts::PI / 180.0;
    let mut out: Vec<CameraDoc> = (0..8)
        .map(|k| {
            let elevation = if k % 2 == 0 { 5.0 } else { 15.0 };
            CameraDoc::orbit((size, size), fx, DESK_TARGET, 45.0 * k as f64 * deg, elevation * deg, DESK_DISTANCE)
        })
        .collect();
    out.extend(
        (0..4).map(|k| CameraDoc::orbit((size, size), fx, DESK_TARGET, (22.5 + 90.0 * k as f64) * deg, 10.0 * deg, DESK_DISTANCE)),
    );
    out
}

/// Training camera `i` sees pose `i % 4`; held-out views rotate through the
/// training poses; each unseen pose is seen from two training cameras.
pub fn desk_plan() -> Vec<ViewPlan> {
    let mut plan: Vec<ViewPlan> = (0..8)
        .map(|i| ViewPlan {
            split: Split::Train,
            camera: i,
            pose: i % 4,
        })
        .collect();
    plan.extend((0..4).map(|k| ViewPlan {
        split: Split::NovelView,
        camera: 8 + k,
        pose: k,
    }));
    for (pose, cams) in [(4, [0, 3]), (5, [2, 5])] {
        plan.extend(cams.map(|camera| ViewPlan {
            split: Split::NovelPose,
            camera,
            pose,
        }));
    }
    plan
}

pub fn desk_dataset(size: usize) -> AppResult<Vec<RenderedView>> {
    make_capsule_dataset(&CapsuleFigure::capsule_person(), &desk_poses(), &desk_cameras(size), &desk_plan())
}

/// Writes the template, images (PNG plus raw float) and a `dataset.json` index.
pub fn write_dataset(dir: &Path, template: &BodyTemplate, views: &[RenderedView]) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    save_template(template, dir.join(TEMPLATE_FILE)).map_err(AppError::at("template"))?;
    let mut records = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        let stem = format!("{}_{i:03}", v.split.label());
        let png = PathBuf::from(format!("{stem}.png"));
        let raw = PathBuf::from(format!("{stem}.vrim"));
        v.image.save_png(dir.join(&png))?;
        v.image.save_raw(dir.join(&raw))?;
        records.push(ViewRecord {
            split: v.split,
            camera: v.camera.clone(),
            pose: PoseDoc::from_pose(&v.pose),
            image: png,
            raw: Some(raw),
        });
    }
    let doc = DatasetDoc {
        version: DATASET_VERSION.into(),
        template: TEMPLATE_FILE.into(),
        shape: ShapeDoc::from_shape(&ShapeCoeffs::zeros(template.shape_dim())),
        views: records,
    };
    write_json(&dir.join(DATASET_FILE), &doc)
}

pub fn write_desk_dataset(dir: &Path, size: usize) -> AppResult<()> {
    write_dataset(dir, &capsule_person(), &desk_dataset(size)?)
}

#[derive(Clone, Debug)]
pub struct LoadedView {
    pub split: Split,
    pub view: TrainView,
    pub camera_doc: CameraDoc,
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub template: Arc<BodyTemplate>,
    pub shape: ShapeCoeffs,
    pub views: Vec<LoadedView>,
}

impl LoadedDataset {
    pub fn split(&self, split: Split) -> Vec<TrainView> {
        self.views.iter().filter(|v| v.split == split).map(|v| v.view.clone()).collect()
    }

    pub fn splits(&self) -> BTreeSet<Split> {
        self.views.iter().map(|v| v.split).collect()
    }
}

/// Reads a dataset directory (or a `dataset.json` path). Raw float images are
/// preferred over PNGs when present.
pub fn load_dataset(path: &Path) -> AppResult<LoadedDataset> {
    let (dir, index) = if path.is_dir() {
        (path.to_path_buf(), path.join(DATASET_FILE))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let doc: DatasetDoc = load_json(&index)?;
    if doc.version != DATASET_VERSION {
        return Err(AppError::Field {
            field: "version",
            source: vrf_core::Error::Format(format!("dataset version {:?}", doc.version)),
        });
    }
    let template_path = dir.join(&doc.template);
    if !template_path.exists() {
        return Err(AppError::Io {
            path: template_path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "template not found"),
        });
    }
    let template = Arc::new(load_template(&template_path).map_err(AppError::at("template"))?);
    let shape = doc.shape.to_shape()?;
    let mut views = Vec::with_capacity(doc.views.len());
    for rec in &doc.views {
        let file = dir.join(rec.raw.as_ref().unwrap_or(&rec.image));
        if !file.exists() {
            return Err(AppError::Io {
                path: file.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "view image not found"),
            });
        }
        let image = Image::load(&file)?;
        views.push(LoadedView {
            split: rec.split,
            view: TrainView {
                camera: rec.camera.to_camera()?,
                image,
                pose: rec.pose.to_pose()?,
            },
            camera_doc: rec.camera.clone(),
        });
    }
    Ok(LoadedDataset { template, shape, views })
}

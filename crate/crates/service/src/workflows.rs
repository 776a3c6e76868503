//! Fit, evaluation, ablation and PCA jobs behind the CLI.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use vrf_core::body::{save_template, BodyTemplate, ShapeCoeffs};
use vrf_core::edit::{part_pca, synthetic_ensemble, PartPcaBasis};
use vrf_core::feature_map::{vertex_features, FeatureMap, VertexFeatures};
use vrf_core::field::{FieldModel, FieldScene};
use vrf_core::recon::{fit_with_progress, psnr, ssim, FitResult};
use vrf_core::render::{render_image, RenderConfig};

use crate::dataset::{LoadedDataset, LoadedView};
use crate::docs::{CameraDoc, FieldDoc, RenderDoc, SceneSpec, ShapeDoc, Split, TrainDoc, SCENE_VERSION};
use crate::error::{io_at, write_json, AppError, AppResult};

pub const SCENE_FILE: &str = "scene.json";
pub const FEATURES_FILE: &str = "features.vrfm";
pub const DECODER_FILE: &str = "decoder.vrml";
pub const LOSS_FILE: &str = "loss.csv";
pub const EVAL_FILE: &str = "eval.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub split: String,
    pub views: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub loss: f64,
    pub trend: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: usize,
    pub direction: String,
    pub novel_view_psnr: f64,
    pub novel_view_ssim: f64,
    pub novel_pose_psnr: f64,
    pub novel_pose_ssim: f64,
    pub seconds: f64,
}

pub fn render_config(doc: &RenderDoc) -> RenderConfig {
    RenderConfig {
        samples_per_ray: doc.samples_per_ray,
        stratified: doc.stratified,
        seed: doc.seed,
        ..RenderConfig::default()
    }
}

/// Mean PSNR and SSIM per split, in split order.
pub fn evaluate(scene: &FieldScene, shape: &ShapeCoeffs, views: &[LoadedView], cfg: &RenderConfig) -> AppResult<Vec<EvalRow>> {
    let base = if &scene.shape == shape {
        scene.clone()
    } else {
        scene.reshaped(shape.clone()).map_err(AppError::at("shape"))?
    };
    let mut splits: Vec<Split> = views.iter().map(|v| v.split).collect();
    splits.sort();
    splits.dedup();
    let mut rows = Vec::new();
    for split in splits {
        let (mut p, mut s, mut n) = (0.0, 0.0, 0);
        for v in views.iter().filter(|v| v.split == split) {
            let posed = base.reposed(v.view.pose.clone()).map_err(AppError::at("pose"))?;
            let out = render_image(&posed, &v.view.camera, cfg)?;
            p += psnr(&out.rgb, &v.view.image)?;
            s += ssim(&out.rgb, &v.view.image)?;
            n += 1;
        }
        rows.push(EvalRow {
            split: split.label().into(),
            views: n,
            psnr: p / n as f64,
            ssim: s / n as f64,
        });
    }
    Ok(rows)
}

pub fn row<'a>(rows: &'a [EvalRow], split: Split) -> Option<&'a EvalRow> {
    rows.iter().find(|r| r.split == split.label())
}

pub struct FitOutcome {
    pub model: FieldModel,
    pub fit: FitResult,
    /// Held-out splits only.
    pub eval: Vec<EvalRow>,
    pub seconds: f64,
}

/// Initializes from `doc`, fits on the training split and evaluates the
/// held-out splits.
pub fn fit_dataset(dataset: &LoadedDataset, doc: &TrainDoc, progress: impl FnMut(usize, f64)) -> AppResult<FitOutcome> {
    doc.check()?;
    let template = dataset.template.clone();
    let train = dataset.split(Split::Train);
    if train.is_empty() {
        return Err(AppError::Core(vrf_core::Error::InsufficientData(
            "dataset has no training views".into(),
        )));
    }
    let m = doc.feature_map;
    let config = doc.train.field_config(&template);
    let model = FieldModel::init(config, (m.height, m.width, m.channels), doc.train.seed);
    let start = Instant::now();
    let fit = fit_with_progress(template.clone(), &dataset.shape, model, &train, &doc.train, progress)?;
    let scene = FieldScene::new(template, &fit.model, train[0].pose.clone(), dataset.shape.clone())?;
    let held_out: Vec<LoadedView> = dataset.views.iter().filter(|v| v.split != Split::Train).cloned().collect();
    let eval = evaluate(&scene, &dataset.shape, &held_out, &render_config(&doc.eval))?;
    Ok(FitOutcome {
        model: fit.model.clone(),
        fit,
        eval,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io_at(path))
}

fn csv_error(path: &Path, e: csv::Error) -> AppError {
    AppError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Writes template, feature map, decoder and a scene spec that references them.
pub fn write_checkpoint(dir: &Path, template: &BodyTemplate, model: &FieldModel, shape: &ShapeCoeffs, camera: Option<CameraDoc>, render: RenderDoc) -> AppResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    save_template(template, dir.join(crate::dataset::TEMPLATE_FILE))?;
    model.feature_map.save(dir.join(FEATURES_FILE))?;
    model.mlp.save(dir.join(DECODER_FILE))?;
    let spec = SceneSpec {
        version: SCENE_VERSION.into(),
        template: crate::dataset::TEMPLATE_FILE.into(),
        feature_map: FEATURES_FILE.into(),
        decoder: DECODER_FILE.into(),
        field: FieldDoc::from(model.config),
        pose: None,
        shape: Some(ShapeDoc::from_shape(shape)),
        camera,
        render,
        bases: Vec::new(),
        edits: Vec::new(),
    };
    let path = dir.join(SCENE_FILE);
    write_json(&path, &spec)?;
    Ok(path)
}

pub fn loss_rows(fit: &FitResult) -> Vec<LossRow> {
    fit.history
        .iter()
        .zip(&fit.trend)
        .enumerate()
        .map(|(step, (loss, trend))| LossRow {
            step,
            loss: *loss,
            trend: *trend,
        })
        .collect()
}

/// One fit per `(k, direction)` pair, reporting held-out metrics.
pub fn ablate(dataset: &LoadedDataset, doc: &TrainDoc, ks: &[usize], directions: &[bool], mut log: impl FnMut(&AblationRow)) -> AppResult<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &k in ks {
        for &direction in directions {
            let mut d = doc.clone();
            d.train.k = k;
            d.train.use_direction = direction;
            let out = fit_dataset(dataset, &d, |_, _| {})?;
            let metric = |s: Split| row(&out.eval, s).map_or((f64::NAN, f64::NAN), |r| (r.psnr, r.ssim));
            let (vp, vs) = metric(Split::NovelView);
            let (pp, ps) = metric(Split::NovelPose);
            let r = AblationRow {
                k,
                direction: if direction { "on" } else { "off" }.into(),
                novel_view_psnr: vp,
                novel_view_ssim: vs,
                novel_pose_psnr: pp,
                novel_pose_ssim: ps,
                seconds: out.seconds,
            };
            log(&r);
            rows.push(r);
        }
    }
    Ok(rows)
}

/// Vertex features of every `.vrfm` map in `dir`, in file-name order.
pub fn feature_ensemble(dir: &Path, template: &BodyTemplate) -> AppResult<Vec<VertexFeatures>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "vrfm"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|f| Ok(vertex_features(&FeatureMap::load(f)?, template)))
        .collect()
}

pub fn pca_job(template: &BodyTemplate, samples: &[VertexFeatures], part: usize, components: usize) -> AppResult<PartPcaBasis> {
    if part >= template.num_parts() {
        return Err(AppError::NotFound(format!("part {part} does not exist")));
    }
    Ok(part_pca(samples, template, part, components)?)
}

pub fn synthetic_samples(template: &BodyTemplate, n: usize, channels: usize, seed: u64) -> Vec<VertexFeatures> {
    synthetic_ensemble(template, n, channels, 4, seed)
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use vrf_core::body::capsule::capsule_person;
use vrf_core::body::{load_template, save_template, BodyTemplate, ShapeCoeffs};
use vrf_core::edit::{PartPcaBasis, DEFAULT_COMPONENTS};
use vrf_core::field::FieldModel;

use crate::dataset::{load_dataset, write_desk_dataset};
use crate::docs::{parse_deltas, CameraDoc, EditDoc, PoseDoc, RenderDoc, ShapeDoc, Split, TrainDoc};
use crate::engine::{default_camera, LoadedScene, RenderRequest};
use crate::error::{io_at, load_json, write_json, AppError, AppResult};
use crate::workflows::{self, render_config, EVAL_FILE, LOSS_FILE};

#[derive(Debug, Parser)]
#[command(name = "vrf", version, about = "Articulated vertex-feature radiance fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub pose: Option<PathBuf>,
    #[arg(long)]
    pub shape: Option<PathBuf>,
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
}

impl Overrides {
    fn request(&self) -> AppResult<RenderRequest> {
        Ok(RenderRequest {
            pose: self.pose.as_deref().map(load_json::<PoseDoc>).transpose()?,
            shape: self.shape.as_deref().map(load_json::<ShapeDoc>).transpose()?,
            camera: self.camera.as_deref().map(load_json::<CameraDoc>).transpose()?,
            edits: Vec::new(),
            k: self.k,
            seed: self.seed,
            width: self.width,
            height: self.height,
            samples_per_ray: self.samples,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene spec to PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render one frame per pose document in a directory.
    Animate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a randomly initialized checkpoint and scene spec.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature map as HEIGHT,WIDTH,CHANNELS.
        #[arg(long, default_value = "256,256,64")]
        map: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        no_direction: bool,
    },
    /// Fit a field to a dataset.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint against held-out views.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        views: PathBuf,
        #[arg(long, default_value = "psnr,ssim")]
        metrics: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit every (k, direction) combination and tabulate held-out metrics.
    Ablate {
        #[arg(long = "ckpt-config")]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "1,3,5")]
        k: String,
        #[arg(long, default_value = "on,off")]
        direction: String,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-part PCA basis over an ensemble of feature maps.
    Pca {
        /// Directory of `.vrfm` maps.
        #[arg(long, conflicts_with = "synthetic")]
        features: Option<PathBuf>,
        /// Use this many seeded synthetic maps instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 16)]
        channels: usize,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        part: usize,
        #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render with PCA coefficient deltas applied to one part.
    Edit {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        /// Comma-separated INDEX:DELTA pairs, e.g. "0:+2.5,3:-1".
        #[arg(long)]
        delta: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    MakeTemplate {
        #[arg(long, default_value = "capsule")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle-rendered capsule-person dataset.
    MakeDataset {
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// HTTP render service.
    Serve {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> AppResult<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| AppError::Usage(format!("bad {what} {x:?}"))))
        .collect()
}

fn parse_switch(s: &str) -> AppResult<bool> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(AppError::Usage(format!("direction must be on or off, got {other:?}"))),
    }
}

fn template_or_default(path: Option<&Path>) -> AppResult<BodyTemplate> {
    match path {
        Some(p) => Ok(load_template(p)?),
        None => Ok(capsule_person()),
    }
}

fn train_doc(path: Option<&Path>, iterations: Option<usize>, seed: Option<u64>) -> AppResult<TrainDoc> {
    let mut doc: TrainDoc = match path {
        Some(p) => load_json(p)?,
        None => TrainDoc::default(),
    };
    if let Some(n) = iterations {
        doc.train.iterations = n;
    }
    if let Some(s) = seed {
        doc.train.seed = s;
    }
    doc.check()?;
    Ok(doc)
}

fn write_png(path: &Path, png: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    std::fs::write(path, png).map_err(io_at(path))
}

fn print_eval(rows: &[workflows::EvalRow], metrics: &[String]) {
    let mut header = format!("{:<12} {:>5}", "split", "views");
    for m in metrics {
        header += &format!(" {:>8}", m);
    }
    println!("{header}");
    for r in rows {
        let mut line = format!("{:<12} {:>5}", r.split, r.views);
        for m in metrics {
            let v = if m == "psnr" { r.psnr } else { r.ssim };
            line += &format!(" {:>8.4}", v);
        }
        println!("{line}");
    }
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Render { scene, out, overrides } => {
            let loaded = LoadedScene::load(&scene)?;
            write_png(&out, &loaded.render_png(&overrides.request()?)?)
        }
        Command::Animate { scene, poses, out, seed } => {
            let loaded = LoadedScene::load(&scene)?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&poses)
                .map_err(io_at(&poses))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(AppError::Usage(format!("no pose documents in {}", poses.display())));
            }
            std::fs::create_dir_all(&out).map_err(io_at(&out))?;
            for f in &files {
                let req = RenderRequest {
                    pose: Some(load_json(f)?),
                    seed,
                    ..Default::default()
                };
                let stem = f.file_stem().unwrap_or_default().to_string_lossy();
                write_png(&out.join(format!("{stem}.png")), &loaded.render_png(&req)?)?;
            }
            println!("rendered {} frames", files.len());
            Ok(())
        }
        Command::Init {
            out,
            template,
            seed,
            map,
            k,
            no_direction,
        } => {
            let t = template_or_default(template.as_deref())?;
            let dims: Vec<usize> = parse_list(&map, "map dimension")?;
            let [h, w, c] = dims[..] else {
                return Err(AppError::Usage("--map takes HEIGHT,WIDTH,CHANNELS".into()));
            };
            let mut config = vrf_core::field::FieldConfig::for_template(&t);
            config.k = k;
            config.use_direction = !no_direction;
            config.validate(t.num_vertices()).map_err(AppError::at("k"))?;
            let model = FieldModel::init(config, (h, w, c), seed);
            let spec = workflows::write_checkpoint(
                &out,
                &t,
                &model,
                &ShapeCoeffs::zeros(t.shape_dim()),
                Some(default_camera()),
                RenderDoc {
                    seed,
                    ..RenderDoc::default()
                },
            )?;
            println!("{}", spec.display());
            Ok(())
        }
        Command::Fit {
            dataset,
            config,
            out,
            iterations,
            seed,
        } => {
            let doc = train_doc(config.as_deref(), iterations, seed)?;
            let data = load_dataset(&dataset)?;
            let total = doc.train.iterations;
            let outcome = workflows::fit_dataset(&data, &doc, |step, loss| {
                if step % 100 == 0 || step + 1 == total {
                    eprintln!("step {step:>5} loss {loss:.6}");
                }
            })?;
            let camera = data
                .views
                .iter()
                .find(|v| v.split != Split::Train)
                .map(|v| v.camera_doc.clone());
            let spec = workflows::write_checkpoint(&out, &data.template, &outcome.model, &data.shape, camera, doc.eval)?;
            write_json(&out.join("train.json"), &doc)?;
            workflows::write_csv(&out.join(LOSS_FILE), &workflows::loss_rows(&outcome.fit))?;
            workflows::write_csv(&out.join(EVAL_FILE), &outcome.eval)?;
            print_eval(&outcome.eval, &["psnr".into(), "ssim".into()]);
            println!("fit {} steps in {:.1}s -> {}", total, outcome.seconds, spec.display());
            Ok(())
        }
        Command::Eval {
            ckpt,
            views,
            metrics,
            out,
        } => {
            let metrics: Vec<String> = parse_list(&metrics, "metric")?;
            if let Some(m) = metrics.iter().find(|m| *m != "psnr" && *m != "ssim") {
                return Err(AppError::Usage(format!("unknown metric {m:?}")));
            }
            let spec = if ckpt.is_dir() { ckpt.join(workflows::SCENE_FILE) } else { ckpt };
            let loaded = LoadedScene::load(&spec)?;
            let data = load_dataset(&views)?;
            let rows = workflows::evaluate(&loaded.scene, &data.shape, &data.views, &render_config(&loaded.spec.render))?;
            print_eval(&rows, &metrics);
            if let Some(path) = out {
                workflows::write_csv(&path, &rows)?;
            }
            Ok(())
        }
        Command::Ablate {
            config,
            dataset,
            k,
            direction,
            iterations,
            seed,
            out,
        } => {
            let doc = train_doc(config.as_deref(), iterations, seed)?;
            let ks: Vec<usize> = parse_list(&k, "k")?;
            let dirs = direction
                .split(',')
                .map(str::trim)
                .map(parse_switch)
                .collect::<AppResult<Vec<_>>>()?;
            let data = load_dataset(&dataset)?;
            println!(
                "{:>3} {:>9} {:>9} {:>9} {:>9} {:>9}",
                "k", "direction", "nv_psnr", "nv_ssim", "np_psnr", "np_ssim"
            );
            let rows = workflows::ablate(&data, &doc, &ks, &dirs, |r| {
                println!(
                    "{:>3} {:>9} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                    r.k, r.direction, r.novel_view_psnr, r.novel_view_ssim, r.novel_pose_psnr, r.novel_pose_ssim
                );
            })?;
            if let Some(path) = out {
                workflows::write_csv(&path, &rows)?;
            }
            Ok(())
        }
        Command::Pca {
            features,
            synthetic,
            channels,
            template,
            part,
            components,
            seed,
            out,
        } => {
            let t = template_or_default(template.as_deref())?;
            let samples = match (features, synthetic) {
                (Some(dir), _) => workflows::feature_ensemble(&dir, &t)?,
                (None, Some(n)) => workflows::synthetic_samples(&t, n, channels, seed),
                (None, None) => return Err(AppError::Usage("pca needs --features DIR or --synthetic N".into())),
            };
            let basis = workflows::pca_job(&t, &samples, part, components)?;
            basis.save(&out)?;
            println!("part {part}: {} components over {} samples", basis.c, samples.len());
            Ok(())
        }
        Command::Edit {
            scene,
            basis,
            delta,
            out,
            overrides,
        } => {
            let deltas = parse_deltas(&delta)?;
            let b = PartPcaBasis::load(&basis)?;
            let part = b.part;
            let loaded = LoadedScene::load(&scene)?.with_basis(b)?;
            let mut req = overrides.request()?;
            req.edits.push(EditDoc {
                basis: None,
                part: Some(part),
                deltas,
            });
            write_png(&out, &loaded.render_png(&req)?)
        }
        Command::MakeTemplate { preset, out } => {
            if preset != "capsule" {
                return Err(AppError::Usage(format!("unknown template preset {preset:?}")));
            }
            save_template(&capsule_person(), &out)?;
            Ok(())
        }
        Command::MakeDataset { preset, size, out } => {
            if preset != "desk" {
                return Err(AppError::Usage(format!("unknown dataset preset {preset:?}")));
            }
            write_desk_dataset(&out, size)?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Serve { scene, addr } => {
            let state = Arc::new(crate::server::AppState::load(&scene)?);
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|source| AppError::Io {
                    path: "tokio runtime".into(),
                    source,
                })?;
            rt.block_on(crate::server::serve(state, addr))
        }
    }
}

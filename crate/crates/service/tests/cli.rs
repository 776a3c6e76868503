use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vrf_core::body::capsule::HEAD;
use vrf_service::dataset::{desk_cameras, desk_poses, write_dataset, RenderedView};
use vrf_service::docs::{PoseDoc, Split};
use vrf_service::engine::{LoadedScene, RenderRequest};

fn vrf(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vrf"));
    for a in args {
        c.arg(a);
    }
    c
}

fn ok(mut c: Command) -> Output {
    let out = c.output().unwrap();
    assert!(
        out.status.success(),
        "{:?} failed\nstdout: {}\nstderr: {}",
        c,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails(mut c: Command) -> String {
    let out = c.output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{c:?} should fail");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A small random checkpoint, returning its scene spec path.
fn init(dir: &Path) -> PathBuf {
    let ckpt = dir.join("ckpt");
    ok(vrf(&[&"init", &"--out", &ckpt, &"--map", &"16,16,4", &"--seed", &"3"]));
    ckpt.join("scene.json")
}

fn small_render(scene: &Path, out: &Path) -> Command {
    vrf(&[&"render", &"--scene", &scene, &"--out", &out, &"--width", &"16", &"--height", &"16", &"--samples", &"16"])
}

#[test]
fn missing_file_is_an_io_error() {
    let err = fails(vrf(&[&"render", &"--scene", &"/no/such/scene.json", &"--out", &"/tmp/never.png"]));
    assert!(err.starts_with("error category=io"), "{err}");
    assert!(err.contains("/no/such/scene.json"));
}

#[test]
fn render_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = init(dir.path());
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    ok(small_render(&scene, &a));
    ok(small_render(&scene, &b));
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    let img = image::load_from_memory(&a).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));
}

#[test]
fn thread_count_does_not_change_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let scene = init(dir.path());
    let mut bytes = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}.png"));
        let mut c = small_render(&scene, &out);
        c.env("VERI3D_THREADS", threads);
        ok(c);
        bytes.push(std::fs::read(out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn parse_errors_name_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let scene = init(dir.path());
    let pose = dir.path().join("pose.json");
    std::fs::write(
        &pose,
        r#"{"version":"veri3d-pose/1","joint_rotations_rad":[[0,0,"x"]],"root_translation_m":[0,0,0]}"#,
    )
    .unwrap();
    let err = fails(vrf(&[&"render", &"--scene", &scene, &"--out", &dir.path().join("x.png"), &"--pose", &pose]));
    assert!(err.starts_with("error category=parse"), "{err}");
    assert!(err.contains("joint_rotations_rad"), "{err}");

    let bad_shape = dir.path().join("shape.json");
    std::fs::write(&bad_shape, r#"{"version":"veri3d-shape/1","beta":[1,2,3,4,5]}"#).unwrap();
    let err = fails(vrf(&[&"render", &"--scene", &scene, &"--out", &dir.path().join("y.png"), &"--shape", &bad_shape]));
    assert!(err.contains("shape"), "{err}");
    assert!(!err.contains("category=parse"), "{err}");
}

#[test]
fn eval_against_own_renders_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = init(dir.path());
    let scene = LoadedScene::load(&scene_path).unwrap();
    let poses = desk_poses();
    let views: Vec<RenderedView> = desk_cameras(16)
        .into_iter()
        .take(3)
        .zip([Split::NovelView, Split::NovelView, Split::NovelPose])
        .enumerate()
        .map(|(i, (camera, split))| {
            let req = RenderRequest {
                camera: Some(camera.clone()),
                pose: Some(PoseDoc::from_pose(&poses[i])),
                ..Default::default()
            };
            RenderedView {
                split,
                camera,
                pose: poses[i].clone(),
                image: scene.render(&req).unwrap().rgb,
            }
        })
        .collect();
    let data = dir.path().join("views");
    write_dataset(&data, &scene.template, &views).unwrap();
    let csv_path = dir.path().join("eval.csv");
    let out = ok(vrf(&[&"eval", &"--ckpt", &scene_path.parent().unwrap(), &"--views", &data, &"--out", &csv_path]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("novel_view") && stdout.contains("novel_pose"), "{stdout}");
    let mut r = csv::Reader::from_path(&csv_path).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row[2].parse::<f64>().unwrap(), 99.0);
        assert!((row[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ablate_reports_one_row_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("desk");
    ok(vrf(&[&"make-dataset", &"--size", &"16", &"--out", &data]));
    let cfg = dir.path().join("tiny.json");
    std::fs::write(
        &cfg,
        r#"{"version":"veri3d-train/1","train":{"rays_per_step":16,"samples_per_ray":8},
            "feature_map":{"height":16,"width":16,"channels":4},"eval":{"samples_per_ray":8,"seed":0}}"#,
    )
    .unwrap();
    let csv_path = dir.path().join("ablation.csv");
    ok(vrf(&[
        &"ablate", &"--ckpt-config", &cfg, &"--dataset", &data, &"--k", &"1,3,5", &"--direction", &"on", &"--iterations", &"2",
        &"--out", &csv_path,
    ]));
    let mut r = csv::Reader::from_path(&csv_path).unwrap();
    let ks: Vec<usize> = r.records().map(|x| x.unwrap()[0].parse().unwrap()).collect();
    assert_eq!(ks, vec![1, 3, 5]);
}

#[test]
fn pca_edit_template_and_animate_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let template = d.join("template.json");
    ok(vrf(&[&"make-template", &"--out", &template]));
    assert!(vrf_core::body::load_template(&template).is_ok());

    let scene = init(d);
    let basis = d.join("head.vrpc");
    let part = HEAD.to_string();
    ok(vrf(&[&"pca", &"--synthetic", &"12", &"--channels", &"4", &"--part", &part, &"--components", &"5", &"--out", &basis]));

    let (plain, edited) = (d.join("plain.png"), d.join("edited.png"));
    ok(small_render(&scene, &plain));
    let mut c = vrf(&[&"edit", &"--scene", &scene, &"--basis", &basis, &"--delta", &"0:+4", &"--out", &edited]);
    c.args(["--width", "16", "--height", "16", "--samples", "16"]);
    ok(c);
    assert!(edited.exists());
    assert_ne!(std::fs::read(&plain).unwrap(), std::fs::read(&edited).unwrap());

    let err = fails(vrf(&[&"pca", &"--synthetic", &"4", &"--part", &"99", &"--out", &d.join("bad.vrpc")]));
    assert!(err.contains("category=not-found"), "{err}");

    let poses = d.join("poses");
    std::fs::create_dir_all(&poses).unwrap();
    for (i, p) in desk_poses().iter().take(2).enumerate() {
        std::fs::write(poses.join(format!("{i:02}.json")), serde_json::to_string(&PoseDoc::from_pose(p)).unwrap()).unwrap();
    }
    let frames = d.join("frames");
    ok(vrf(&[&"animate", &"--scene", &scene, &"--poses", &poses, &"--out", &frames]));
    assert!(frames.join("00.png").exists() && frames.join("01.png").exists());
}

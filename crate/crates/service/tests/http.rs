use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;
use vrf_core::body::capsule::HEAD;
use vrf_service::docs::SceneSpec;
use vrf_service::engine::Meta;
use vrf_service::error::{load_json, write_json};
use vrf_service::server::{router, AppState, ErrorBody, ProjectResponse};
use vrf_service::workflows::{pca_job, synthetic_samples};

fn init(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_vrf"))
        .args(["init", "--map", "16,16,4", "--seed", &seed.to_string(), "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success());
    out.join("scene.json")
}

/// A checkpoint whose spec also carries a head basis.
fn scene_with_basis(dir: &Path) -> PathBuf {
    let spec_path = init(dir, "ckpt", 2);
    let mut spec: SceneSpec = load_json(&spec_path).unwrap();
    let t = vrf_core::body::capsule::capsule_person();
    let basis = pca_job(&t, &synthetic_samples(&t, 10, 4, 1), HEAD, 4).unwrap();
    basis.save(spec_path.parent().unwrap().join("head.vrpc")).unwrap();
    spec.bases.push("head.vrpc".into());
    write_json(&spec_path, &spec).unwrap();
    spec_path
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

const SMALL: &str = r#"{"width":16,"height":16,"samples_per_ray":16}"#;

#[tokio::test]
async fn meta_describes_the_scene() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::load(&scene_with_basis(dir.path())).unwrap());
    let (status, body) = call(&state, "GET", "/meta", "").await;
    assert_eq!(status, StatusCode::OK);
    let meta: Meta = serde_json::from_slice(&body).unwrap();
    assert_eq!(meta.parts.len(), 6);
    assert_eq!(meta.shape_dim, 2);
    assert_eq!(meta.feature_channels, 4);
    assert_eq!(meta.pca_parts, vec![HEAD]);
    assert_eq!(meta.parts[HEAD].pca_components, Some(4));
}

#[tokio::test]
async fn render_is_idempotent_and_matches_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let spec = init(dir.path(), "ckpt", 5);
    let state = Arc::new(AppState::load(&spec).unwrap());
    let (s1, a) = call(&state, "POST", "/render", SMALL).await;
    let (s2, b) = call(&state, "POST", "/render", SMALL).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);

    let out = dir.path().join("cli.png");
    let status = Command::new(env!("CARGO_BIN_EXE_vrf"))
        .args(["render", "--width", "16", "--height", "16", "--samples", "16", "--scene"])
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(out).unwrap(), a);
}

#[tokio::test]
async fn concurrent_requests_agree() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::load(&init(dir.path(), "ckpt", 6)).unwrap());
    let (a, b, c) = tokio::join!(
        call(&state, "POST", "/render", SMALL),
        call(&state, "POST", "/render", SMALL),
        call(&state, "GET", "/meta", ""),
    );
    assert_eq!(a, b);
    assert_eq!(c.0, StatusCode::OK);
}

fn error_of(body: &[u8]) -> ErrorBody {
    serde_json::from_slice(body).unwrap()
}

#[tokio::test]
async fn bad_requests_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::load(&scene_with_basis(dir.path())).unwrap());

    let (s, body) = call(&state, "POST", "/render", r#"{"shape":{"version":"veri3d-shape/1","beta":[1,2,3]}}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_of(&body).field.as_deref(), Some("shape"));

    let (s, body) = call(
        &state,
        "POST",
        "/render",
        r#"{"pose":{"version":"veri3d-pose/1","joint_rotations_rad":"none","root_translation_m":[0,0,0]}}"#,
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let e = error_of(&body);
    assert_eq!(e.error, "parse");
    assert_eq!(e.field.as_deref(), Some("pose.joint_rotations_rad"));

    let (s, body) = call(&state, "POST", "/render", r#"{"colour":1}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(error_of(&body).message.contains("colour"));

    let (s, _) = call(&state, "POST", "/render", "{not json").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, body) = call(&state, "POST", "/render", r#"{"width":5000}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_of(&body).field.as_deref(), Some("camera"));

    let (s, body) = call(&state, "POST", "/render", r#"{"k":0}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_of(&body).field.as_deref(), Some("k"));
}

#[tokio::test]
async fn pca_projection() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::load(&scene_with_basis(dir.path())).unwrap());
    let (s, body) = call(&state, "POST", "/pca/project", &format!(r#"{{"part":{HEAD}}}"#)).await;
    assert_eq!(s, StatusCode::OK);
    let r: ProjectResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!((r.part, r.coefficients.len()), (HEAD, 4));
    assert!(r.coefficients.iter().all(|c| c.is_finite()));

    let (s, body) = call(&state, "POST", "/pca/project", r#"{"part":99}"#).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_of(&body).error, "not-found");
    // A real part without a basis is also missing.
    let (s, _) = call(&state, "POST", "/pca/project", r#"{"part":0}"#).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    // Edits naming a part resolve against the loaded basis.
    let (s, _) = call(&state, "POST", "/render", r#"{"width":8,"height":8,"samples_per_ray":8,"edits":[{"part":1,"deltas":{"0":2.0}}]}"#).await;
    assert_eq!(s, StatusCode::OK);
}

fn touch(path: &Path, offset_s: u64) {
    let f = std::fs::OpenOptions::new().append(true).open(path).unwrap();
    f.set_modified(SystemTime::now() + Duration::from_secs(offset_s)).unwrap();
}

#[tokio::test]
async fn changed_checkpoint_is_swapped_in() {
    let dir = tempfile::tempdir().unwrap();
    let spec = init(dir.path(), "ckpt", 7);
    let other = init(dir.path(), "other", 8);
    let state = Arc::new(AppState::load(&spec).unwrap());
    let (_, before) = call(&state, "POST", "/render", SMALL).await;

    let features = spec.parent().unwrap().join("features.vrfm");
    std::fs::copy(other.parent().unwrap().join("features.vrfm"), &features).unwrap();
    touch(&features, 10);
    let (s, after) = call(&state, "POST", "/render", SMALL).await;
    assert_eq!(s, StatusCode::OK);
    assert_ne!(before, after);

    // A broken spec keeps the last good snapshot serving.
    std::fs::write(&spec, "{").unwrap();
    touch(&spec, 20);
    let (s, kept) = call(&state, "POST", "/render", SMALL).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(kept, after);
}

//! HTTP render service. Each request renders against an immutable scene
//! snapshot; the snapshot is reloaded and swapped when any of its files change.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::docs::SceneSpec;
use crate::engine::{LoadedScene, RenderRequest};
use crate::error::{load_json, parse_json, AppError, AppResult};

type Stamps = Vec<(PathBuf, Option<SystemTime>)>;

fn stamps(spec_path: &Path, spec: &SceneSpec, dir: &Path) -> Stamps {
    std::iter::once(spec_path.to_path_buf())
        .chain(LoadedScene::dependencies(spec, dir))
        .map(|p| {
            let t = std::fs::metadata(&p).and_then(|m| m.modified()).ok();
            (p, t)
        })
        .collect()
}

struct Snapshot {
    scene: Arc<LoadedScene>,
    stamps: Stamps,
}

pub struct AppState {
    spec_path: PathBuf,
    snapshot: RwLock<Snapshot>,
}

impl AppState {
    pub fn load(spec_path: &Path) -> AppResult<Self> {
        let scene = LoadedScene::load(spec_path)?;
        let stamps = stamps(spec_path, &scene.spec, &scene.dir);
        Ok(Self {
            spec_path: spec_path.to_path_buf(),
            snapshot: RwLock::new(Snapshot {
                scene: Arc::new(scene),
                stamps,
            }),
        })
    }

    /// Current snapshot, reloading first if a file it was built from changed.
    /// A failed reload keeps serving the previous snapshot.
    pub fn scene(&self) -> Arc<LoadedScene> {
        let (scene, old) = {
            let s = self.snapshot.read().unwrap_or_else(|e| e.into_inner());
            (s.scene.clone(), s.stamps.clone())
        };
        let now = stamps(&self.spec_path, &scene.spec, &scene.dir);
        if now == old {
            return scene;
        }
        match load_json::<SceneSpec>(&self.spec_path).and_then(|spec| {
            let dir = self.spec_path.parent().unwrap_or(Path::new(".")).to_path_buf();
            LoadedScene::from_spec(spec, dir)
        }) {
            Ok(fresh) => {
                let fresh = Arc::new(fresh);
                let stamps = stamps(&self.spec_path, &fresh.spec, &fresh.dir);
                let mut s = self.snapshot.write().unwrap_or_else(|e| e.into_inner());
                *s = Snapshot {
                    scene: fresh.clone(),
                    stamps,
                };
                fresh
            }
            Err(_) => scene,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

pub fn status_of(e: &AppError) -> StatusCode {
    match e {
        AppError::Parse { .. } | AppError::Usage(_) => StatusCode::BAD_REQUEST,
        AppError::NotFound(_) => StatusCode::NOT_FOUND,
        AppError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        AppError::Core(c) | AppError::Field { source: c, .. } => match c {
            vrf_core::Error::Io(_) | vrf_core::Error::Numeric { .. } | vrf_core::Error::Image(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        },
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.category().into(),
            field: self.field().map(str::to_string),
            message: self.to_string(),
        };
        (status_of(&self), Json(body)).into_response()
    }
}

fn body_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    let text = std::str::from_utf8(body).map_err(|e| AppError::Parse {
        origin: "body".into(),
        field: ".".into(),
        message: e.to_string(),
    })?;
    parse_json(text, "body")
}

async fn meta(State(state): State<Arc<AppState>>) -> Response {
    Json(state.scene().meta()).into_response()
}

async fn render(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, AppError> {
    let req: RenderRequest = body_json(&body)?;
    let scene = state.scene();
    let png = tokio::task::spawn_blocking(move || scene.render_png(&req))
        .await
        .map_err(|e| AppError::Usage(format!("render task failed: {e}")))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectRequest {
    pub part: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectResponse {
    pub part: usize,
    pub coefficients: Vec<f64>,
}

async fn project(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ProjectResponse>, AppError> {
    let req: ProjectRequest = body_json(&body)?;
    let coefficients = state.scene().project(req.part)?;
    Ok(Json(ProjectResponse {
        part: req.part,
        coefficients,
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/meta", get(meta))
        .route("/render", post(render))
        .route("/pca/project", post(project))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> AppResult<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| AppError::Io {
        path: addr.to_string(),
        source,
    })?;
    eprintln!("listening on http://{}", listener.local_addr().map_or(addr, |a| a));
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| AppError::Io {
            path: addr.to_string(),
            source,
        })
}

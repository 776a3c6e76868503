//! Command line, HTTP service, synthetic capsule datasets and the
//! ground-truth oracle renderer.

pub mod cli;
pub mod dataset;
pub mod docs;
pub mod engine;
pub mod error;
pub mod figure;
pub mod server;
pub mod workflows;

pub use error::{AppError, AppResult};

/// Caps the rayon pool at `VERI3D_THREADS` workers when set.
pub fn init_threads() -> AppResult<()> {
    let Ok(v) = std::env::var("VERI3D_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| AppError::Usage(format!("VERI3D_THREADS={v:?} must be a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| AppError::Usage(format!("thread pool: {e}")))
}

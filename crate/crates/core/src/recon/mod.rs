//! Photometric reconstruction: analytic gradients, Adam and image metrics.

pub mod adam;
pub mod backward;
pub mod fit;
pub mod metrics;

pub use adam::{adam_step, AdamParams, AdamState};
pub use backward::{backward, loss_and_gradients, photometric_loss, BackwardOutput, GradientSet, SampleConfig, TrainRay};
pub use fit::{fit, fit_with_progress, smoothed_trend, view_scenes, FitResult, TrainConfig, TrainView};
pub use metrics::{mse, psnr, ssim, PSNR_CAP};

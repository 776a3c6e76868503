//! Articulated vertex-based radiance fields: a skinned body template whose
//! vertices carry learnable features, decoded into color and density and
//! volume rendered.

pub mod adv_loss;
pub mod body;
pub mod edit;
pub mod error;
pub mod feature_map;
pub mod field;
pub mod frames;
pub mod math;
pub mod rawio;
pub mod recon;
pub mod render;

pub use error::{Error, Result};

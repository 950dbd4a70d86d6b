//! Toolkit for position-prompted visual grounding at desk scale.
//!
//! The crate covers the full loop: rendering axis-like prompt images,
//! blending them onto preprocessed inputs through a border mask, forging
//! unified grounding conversations from heterogeneous annotation sources,
//! training a small autoregressive grounding model with reverse-mode
//! differentiation, and scoring predictions with IoU-threshold accuracy,
//! including the ablation sweeps over prompt hyperparameters.

pub mod axis;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod overlay;
pub mod raster;

pub use error::{Error, Result};

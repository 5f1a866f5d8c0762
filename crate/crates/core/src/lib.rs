//! Unified 3D human pose and trajectory forecasting.
//!
//! Observed skeletal motion is canonicalized (root of the last observed frame
//! at the origin, heading along +x), embedded with graph attention over the
//! kinematic chain, and decoded by a non-autoregressive transformer that
//! emits every future frame in one pass. Predictions are mapped back to the
//! global frame with the inverse transform.

pub mod attention;
pub mod autograd;
pub mod checkpoint;
pub mod data;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod params;
pub mod presets;
pub mod skeleton;
pub mod tensor;
pub mod training;
pub mod transform;

pub use error::{Error, Result};

//! Learning Q-value distributions (QPDFs) for flipper-configuration control,
//! choosing safe configurations from partially observed terrain, and tactile
//! exploration of occluded terrain bins.

pub mod dataset;
pub mod dem;
pub mod error;
pub mod flipper;
pub mod forest;
pub mod gp;
pub mod harness;
pub mod policy;
pub mod seed;
pub mod tte;

pub use error::{Error, Result};
pub use flipper::{FlipperConfig, Label};

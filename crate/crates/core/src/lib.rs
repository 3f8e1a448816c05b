//! Single-view caricature head reconstruction.

pub mod error;
pub mod implicit;
mod io_util;
pub mod mesh;
pub mod metrics;
pub mod morphable;
pub mod multiview;
pub mod registration;
pub mod synth;
pub mod vcgcn;

pub use error::{Error, Result};

//! Orthographic three-view rig, the landmark scheme, and lifting of 2D
//! landmarks onto a mesh.

mod camera;
mod landmarks;
mod scheme;

pub use camera::{default_rig, rig_for_bounds, Projection, Rig, ViewCamera, ViewId, RIG_FILL};
pub use landmarks::{
    initialize_landmarks, lift_landmark, project_landmarks, InitialLandmarks, LandmarkRecords,
    LandmarkSet2D, LandmarkSet3D, LiftedPoint,
};
pub use scheme::{LandmarkScheme, LANDMARK_COUNT};
pub(crate) use scheme::DEFAULT_LANDMARKS;

use nalgebra::Point2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Stand-in for a trained 2D detector: projects known 3D landmarks into each
/// view and optionally adds seeded Gaussian pixel noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubDetector {
    pub noise_px: f64,
    pub seed: u64,
}

impl StubDetector {
    pub fn exact() -> Self {
        Self { noise_px: 0.0, seed: 0 }
    }

    pub fn detect(
        &self,
        truth: &LandmarkSet3D,
        rig: &Rig,
        scheme: &LandmarkScheme,
    ) -> Result<[LandmarkSet2D; 3]> {
        if truth.len() != scheme.len() {
            return Err(Error::DimensionMismatch {
                expected: scheme.len(),
                actual: truth.len(),
                context: "3D landmarks",
            });
        }
        let mut sets = project_landmarks(truth, rig, scheme);
        if self.noise_px > 0.0 {
            let normal = Normal::new(0.0, self.noise_px)
                .map_err(|e| Error::InvalidArgument(format!("noise level: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for set in &mut sets {
                for p in &mut set.points {
                    *p = Point2::new(p.x + normal.sample(&mut rng), p.y + normal.sample(&mut rng));
                }
            }
        } else if self.noise_px < 0.0 || self.noise_px.is_nan() {
            return Err(Error::InvalidArgument("noise level must be non-negative".into()));
        }
        Ok(sets)
    }
}

//! Occupancy fields, their rasterization and surface extraction, and a small
//! trainable pixel-aligned occupancy predictor.

mod features;
mod grid;
mod marching;
mod predictor;
mod sampling;

pub use features::{pixel_aligned_feature, FeatureMap, FeatureVolumeInput};
pub use grid::{rasterize_field, GridSpec, VoxelGrid};
pub use marching::marching_cubes;
pub use predictor::{
    occupancy_loss, predict_occupancy, train_occupancy, OccupancyPredictor, OccupancyTrainConfig,
    TrainedOccupancy,
};
pub use sampling::{sample_surface, sample_training_points, LabeledPoint, SamplingConfig};

use nalgebra::Point3;

use crate::error::Result;
use crate::mesh::{Mesh, SpatialIndex};

/// Iso level separating inside from outside.
pub const DEFAULT_ISO: f64 = 0.5;

/// Occupancy in `[0, 1]` at a camera-space point.
pub trait OccupancyField: Sync {
    fn occupancy(&self, p: &Point3<f64>) -> f64;
}

/// Binary ground-truth occupancy of a closed mesh.
#[derive(Debug, Clone)]
pub struct MeshOracle {
    index: SpatialIndex,
}

impl MeshOracle {
    /// Fails on meshes with boundary edges.
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let index = SpatialIndex::build(mesh);
        if index.boundary_edges() > 0 {
            return Err(crate::Error::NotWatertight {
                boundary_edges: index.boundary_edges(),
            });
        }
        Ok(Self { index })
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }
}

impl OccupancyField for MeshOracle {
    fn occupancy(&self, p: &Point3<f64>) -> f64 {
        // watertightness was checked at construction
        if self.index.contains(p).unwrap_or(false) {
            1.0
        } else {
            0.0
        }
    }
}

impl OccupancyField for VoxelGrid {
    fn occupancy(&self, p: &Point3<f64>) -> f64 {
        self.trilinear(p)
    }
}

/// Occupancy given by a closure, used for analytic shapes.
pub struct FnField<F>(pub F);

impl<F: Fn(&Point3<f64>) -> f64 + Sync> OccupancyField for FnField<F> {
    fn occupancy(&self, p: &Point3<f64>) -> f64 {
        (self.0)(p)
    }
}

/// Network occupancy for one conditioning input.
#[derive(Debug, Clone)]
pub struct PredictorField<'a> {
    pub predictor: &'a OccupancyPredictor,
    pub input: &'a FeatureVolumeInput,
}

impl OccupancyField for PredictorField<'_> {
    fn occupancy(&self, p: &Point3<f64>) -> f64 {
        predict_occupancy(self.predictor, self.input, p).expect("predictor input width checked at construction")
    }
}

impl<'a> PredictorField<'a> {
    pub fn new(predictor: &'a OccupancyPredictor, input: &'a FeatureVolumeInput) -> Result<Self> {
        predictor.check_input_width(input.map.channels + 1)?;
        Ok(Self { predictor, input })
    }
}

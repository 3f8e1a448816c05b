//! View-collaborative graph convolution for 3D landmark refinement.
//!
//! Each view keeps a graph over the landmarks it sees. Blocks run a GCN stack
//! per view, average the views into the 44-node global graph, run a global
//! stack, and inject the global features back into every view through
//! attention. A final global stack decodes per-landmark 3D displacements.

mod graph;
mod io;
mod loss;
mod network;
mod tape;
mod train;

use std::fmt;
use std::str::FromStr;

pub use graph::{combine_local_to_global, normalize_adjacency, LandmarkGraph, VcGcnGraphs};
pub use loss::{smooth_l1, smooth_l1_rows, total_loss, LossBreakdown, LossWeights};
pub use network::{
    g2l_fuse, gcn_layer, vcgcn_block, vcgcn_forward, vcgcn_gradient, BlockOutput, BlockParams, G2lOutput, G2lParams,
    VcGcnConfig, VcGcnInput, VcGcnParams,
};
pub use train::{evaluate_vcgcn, train_vcgcn, EpochRecord, TrainedVcGcn, TrainingSample, VcGcnTrainConfig};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    /// Slope 0.01 for negative inputs.
    #[default]
    LeakyRelu,
    Tanh,
    Identity,
}

const LEAK: f64 = 0.01;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu if x > 0.0 => x,
            Activation::LeakyRelu => LEAK * x,
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the input `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu if x > 0.0 => 1.0,
            Activation::LeakyRelu => LEAK,
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

//! Pipeline configuration: a TOML file with nested sections.
//!
//! Relative paths inside the file are resolved against the file's directory.
//! Environment variables override only the output directory and the thread
//! count; command-line flags override both.

use std::path::{Path, PathBuf};

use caricature::registration::NicpConfig;
use caricature::vcgcn::{LossWeights, VcGcnTrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ENV_OUT: &str = "CARICATURE_OUT";
pub const ENV_THREADS: &str = "CARICATURE_THREADS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub paths: Paths,
    pub marching: Marching,
    pub detector: Detector,
    pub nicp: NicpSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    pub basis: Option<PathBuf>,
    /// Template mesh; the basis mean when absent.
    pub template: Option<PathBuf>,
    /// Landmark-to-template-vertex binding.
    pub binding: Option<PathBuf>,
    /// Landmark scheme; the built-in 44-point scheme when absent.
    pub scheme: Option<PathBuf>,
    /// VC-GCN parameters; an untrained network (identity refinement) when absent.
    pub vcgcn: Option<PathBuf>,
    pub masks: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            basis: None,
            template: None,
            binding: None,
            scheme: None,
            vcgcn: None,
            masks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Marching {
    /// Lattice nodes per axis when rasterizing a mesh oracle.
    pub resolution: usize,
    /// Padding around the oracle mesh, as a fraction of each extent.
    pub padding: f64,
    pub iso: f64,
    /// Square image size of the virtual camera rig.
    pub image_size: usize,
}

impl Default for Marching {
    fn default() -> Self {
        Self { resolution: 128, padding: 0.05, iso: 0.5, image_size: 128 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Detector {
    /// Gaussian pixel noise of the stub detector.
    pub noise_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NicpSection {
    pub stiffness: Vec<f64>,
    pub landmark_weight: f64,
    pub gamma: f64,
    pub max_inner: usize,
    pub motion_threshold: f64,
    pub max_distance: f64,
    pub max_angle_deg: f64,
    pub rigid_init: bool,
    pub outer_rounds: usize,
    pub pca_clamp: Option<f64>,
    pub pose_compensated_snap: bool,
}

impl Default for NicpSection {
    fn default() -> Self {
        let d = NicpConfig::default();
        Self {
            stiffness: d.stiffness,
            landmark_weight: d.landmark_weight,
            gamma: d.gamma,
            max_inner: d.max_inner,
            motion_threshold: d.motion_threshold,
            max_distance: d.max_distance,
            max_angle_deg: d.max_angle_deg,
            rigid_init: d.rigid_init,
            outer_rounds: d.outer_rounds,
            pca_clamp: d.pca_clamp,
            pose_compensated_snap: d.pose_compensated_snap,
        }
    }
}

impl NicpSection {
    pub fn to_config(&self) -> NicpConfig {
        NicpConfig {
            stiffness: self.stiffness.clone(),
            landmark_weight: self.landmark_weight,
            gamma: self.gamma,
            max_inner: self.max_inner,
            motion_threshold: self.motion_threshold,
            max_distance: self.max_distance,
            max_angle_deg: self.max_angle_deg,
            rigid_init: self.rigid_init,
            outer_rounds: self.outer_rounds,
            pca_clamp: self.pca_clamp,
            pose_compensated_snap: self.pose_compensated_snap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub cosine_decay: bool,
    pub detect_weight: f64,
    pub projection_weight: f64,
    pub landmark_weight: f64,
    /// Share of the corpus held out for validation.
    pub holdout_fraction: f64,
    /// Stub-detector noise on training detections; exact detections give no gradient.
    pub noise_px: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = VcGcnTrainConfig::default();
        Self {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            cosine_decay: d.cosine_decay,
            detect_weight: d.weights.detect,
            projection_weight: d.weights.projection,
            landmark_weight: d.weights.landmarks,
            holdout_fraction: 0.2,
            noise_px: 2.0,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self) -> VcGcnTrainConfig {
        VcGcnTrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            cosine_decay: self.cosine_decay,
            weights: LossWeights {
                detect: self.detect_weight,
                projection: self.projection_weight,
                landmarks: self.landmark_weight,
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub align: bool,
    pub sample_count: usize,
    /// Region of the mask file used for the face-only score.
    pub face_region: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { align: true, sample_count: 2000, face_region: "face".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub count: usize,
    /// Random heads behind the shipped basis.
    pub basis_heads: usize,
    pub basis_seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { count: 10, basis_heads: 60, basis_seed: 0 }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Reads a config file and anchors its relative paths at the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            config.paths.anchor(dir);
        }
        Ok(config)
    }

    /// Flag over environment over file.
    pub fn apply_overrides(
        &mut self,
        out: Option<PathBuf>,
        threads: Option<usize>,
        seed: Option<u64>,
        env: impl Fn(&str) -> Option<String>,
    ) -> CliResult<()> {
        if let Some(out) = out.or_else(|| env(ENV_OUT).map(PathBuf::from)) {
            self.paths.out = out;
        }
        let env_threads = env(ENV_THREADS)
            .map(|t| t.trim().parse::<usize>().map_err(|_| CliError::Config(format!("{ENV_THREADS}={t:?} is not a count"))))
            .transpose()?;
        if let Some(t) = threads.or(env_threads) {
            self.threads = t;
        }
        if let Some(seed) = seed {
            self.seed = seed;
        }
        Ok(())
    }
}

impl Paths {
    fn anchor(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.out);
        for p in [
            &mut self.basis,
            &mut self.template,
            &mut self.binding,
            &mut self.scheme,
            &mut self.vcgcn,
            &mut self.masks,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

/// Fails with a config error naming `what` unless `path` is set and exists.
pub fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("no {what} file configured")))?;
    existing(p, what)
}

pub fn existing<'a>(path: &'a Path, what: &str) -> CliResult<&'a Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Config(format!("{what} file {} does not exist", path.display())))
    }
}

//! Loading configured resources and writing outputs, each tagged with a stage.

use std::fs;
use std::path::{Path, PathBuf};

use caricature::mesh::{obj, Mesh};
use caricature::morphable::ShapeBasis;
use caricature::multiview::{LandmarkRecords, LandmarkScheme, LandmarkSet2D, ViewId};
use caricature::registration::LandmarkBinding;
use caricature::vcgcn::{VcGcnConfig, VcGcnParams};
use caricature::Error;
use rayon::prelude::*;

use crate::config::{existing, required, PipelineConfig};
use crate::error::{CliError, CliResult, StageContext};

pub fn out_dir(config: &PipelineConfig) -> CliResult<&Path> {
    let dir = config.paths.out.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).stage("create output directory")?;
    Ok(dir)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e)).stage("write output")
}

pub fn write_mesh(path: &Path, mesh: &Mesh) -> CliResult<()> {
    obj::save_mesh(mesh, path).stage("write output")
}

pub fn read_mesh(path: &Path, what: &str) -> CliResult<Mesh> {
    obj::load_mesh(existing(path, what)?).stage("read mesh")
}

pub fn scheme(config: &PipelineConfig) -> CliResult<LandmarkScheme> {
    match &config.paths.scheme {
        Some(p) => LandmarkScheme::load(existing(p, "landmark scheme")?).stage("read landmark scheme"),
        None => Ok(LandmarkScheme::default()),
    }
}

pub fn basis(config: &PipelineConfig) -> CliResult<ShapeBasis> {
    ShapeBasis::load(required(&config.paths.basis, "basis")?).stage("read basis")
}

pub fn template(config: &PipelineConfig, basis: &ShapeBasis) -> CliResult<Mesh> {
    match &config.paths.template {
        Some(p) => read_mesh(p, "template"),
        None => Ok(basis.mean_mesh()),
    }
}

pub fn binding(config: &PipelineConfig, scheme: &LandmarkScheme, template: &Mesh) -> CliResult<LandmarkBinding> {
    let binding = LandmarkBinding::load(required(&config.paths.binding, "landmark binding")?, scheme)
        .stage("read landmark binding")?;
    binding.check_template(template).stage("read landmark binding")?;
    Ok(binding)
}

/// Configured network parameters, or an untrained network whose refinement is
/// the identity.
pub fn vcgcn_params(config: &PipelineConfig) -> CliResult<VcGcnParams> {
    match &config.paths.vcgcn {
        Some(p) => VcGcnParams::load(existing(p, "VC-GCN parameter")?).stage("read VC-GCN parameters"),
        None => VcGcnParams::random(VcGcnConfig::default(), config.seed).stage("initialize VC-GCN"),
    }
}

pub fn landmarks(path: &Path, scheme: &LandmarkScheme) -> CliResult<LandmarkRecords> {
    LandmarkRecords::load(existing(path, "landmark")?, scheme).stage("read landmarks")
}

/// Detections ordered front, left, right; every view must be present.
pub fn three_views(sets: Vec<LandmarkSet2D>) -> CliResult<[LandmarkSet2D; 3]> {
    let mut by_view: [Option<LandmarkSet2D>; 3] = Default::default();
    for s in sets {
        let i = s.view.index();
        by_view[i] = Some(s);
    }
    let pick = |s: Option<LandmarkSet2D>, v: ViewId| {
        s.ok_or_else(|| Error::Format(format!("no 2D landmarks for the {v} view"))).stage("read landmarks")
    };
    let [f, l, r] = by_view;
    Ok([pick(f, ViewId::Front)?, pick(l, ViewId::Left)?, pick(r, ViewId::Right)?])
}

/// `.obj` files of a directory in name order.
pub fn list_meshes(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(existing(dir, "mesh directory")?).map_err(|e| Error::io(dir, e)).stage("list meshes")?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e)).stage("list meshes")?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no .obj meshes in {}", dir.display())));
    }
    Ok(paths)
}

/// Loads meshes in parallel and checks they share the first mesh's topology,
/// naming the offending file otherwise.
pub fn load_corpus(paths: &[PathBuf]) -> CliResult<Vec<Mesh>> {
    let meshes = paths
        .par_iter()
        .map(|p| obj::load_mesh(p))
        .collect::<caricature::Result<Vec<_>>>()
        .stage("read mesh")?;
    for (mesh, path) in meshes.iter().zip(paths).skip(1) {
        mesh.check_same_topology(&meshes[0])
            .map_err(|e| Error::TopologyMismatch(format!("{} against {}: {e}", path.display(), paths[0].display())))
            .stage("check topology")?;
    }
    Ok(meshes)
}

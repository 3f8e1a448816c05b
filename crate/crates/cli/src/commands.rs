use std::fmt::Write as _;
use std::path::Path;

use caricature::implicit::{marching_cubes, rasterize_field, GridSpec, MeshOracle, VoxelGrid, FeatureVolumeInput};
use caricature::mesh::obj::format_sig9;
use caricature::mesh::{Mesh, SpatialIndex};
use caricature::metrics::{align_to, mean_surface_distance, mpjpe, p2s, reports_summary, reports_to_csv, MetricReport, P2sOptions};
use caricature::morphable::{interpolate, save_region_masks, shape_variance, load_region_masks, BasisSize, RegionMask, ShapeBasis};
use caricature::multiview::{
    default_rig, initialize_landmarks, InitialLandmarks, LandmarkRecords, LandmarkScheme, LandmarkSet2D, LandmarkSet3D, Rig,
    StubDetector, ViewId,
};
use caricature::registration::{diagnostics_csv, register_with_pca, LandmarkBinding, LandmarkPairs, RegistrationResult};
use caricature::synth::{self, HEAD_LEVELS};
use caricature::vcgcn::{train_vcgcn, vcgcn_forward, VcGcnGraphs, VcGcnInput, VcGcnParams};
use caricature::Error;
use rayon::prelude::*;

use crate::config::{existing, PipelineConfig};
use crate::error::{CliError, CliResult, StageContext};
use crate::files;
use crate::{
    BuildBasisArgs, Command, DetectArgs, EvalArgs, InterpolateArgs, ReconstructArgs, RegisterArgs, SynthArgs, TrainArgs,
    VarianceArgs,
};

/// Runs one subcommand and returns its human-readable summary.
pub fn dispatch(config: &PipelineConfig, command: &Command) -> CliResult<String> {
    match command {
        Command::Reconstruct(a) => reconstruct(config, a),
        Command::Register(a) => register(config, a),
        Command::BuildBasis(a) => build_basis(config, a),
        Command::DetectLandmarks(a) => detect_landmarks(config, a),
        Command::Eval(a) => eval(config, a),
        Command::Variance(a) => variance(config, a),
        Command::Interpolate(a) => interpolate_meshes(config, a),
        Command::Synth(a) => synth_corpus(config, a),
        Command::TrainVcgcn(a) => train(config, a),
    }
}

/// 2D detections from a landmark file: its own 2D records when present,
/// otherwise its 3D records seen through the stub detector.
fn detections(
    records: &LandmarkRecords,
    rig: &Rig,
    scheme: &LandmarkScheme,
    config: &PipelineConfig,
) -> CliResult<[LandmarkSet2D; 3]> {
    if records.views.iter().any(Option::is_some) {
        return files::three_views(records.detections());
    }
    let truth = records
        .points3d
        .as_ref()
        .ok_or_else(|| Error::Format("landmark file has neither 2D nor 3D records".into()))
        .stage("read landmarks")?;
    let detector = StubDetector { noise_px: config.detector.noise_px, seed: config.seed };
    detector.detect(truth, rig, scheme).stage("2D landmark detection")
}

struct Landmarks {
    initial: InitialLandmarks,
    refined: LandmarkSet3D,
}

/// Lifting, then network refinement unless `refine` is off.
fn landmarks_on(
    mesh: &Mesh,
    index: &SpatialIndex,
    detected: &[LandmarkSet2D; 3],
    rig: &Rig,
    scheme: &LandmarkScheme,
    params: Option<&VcGcnParams>,
) -> CliResult<Landmarks> {
    let initial = initialize_landmarks(mesh, index, detected, rig, scheme).stage("landmark lifting")?;
    let refined = match params {
        None => initial.global.clone(),
        Some(params) => {
            let maps = synth::render_features(mesh, index, rig).stage("feature rendering")?;
            let input = VcGcnInput::from_views(&maps, detected, &initial).stage("landmark refinement")?;
            let graphs = VcGcnGraphs::from_scheme(scheme).stage("landmark refinement")?;
            vcgcn_forward(&graphs, params, &input).stage("landmark refinement")?
        }
    };
    Ok(Landmarks { initial, refined })
}

fn landmark_file(points: &LandmarkSet3D, detected: &[LandmarkSet2D; 3], scheme: &LandmarkScheme) -> String {
    let records = LandmarkRecords {
        points3d: Some(points.clone()),
        views: detected.clone().map(Some),
    };
    records.to_text(scheme)
}

fn rounds_csv(result: &RegistrationResult) -> String {
    let mut out = String::from("round,p2s_nicp,p2s_pca\n");
    for r in &result.rounds {
        let _ = writeln!(out, "{},{:.9e},{:.9e}", r.round, r.p2s_nicp, r.p2s_pca);
    }
    out
}

fn register_stage(
    template: &Mesh,
    target: &Mesh,
    binding: &LandmarkBinding,
    landmarks: &LandmarkSet3D,
    basis: &ShapeBasis,
    config: &PipelineConfig,
) -> CliResult<RegistrationResult> {
    let pairs = LandmarkPairs::new(&binding.vertex_ids, &landmarks.points).stage("registration")?;
    register_with_pca(template, target, &pairs, basis, &config.nicp.to_config()).stage("registration")
}

fn write_registration(out: &Path, result: &RegistrationResult) -> CliResult<()> {
    files::write_mesh(&out.join("nicp.obj"), &result.nicp)?;
    files::write_mesh(&out.join("pca.obj"), &result.pca)?;
    files::write_text(&out.join("diagnostics.csv"), &diagnostics_csv(&result.stages))?;
    files::write_text(&out.join("rounds.csv"), &rounds_csv(result))
}

fn registration_summary(result: &RegistrationResult) -> String {
    let mut s = String::new();
    for r in &result.rounds {
        let _ = writeln!(s, "round {}: p2s nicp {:.6e}, pca {:.6e}", r.round, r.p2s_nicp, r.p2s_pca);
    }
    s
}

pub fn reconstruct(config: &PipelineConfig, args: &ReconstructArgs) -> CliResult<String> {
    let scheme = files::scheme(config)?;
    let basis = files::basis(config)?;
    let template = files::template(config, &basis)?;
    let binding = files::binding(config, &scheme, &template)?;
    let params = files::vcgcn_params(config)?;
    let records = files::landmarks(&args.landmarks, &scheme)?;
    let rig_file = args.rig.as_deref().map(|p| existing(p, "rig")).transpose()?;

    let grid = match (&args.mesh, &args.grid) {
        (Some(mesh), _) => {
            let mesh = files::read_mesh(mesh, "input mesh")?;
            let oracle = MeshOracle::new(&mesh).stage("occupancy oracle")?;
            let m = &config.marching;
            let spec = GridSpec::around(&mesh.bounding_box(), m.padding, m.resolution).stage("occupancy grid")?;
            log::info!("rasterizing a {}^3 occupancy grid", m.resolution);
            rasterize_field(&oracle, &spec).stage("occupancy grid")?
        }
        (None, Some(grid)) => VoxelGrid::load(existing(grid, "occupancy grid")?).stage("read occupancy grid")?,
        (None, None) => return Err(CliError::Config("reconstruct needs --mesh or --grid".into())),
    };
    let pifu = marching_cubes(&grid, config.marching.iso).stage("surface extraction")?;
    log::info!("extracted surface with {} vertices", pifu.vertices.len());
    let index = SpatialIndex::build(&pifu);
    let rig = match rig_file {
        Some(p) => Rig::load(p).stage("read rig")?,
        None => {
            let size = config.marching.image_size;
            default_rig(&pifu, size, size).stage("camera rig")?
        }
    };
    let detected = detections(&records, &rig, &scheme, config)?;
    let lm = landmarks_on(&pifu, &index, &detected, &rig, &scheme, Some(&params))?;
    let result = register_stage(&template, &pifu, &binding, &lm.refined, &basis, config)?;

    let out = files::out_dir(config)?;
    files::write_mesh(&out.join("pifu.obj"), &pifu)?;
    files::write_text(&out.join("landmarks.txt"), &landmark_file(&lm.refined, &detected, &scheme))?;
    files::write_text(&out.join("rig.txt"), &rig.to_text())?;
    write_registration(out, &result)?;
    let mut report = format!(
        "extracted surface: {} vertices, {} faces\nlandmark lifts falling back to closest point: {}\n",
        pifu.vertices.len(),
        pifu.faces.len(),
        lm.initial.fallbacks
    );
    report.push_str(&registration_summary(&result));
    files::write_text(&out.join("report.txt"), &report)?;
    Ok(report)
}

pub fn register(config: &PipelineConfig, args: &RegisterArgs) -> CliResult<String> {
    let scheme = files::scheme(config)?;
    let basis = files::basis(config)?;
    let template = files::template(config, &basis)?;
    let binding = files::binding(config, &scheme, &template)?;
    let target = files::read_mesh(&args.target, "target mesh")?;
    let records = files::landmarks(&args.landmarks, &scheme)?;
    let truth = records
        .points3d
        .ok_or_else(|| Error::Format("landmark file has no 3D records".into()))
        .stage("read landmarks")?;
    let result = register_stage(&template, &target, &binding, &truth, &basis, config)?;
    let out = files::out_dir(config)?;
    write_registration(out, &result)?;
    Ok(registration_summary(&result))
}

pub fn build_basis(config: &PipelineConfig, args: &BuildBasisArgs) -> CliResult<String> {
    let paths = files::list_meshes(&args.meshes)?;
    let meshes = files::load_corpus(&paths)?;
    let size = match (args.components, args.variance) {
        (Some(d), _) => BasisSize::Components(d),
        (None, Some(f)) => BasisSize::VarianceFraction(f),
        (None, None) => BasisSize::default(),
    };
    let basis = ShapeBasis::build(&meshes, size).stage("basis construction")?;
    let mut table = String::from("component,eigenvalue,cumulative_fraction\n");
    for (i, (l, f)) in basis.eigenvalues().iter().zip(basis.explained_variance()).enumerate() {
        let _ = writeln!(table, "{},{:.9e},{:.6}", i + 1, l, f);
    }
    let out = files::out_dir(config)?;
    basis.save(out.join("basis.bin")).stage("write output")?;
    files::write_text(&out.join("basis_variance.csv"), &table)?;
    Ok(format!("{} meshes, {} components\n{table}", meshes.len(), basis.dim()))
}

pub fn detect_landmarks(config: &PipelineConfig, args: &DetectArgs) -> CliResult<String> {
    let scheme = files::scheme(config)?;
    let params = if args.no_refine { None } else { Some(files::vcgcn_params(config)?) };
    let mesh = files::read_mesh(&args.mesh, "mesh")?;
    let records = files::landmarks(&args.landmarks, &scheme)?;
    let rig = match &args.rig {
        Some(p) => Rig::load(existing(p, "rig")?).stage("read rig")?,
        None => {
            let size = config.marching.image_size;
            default_rig(&mesh, size, size).stage("camera rig")?
        }
    };
    let index = SpatialIndex::build(&mesh);
    let detected = detections(&records, &rig, &scheme, config)?;
    let lm = landmarks_on(&mesh, &index, &detected, &rig, &scheme, params.as_ref())?;
    let out = files::out_dir(config)?;
    files::write_text(&out.join("landmarks.txt"), &landmark_file(&lm.refined, &detected, &scheme))?;
    files::write_text(&out.join("rig.txt"), &rig.to_text())?;
    let mut summary = format!("{} landmarks, {} closest-point fallbacks", lm.refined.len(), lm.initial.fallbacks);
    if let Some(truth) = &records.points3d {
        let e = mpjpe(&lm.refined, truth, scheme.root()).stage("evaluation")?;
        let _ = write!(summary, ", mpjpe against file 3D records {e:.6e}");
    }
    Ok(summary)
}

pub fn eval(config: &PipelineConfig, args: &EvalArgs) -> CliResult<String> {
    let pred = files::read_mesh(&args.pred, "predicted mesh")?;
    let gt = files::read_mesh(&args.gt, "ground-truth mesh")?;
    let options = P2sOptions {
        align: config.eval.align && !args.no_align,
        sample_count: config.eval.sample_count,
        seed: config.seed,
    };
    let mut reports = vec![];
    let head = p2s(&pred, &gt, &options).stage("evaluation")?;
    reports.push(MetricReport::new("p2s_head", head, options.align, pred.vertices.len()).stage("evaluation")?);

    if let Some(path) = &config.paths.masks {
        let masks = load_region_masks(existing(path, "region mask")?).stage("read region masks")?;
        let face = masks
            .iter()
            .find(|m| m.name == config.eval.face_region)
            .ok_or_else(|| CliError::Config(format!("mask file has no {:?} region", config.eval.face_region)))?;
        face.validate(pred.vertices.len()).stage("evaluation")?;
        let points: Vec<_> = if options.align {
            let t = align_to(&pred, &gt, &options).stage("evaluation")?;
            face.indices.iter().map(|&i| t.apply(&pred.vertices[i])).collect()
        } else {
            face.indices.iter().map(|&i| pred.vertices[i]).collect()
        };
        let value = mean_surface_distance(&points, &SpatialIndex::build(&gt));
        reports.push(MetricReport::new("p2s_face", value, options.align, points.len()).stage("evaluation")?);
    }

    if let (Some(p), Some(g)) = (&args.pred_landmarks, &args.gt_landmarks) {
        let scheme = files::scheme(config)?;
        let get = |path: &Path| -> CliResult<LandmarkSet3D> {
            files::landmarks(path, &scheme)?
                .points3d
                .ok_or_else(|| Error::Format(format!("{} has no 3D records", path.display())))
                .stage("read landmarks")
        };
        let (p, g) = (get(p)?, get(g)?);
        let value = mpjpe(&p, &g, scheme.root()).stage("evaluation")?;
        reports.push(MetricReport::new("mpjpe", value, false, p.len()).stage("evaluation")?);
    }

    let out = files::out_dir(config)?;
    files::write_text(&out.join("eval.csv"), &reports_to_csv(&reports))?;
    Ok(reports_summary(&reports))
}

pub fn variance(config: &PipelineConfig, args: &VarianceArgs) -> CliResult<String> {
    let mask_path = args
        .masks
        .as_ref()
        .or(config.paths.masks.as_ref())
        .ok_or_else(|| CliError::Config("no region mask file given".into()))?;
    let masks = load_region_masks(existing(mask_path, "region mask")?).stage("read region masks")?;
    let meshes = files::load_corpus(&files::list_meshes(&args.meshes)?)?;
    let n = meshes[0].vertices.len();
    let mut rows = vec![RegionMask::global(n)];
    rows.extend(masks);
    let mut table = String::from("region,vertices,variance\n");
    for mask in &rows {
        mask.validate(n).stage("shape variance")?;
        let v = shape_variance(&meshes, mask).stage("shape variance")?;
        let _ = writeln!(table, "{},{},{:.9e}", mask.name, mask.indices.len(), v);
    }
    files::write_text(&files::out_dir(config)?.join("variance.csv"), &table)?;
    Ok(table)
}

pub fn interpolate_meshes(config: &PipelineConfig, args: &InterpolateArgs) -> CliResult<String> {
    let a = files::read_mesh(&args.a, "first mesh")?;
    let b = files::read_mesh(&args.b, "second mesh")?;
    let out = files::out_dir(config)?;
    let mut written = String::new();
    for &t in &args.t {
        let mesh = interpolate(&a, &b, t).stage("interpolation")?;
        let name = format!("interp_{}.obj", format_sig9(t));
        files::write_mesh(&out.join(&name), &mesh)?;
        let _ = writeln!(written, "{name}");
    }
    Ok(written)
}

/// Corpus layout under the output directory:
/// `basis.bin`, `template.obj`, `binding.txt`, `scheme.txt`, `masks.txt`,
/// `pipeline.toml` (a config pointing at those files), `manifest.csv`, and per
/// head `heads/<name>.obj`, `.landmarks.txt`, `.rig.txt` and one
/// `.<view>.features` stub per view.
pub fn synth_corpus(config: &PipelineConfig, args: &SynthArgs) -> CliResult<String> {
    let count = args.count.unwrap_or(config.synth.count);
    let s = &config.synth;
    let basis = synth::synthetic_basis(s.basis_heads, BasisSize::default(), s.basis_seed).stage("basis construction")?;
    let scheme = LandmarkScheme::default();
    let ids = synth::landmark_vertex_ids(HEAD_LEVELS);
    let heads = synth::blend_corpus(&basis, &ids, count, config.seed).stage("head generation")?;

    let out = files::out_dir(config)?;
    let head_dir = out.join("heads");
    std::fs::create_dir_all(&head_dir).map_err(|e| Error::io(&head_dir, e)).stage("create output directory")?;
    basis.save(out.join("basis.bin")).stage("write output")?;
    let template = basis.mean_mesh();
    files::write_mesh(&out.join("template.obj"), &template)?;
    let binding = LandmarkBinding::new(ids, &scheme).stage("landmark binding")?;
    files::write_text(&out.join("binding.txt"), &binding.to_text(&scheme))?;
    files::write_text(&out.join("scheme.txt"), &scheme.to_text())?;
    save_region_masks(&synth::region_masks(HEAD_LEVELS), out.join("masks.txt")).stage("write output")?;

    let mut pipeline = config.clone();
    pipeline.paths = crate::config::Paths {
        out: "out".into(),
        basis: Some("basis.bin".into()),
        template: Some("template.obj".into()),
        binding: Some("binding.txt".into()),
        scheme: Some("scheme.txt".into()),
        vcgcn: None,
        masks: Some("masks.txt".into()),
    };
    files::write_text(&out.join("pipeline.toml"), &pipeline.to_toml())?;

    let noise = config.detector.noise_px;
    heads
        .par_iter()
        .enumerate()
        .map(|(i, head)| -> CliResult<()> {
            let stem = head_dir.join(format!("head_{i:03}"));
            let with = |ext: &str| stem.with_extension(ext);
            let index = SpatialIndex::build(&head.mesh);
            let rig = default_rig(&head.mesh, synth::IMAGE_SIZE, synth::IMAGE_SIZE).stage("camera rig")?;
            let detector = StubDetector { noise_px: noise, seed: config.seed.wrapping_add(i as u64) };
            let detected = detector.detect(&head.landmarks, &rig, &scheme).stage("2D landmark detection")?;
            let maps = synth::render_features(&head.mesh, &index, &rig).stage("feature rendering")?;
            files::write_mesh(&with("obj"), &head.mesh)?;
            files::write_text(&with("landmarks.txt"), &landmark_file(&head.landmarks, &detected, &scheme))?;
            files::write_text(&with("rig.txt"), &rig.to_text())?;
            for (map, view) in maps.into_iter().zip(ViewId::ALL) {
                let stub = FeatureVolumeInput::new(map, rig.camera(view).clone()).stage("feature rendering")?;
                stub.save(with(&format!("{}.features", view.name()))).stage("write output")?;
            }
            Ok(())
        })
        .collect::<CliResult<Vec<()>>>()?;

    let mut manifest = format!(
        "# basis_seed={} basis_heads={} components={} seed={} noise_px={}\nhead,in_span,coefficients\n",
        s.basis_seed,
        s.basis_heads,
        basis.dim(),
        config.seed,
        format_sig9(noise)
    );
    for (i, head) in heads.iter().enumerate() {
        let coeffs = head.coefficients.as_ref().map(|c| c.a.iter().map(|&a| format_sig9(a)).collect::<Vec<_>>());
        let _ = writeln!(
            manifest,
            "head_{i:03},{},{}",
            coeffs.is_some(),
            coeffs.map(|c| c.join(" ")).unwrap_or_default()
        );
    }
    files::write_text(&out.join("manifest.csv"), &manifest)?;
    Ok(format!("{count} heads, basis with {} components, written to {}", basis.dim(), out.display()))
}

pub fn train(config: &PipelineConfig, args: &TrainArgs) -> CliResult<String> {
    let scheme = files::scheme(config)?;
    let head_dir = args.corpus.join("heads");
    let paths = files::list_meshes(&head_dir)?;
    let noise = config.train.noise_px;
    let samples = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let mesh = files::read_mesh(path, "training mesh")?;
            let truth = files::landmarks(&path.with_extension("landmarks.txt"), &scheme)?
                .points3d
                .ok_or_else(|| Error::Format(format!("{} lacks 3D landmarks", path.display())))
                .stage("read landmarks")?;
            let detector = StubDetector { noise_px: noise, seed: config.seed.wrapping_add(i as u64) };
            synth::training_sample(&mesh, &truth, &scheme, &detector).stage("training data")
        })
        .collect::<CliResult<Vec<_>>>()?;
    let held = ((samples.len() as f64 * config.train.holdout_fraction).floor() as usize).min(samples.len() - 1);
    let (train_set, holdout) = samples.split_at(samples.len() - held);

    let params = files::vcgcn_params(config)?;
    let graphs = VcGcnGraphs::from_scheme(&scheme).stage("training")?;
    let mut train_config = config.train.to_config();
    if let Some(e) = args.epochs {
        train_config.epochs = e;
    }
    let trained = train_vcgcn(&graphs, &params, train_set, holdout, &train_config).stage("training")?;

    let mut trace = String::from("epoch,total,detect,projection,landmarks,train_mpjpe,holdout_mpjpe\n");
    for r in &trained.trace {
        let l = &r.loss;
        let hold = r.holdout_mpjpe.map(|h| format!("{h:.9e}")).unwrap_or_default();
        let _ = writeln!(
            trace,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{hold}",
            r.epoch, l.total, l.detect, l.projection, l.landmarks, r.train_mpjpe
        );
    }
    let out = files::out_dir(config)?;
    trained.params.save(out.join("vcgcn.bin")).stage("write output")?;
    files::write_text(&out.join("train_trace.csv"), &trace)?;
    let (first, last) = (&trained.trace[0], trained.trace.last().expect("trace is never empty"));
    Ok(format!(
        "{} training / {} held-out heads; loss {:.6e} -> {:.6e}; train mpjpe {:.6e} -> {:.6e}",
        train_set.len(),
        holdout.len(),
        first.loss.total,
        last.loss.total,
        first.train_mpjpe,
        last.train_mpjpe
    ))
}

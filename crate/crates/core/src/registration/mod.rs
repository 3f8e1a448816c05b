//! Landmark-guided optimal-step non-rigid ICP, alternated with projection
//! onto a morphable basis.

mod binding;
mod solve;

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

pub use binding::LandmarkBinding;
pub use solve::{
    apply_transforms, identity_transforms, nicp_step, nicp_step_dense, step_objective, LandmarkPairs, StepSolution,
    StepWeights, DENSE_VERTEX_LIMIT,
};

use crate::error::{Error, Result};
use crate::mesh::{vertex_normals, Mesh, SpatialIndex};
use crate::metrics::{mean_surface_distance, procrustes, SimilarityTransform};
use crate::morphable::ShapeBasis;

#[derive(Debug, Clone, PartialEq)]
pub struct NicpConfig {
    /// Strictly decreasing stiffness weights, one stage each.
    pub stiffness: Vec<f64>,
    pub landmark_weight: f64,
    pub gamma: f64,
    /// Inner iteration cap per stiffness stage.
    pub max_inner: usize,
    /// Stop a stage once no vertex moves farther than this fraction of the diagonal.
    pub motion_threshold: f64,
    /// Prune pairs farther apart than this fraction of the diagonal.
    pub max_distance: f64,
    /// Prune pairs whose normals differ by more than this many degrees.
    pub max_angle_deg: f64,
    /// Similarity-align the template to the target landmarks before deforming.
    pub rigid_init: bool,
    /// NICP and PCA rounds in [`register_with_pca`].
    pub outer_rounds: usize,
    /// Optional coefficient clamp, in standard deviations, for the PCA projection.
    pub pca_clamp: Option<f64>,
    /// Undo the landmark similarity before projecting and reapply it afterwards,
    /// so a posed target is snapped in the frame the basis was built in.
    /// Off by default: the projection then acts on the mesh as is.
    pub pose_compensated_snap: bool,
}

impl Default for NicpConfig {
    fn default() -> Self {
        Self {
            stiffness: vec![50.0, 20.0, 5.0, 2.0, 0.8],
            landmark_weight: 10.0,
            gamma: 1.0,
            max_inner: 10,
            motion_threshold: 1e-5,
            max_distance: 0.1,
            max_angle_deg: 60.0,
            rigid_init: true,
            outer_rounds: 3,
            pca_clamp: None,
            pose_compensated_snap: false,
        }
    }
}

impl NicpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.stiffness.is_empty() {
            return bad("stiffness schedule is empty".into());
        }
        if self.stiffness.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return bad(format!("stiffness values must be positive: {:?}", self.stiffness));
        }
        if self.stiffness.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("stiffness schedule must strictly decrease: {:?}", self.stiffness));
        }
        if !(self.landmark_weight >= 0.0 && self.landmark_weight.is_finite()) {
            return bad(format!("landmark weight {} must be non-negative", self.landmark_weight));
        }
        if !(self.gamma > 0.0) || self.max_inner == 0 || self.outer_rounds == 0 {
            return bad("gamma, inner iterations and outer rounds must be positive".into());
        }
        if !(self.max_distance > 0.0) || !(self.max_angle_deg > 0.0) || !(self.motion_threshold >= 0.0) {
            return bad("pruning and motion thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Closest target point per template vertex with a 0/1 weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    pub targets: Vec<Point3<f64>>,
    pub weights: Vec<f64>,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Exact pairs with unit weight.
    pub fn exact(points: &[Point3<f64>]) -> Self {
        Self { targets: points.to_vec(), weights: vec![1.0; points.len()] }
    }

    pub fn pruned_fraction(&self) -> f64 {
        if self.weights.is_empty() {
            return 0.0;
        }
        self.weights.iter().filter(|&&w| w == 0.0).count() as f64 / self.weights.len() as f64
    }
}

/// Absolute pruning limits for [`build_correspondences`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneThresholds {
    pub max_distance: f64,
    pub max_angle_deg: f64,
}

/// Pairs each vertex with its closest target surface point; pairs that are too
/// far apart or whose normals disagree get weight 0. Zero normals skip the angle test.
pub fn build_correspondences(
    deformed: &Mesh,
    target: &Mesh,
    index: &SpatialIndex,
    thresholds: &PruneThresholds,
) -> Correspondences {
    let normals = vertex_normals(deformed);
    let cos_limit = thresholds.max_angle_deg.to_radians().cos();
    let pairs: Vec<(Point3<f64>, f64)> = deformed
        .vertices
        .par_iter()
        .zip(&normals)
        .map(|(p, n)| match index.closest_point(p) {
            None => (*p, 0.0),
            Some(c) => {
                let m = target.face_cross(c.face);
                let len = m.norm();
                let agree = n.norm() == 0.0 || len == 0.0 || n.dot(&m) / len >= cos_limit;
                let keep = c.distance <= thresholds.max_distance && agree;
                (c.point, if keep { 1.0 } else { 0.0 })
            }
        })
        .collect();
    Correspondences {
        targets: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Least-squares similarity taking template landmarks onto target landmarks,
/// and the template moved by it.
pub fn rigid_landmark_align(
    template: &Mesh,
    template_landmarks: &[Point3<f64>],
    target_landmarks: &[Point3<f64>],
) -> Result<(SimilarityTransform, Mesh)> {
    let t = procrustes(template_landmarks, target_landmarks)?;
    let moved = t.apply_mesh(template);
    Ok((t, moved))
}

/// Summary of one stiffness stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDiagnostics {
    pub round: usize,
    pub alpha: f64,
    pub iterations: usize,
    /// Mean distance from deformed vertices to the target surface.
    pub p2s: f64,
    pub landmark_rms: f64,
    pub pruned_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NicpResult {
    pub mesh: Mesh,
    pub stages: Vec<StageDiagnostics>,
}

/// Centroid shift and scale mapping the template to unit diagonal.
///
/// The diagonal is measured on the template as given and carried through the
/// landmark similarity, so a rotated target does not change the working scale.
#[derive(Debug, Clone, Copy)]
struct Frame {
    center: Vector3<f64>,
    scale: f64,
}

impl Frame {
    fn of(mesh: &Mesh, d: f64) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::Degenerate("template has zero extent".into()));
        }
        Ok(Self { center: mesh.centroid().coords, scale: 1.0 / d })
    }

    fn to(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p.coords - self.center) * self.scale)
    }

    fn from(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords / self.scale + self.center)
    }
}

fn landmark_rms(mesh: &Mesh, landmarks: &LandmarkPairs) -> f64 {
    if landmarks.is_empty() {
        return 0.0;
    }
    let sum: f64 = landmarks
        .vertex_ids
        .iter()
        .zip(landmarks.targets)
        .map(|(&v, t)| (mesh.vertices[v] - t).norm_squared())
        .sum();
    (sum / landmarks.len() as f64).sqrt()
}

fn check_landmarks(template: &Mesh, landmarks: &LandmarkPairs) -> Result<()> {
    if let Some(&v) = landmarks.vertex_ids.iter().find(|&&v| v >= template.vertices.len()) {
        return Err(Error::InvalidArgument(format!("landmark vertex {v} out of range")));
    }
    Ok(())
}

/// Deforms `template` onto `target` through the stiffness schedule.
pub fn nicp(template: &Mesh, target: &Mesh, landmarks: &LandmarkPairs, config: &NicpConfig) -> Result<NicpResult> {
    config.validate()?;
    check_landmarks(template, landmarks)?;
    if target.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let index = SpatialIndex::build(target);
    let (start, pose) = initial_alignment(template, landmarks, config)?;
    run_nicp(&start, target, &index, landmarks, config, 0, template.diagonal() * pose.scale)
}

fn initial_alignment(template: &Mesh, landmarks: &LandmarkPairs, config: &NicpConfig) -> Result<(Mesh, SimilarityTransform)> {
    if config.rigid_init && landmarks.len() >= 3 {
        let source: Vec<Point3<f64>> = landmarks.vertex_ids.iter().map(|&v| template.vertices[v]).collect();
        let (t, moved) = rigid_landmark_align(template, &source, landmarks.targets)?;
        Ok((moved, t))
    } else {
        Ok((template.clone(), SimilarityTransform::identity()))
    }
}

fn run_nicp(
    source: &Mesh,
    target: &Mesh,
    target_index: &SpatialIndex,
    landmarks: &LandmarkPairs,
    config: &NicpConfig,
    round: usize,
    diagonal: f64,
) -> Result<NicpResult> {
    let frame = Frame::of(source, diagonal)?;
    let source_n = source.map_vertices(|p| frame.to(p));
    let target_n = target.map_vertices(|p| frame.to(p));
    let index_n = SpatialIndex::build(&target_n);
    let lm_targets: Vec<Point3<f64>> = landmarks.targets.iter().map(|p| frame.to(p)).collect();
    let lm = LandmarkPairs::new(landmarks.vertex_ids, &lm_targets)?;
    let thresholds = PruneThresholds { max_distance: config.max_distance, max_angle_deg: config.max_angle_deg };

    let mut current = source_n.clone();
    let mut stages = Vec::with_capacity(config.stiffness.len());
    for &alpha in &config.stiffness {
        let weights = StepWeights { alpha, beta: config.landmark_weight, gamma: config.gamma };
        let mut iterations = 0;
        let mut pruned = 0.0;
        for _ in 0..config.max_inner {
            let corr = build_correspondences(&current, &target_n, &index_n, &thresholds);
            pruned = corr.pruned_fraction();
            let step = nicp_step(&source_n, &corr, &lm, &weights)?;
            let motion = step
                .mesh
                .vertices
                .iter()
                .zip(&current.vertices)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            current = step.mesh;
            iterations += 1;
            if motion < config.motion_threshold {
                break;
            }
        }
        let out = current.map_vertices(|p| frame.from(p));
        stages.push(StageDiagnostics {
            round,
            alpha,
            iterations,
            p2s: mean_surface_distance(&out.vertices, target_index),
            landmark_rms: landmark_rms(&out, landmarks),
            pruned_fraction: pruned,
        });
    }
    Ok(NicpResult { mesh: current.map_vertices(|p| frame.from(p)), stages })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub p2s_nicp: f64,
    pub p2s_pca: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Deformed template after the last NICP pass.
    pub nicp: Mesh,
    /// Its projection onto the basis (the default deliverable).
    pub pca: Mesh,
    pub rounds: Vec<RoundDiagnostics>,
    pub stages: Vec<StageDiagnostics>,
    /// Landmark similarity used for the initial alignment (identity when disabled).
    pub pose: SimilarityTransform,
}

/// Alternates NICP and PCA projection; each projection seeds the next round.
/// Projection happens in the basis frame, undoing the landmark similarity first.
pub fn register_with_pca(
    template: &Mesh,
    target: &Mesh,
    landmarks: &LandmarkPairs,
    basis: &ShapeBasis,
    config: &NicpConfig,
) -> Result<RegistrationResult> {
    config.validate()?;
    check_landmarks(template, landmarks)?;
    if template.vertices.len() != basis.vertex_count() {
        return Err(Error::TopologyMismatch(format!(
            "template has {} vertices, basis {}",
            template.vertices.len(),
            basis.vertex_count()
        )));
    }
    if target.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let index = SpatialIndex::build(target);
    let (mut source, pose) = initial_alignment(template, landmarks, config)?;
    let inverse = pose.inverse();
    let mut rounds = Vec::with_capacity(config.outer_rounds);
    let mut stages = Vec::new();
    let mut last = None;
    for round in 0..config.outer_rounds {
        let result = run_nicp(&source, target, &index, landmarks, config, round, template.diagonal() * pose.scale)?;
        let snapped = if config.pose_compensated_snap {
            let local = inverse.apply_mesh(&result.mesh);
            pose.apply_mesh(&basis.pca_snap(&local, config.pca_clamp)?)
        } else {
            basis.pca_snap(&result.mesh, config.pca_clamp)?
        };
        let pca = retag(snapped, template);
        let nicp_mesh = retag(result.mesh, template);
        rounds.push(RoundDiagnostics {
            round,
            p2s_nicp: mean_surface_distance(&nicp_mesh.vertices, &index),
            p2s_pca: mean_surface_distance(&pca.vertices, &index),
        });
        stages.extend(result.stages);
        source = pca.clone();
        last = Some((nicp_mesh, pca));
    }
    let (nicp, pca) = last.expect("at least one round");
    Ok(RegistrationResult { nicp, pca, rounds, stages, pose })
}

fn retag(mut mesh: Mesh, template: &Mesh) -> Mesh {
    mesh.topology_tag = template.topology_tag.clone();
    mesh
}

/// `round,alpha,p2s,landmark_rms,pruned_fraction` rows.
pub fn diagnostics_csv(stages: &[StageDiagnostics]) -> String {
    let mut out = String::from("round,alpha,p2s,landmark_rms,pruned_fraction\n");
    for s in stages {
        let _ = writeln!(out, "{},{},{:.9e},{:.9e},{:.6}", s.round, s.alpha, s.p2s, s.landmark_rms, s.pruned_fraction);
    }
    out
}

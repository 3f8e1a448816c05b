//! Synthetic head corpora standing in for a scanned dataset.
//!
//! Heads are star-shaped: an icosphere whose radius is modulated by Gaussian
//! bumps (nose, brows, chin, ears, ...) and then scaled per axis. Every head
//! shares the icosphere topology, so landmarks bind to fixed vertex ids.

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::implicit::FeatureMap;
use crate::mesh::{shapes, vertex_normals, Mesh, SpatialIndex};
use crate::morphable::{BasisSize, RegionMask, ShapeBasis, ShapeCoefficients};
use crate::multiview::{
    default_rig, initialize_landmarks, project_landmarks, LandmarkScheme, LandmarkSet3D, Rig, StubDetector, ViewId,
    DEFAULT_LANDMARKS,
};
use crate::vcgcn::{TrainingSample, VcGcnInput};

/// Subdivision level of the shared head topology (2,562 vertices).
pub const HEAD_LEVELS: usize = 4;
/// Square image size of the synthetic camera rig, in pixels.
pub const IMAGE_SIZE: usize = 128;
/// Channels of the rendered feature stubs.
pub const FEATURE_CHANNELS: usize = 16;

/// Unit direction for a `(yaw°, pitch°)` pair; yaw turns from `+z` toward `+x`.
pub fn direction(yaw_deg: f64, pitch_deg: f64) -> Vector3<f64> {
    let (y, p) = (yaw_deg.to_radians(), pitch_deg.to_radians());
    Vector3::new(p.cos() * y.sin(), p.sin(), p.cos() * y.cos())
}

/// Radial Gaussian bump centred on a direction of the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub yaw: f64,
    pub pitch: f64,
    pub amplitude: f64,
    /// Angular standard deviation in degrees.
    pub width: f64,
}

impl Bump {
    const fn new(yaw: f64, pitch: f64, amplitude: f64, width: f64) -> Self {
        Self { yaw, pitch, amplitude, width }
    }

    fn at(&self, d: &Vector3<f64>) -> f64 {
        let angle = direction(self.yaw, self.pitch).dot(d).clamp(-1.0, 1.0).acos();
        let w = self.width.to_radians();
        self.amplitude * (-(angle * angle) / (2.0 * w * w)).exp()
    }
}

const NOSE: usize = 0;

const NEUTRAL_BUMPS: [Bump; 14] = [
    Bump::new(0.0, -2.0, 0.16, 10.0),
    Bump::new(0.0, -6.0, 0.06, 6.0),
    Bump::new(-22.0, 22.0, 0.04, 12.0),
    Bump::new(22.0, 22.0, 0.04, 12.0),
    Bump::new(-20.0, 10.0, -0.04, 8.0),
    Bump::new(20.0, 10.0, -0.04, 8.0),
    Bump::new(-45.0, -2.0, 0.04, 18.0),
    Bump::new(45.0, -2.0, 0.04, 18.0),
    Bump::new(0.0, -42.0, 0.08, 14.0),
    Bump::new(0.0, -22.0, 0.04, 10.0),
    Bump::new(-90.0, -3.0, 0.12, 9.0),
    Bump::new(90.0, -3.0, 0.12, 9.0),
    Bump::new(0.0, 40.0, 0.03, 25.0),
    Bump::new(0.0, -30.0, -0.02, 20.0),
];

/// Shape parameters of one synthetic head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub axes: Vector3<f64>,
    pub bumps: Vec<Bump>,
}

impl HeadParams {
    pub fn neutral() -> Self {
        Self {
            axes: Vector3::new(0.8, 1.0, 0.9),
            bumps: NEUTRAL_BUMPS.to_vec(),
        }
    }

    /// Caricature-like variation: every feature exaggerated or damped, axes
    /// stretched, feature positions jittered by a few degrees.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut p = Self::neutral();
        for a in p.axes.iter_mut() {
            *a *= rng.gen_range(0.85..1.15);
        }
        for b in &mut p.bumps {
            b.amplitude *= rng.gen_range(0.5..1.8);
            b.yaw += rng.gen_range(-3.0..3.0);
            b.pitch += rng.gen_range(-3.0..3.0);
        }
        p
    }

    /// Neutral head whose nose protrudes `factor` times further.
    pub fn exaggerated_nose(factor: f64) -> Self {
        let mut p = Self::neutral();
        p.bumps[NOSE].amplitude *= factor;
        p.bumps[NOSE].width *= 1.2;
        p
    }

    pub fn mesh(&self, levels: usize) -> Mesh {
        let mut mesh = shapes::icosphere(levels, 1.0).map_vertices(|p| {
            let d = p.coords;
            let r = 1.0 + self.bumps.iter().map(|b| b.at(&d)).sum::<f64>();
            Point3::from((d * r).component_mul(&self.axes))
        });
        mesh.topology_tag = Some(topology_tag(levels));
        mesh
    }
}

pub fn topology_tag(levels: usize) -> String {
    format!("synth-head-{levels}")
}

/// Template vertex bound to each default landmark: the icosphere vertex whose
/// direction is closest to the landmark's `(yaw, pitch)`.
pub fn landmark_vertex_ids(levels: usize) -> Vec<usize> {
    let sphere = shapes::icosphere(levels, 1.0);
    DEFAULT_LANDMARKS
        .iter()
        .map(|l| {
            let d = direction(l.yaw, l.pitch);
            let mut best = 0;
            for (i, p) in sphere.vertices.iter().enumerate() {
                if p.coords.dot(&d) > sphere.vertices[best].coords.dot(&d) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Named regions of the head topology: `face` (the frontal cap) plus one
/// region per feature group, each the vertices within twice the feature's
/// bump width of its centre.
pub fn region_masks(levels: usize) -> Vec<RegionMask> {
    let sphere = shapes::icosphere(levels, 1.0);
    let within = |centres: &[(f64, f64)], degrees: f64| -> Vec<usize> {
        let cos = degrees.to_radians().cos();
        (0..sphere.vertices.len())
            .filter(|&i| {
                let d = sphere.vertices[i].coords.normalize();
                centres.iter().any(|&(y, p)| direction(y, p).dot(&d) >= cos)
            })
            .collect()
    };
    let group = |name: &str, bumps: &[usize]| {
        let centres: Vec<_> = bumps.iter().map(|&b| (NEUTRAL_BUMPS[b].yaw, NEUTRAL_BUMPS[b].pitch)).collect();
        let width = bumps.iter().map(|&b| NEUTRAL_BUMPS[b].width).fold(0.0, f64::max);
        RegionMask { name: name.into(), indices: within(&centres, 2.0 * width) }
    };
    vec![
        RegionMask { name: "face".into(), indices: within(&[(0.0, -5.0)], 55.0) },
        group("nose", &[0, 1]),
        group("eyes", &[4, 5]),
        group("cheeks", &[6, 7]),
        group("mouth", &[9]),
        group("chin", &[8]),
        group("ears", &[10, 11]),
        group("forehead", &[12]),
    ]
}

/// Basis over `heads` random heads.
pub fn synthetic_basis(heads: usize, size: BasisSize, seed: u64) -> Result<ShapeBasis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<HeadParams> = (0..heads).map(|_| HeadParams::random(&mut rng)).collect();
    let meshes: Vec<Mesh> = params.par_iter().map(|p| p.mesh(HEAD_LEVELS)).collect();
    ShapeBasis::build(&meshes, size)
}

/// Default shipped basis: 60 heads, components up to 99% of the variance.
pub fn default_basis(seed: u64) -> Result<ShapeBasis> {
    synthetic_basis(60, BasisSize::default(), seed)
}

/// Coefficients drawn uniformly within `±range` standard deviations.
pub fn random_coefficients(basis: &ShapeBasis, range: f64, rng: &mut impl Rng) -> ShapeCoefficients {
    let a = basis
        .eigenvalues()
        .iter()
        .map(|l| {
            let sd = l.max(0.0).sqrt();
            if sd > 0.0 && range > 0.0 {
                rng.gen_range(-range..range) * sd
            } else {
                0.0
            }
        })
        .collect();
    ShapeCoefficients { a }
}

/// One generated head with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthHead {
    pub mesh: Mesh,
    /// Generating coefficients for heads blended from a basis.
    pub coefficients: Option<ShapeCoefficients>,
    pub landmarks: LandmarkSet3D,
}

/// Heads drawn from the basis span with coefficients within ±2σ.
pub fn blend_corpus(basis: &ShapeBasis, vertex_ids: &[usize], count: usize, seed: u64) -> Result<Vec<SynthHead>> {
    if count == 0 {
        return Err(Error::InvalidArgument("corpus count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = random_coefficients(basis, 2.0, &mut rng);
            let mesh = basis.reconstruct(&a)?;
            let landmarks = LandmarkSet3D::from_vertices(&mesh, vertex_ids)?;
            Ok(SynthHead { mesh, coefficients: Some(a), landmarks })
        })
        .collect()
}

/// Heads whose centred shapes span exactly four directions.
pub fn rank4_corpus(count: usize, seed: u64) -> Vec<Mesh> {
    let neutral = HeadParams::neutral();
    let base = neutral.mesh(HEAD_LEVELS);
    let variants: [Box<dyn Fn(&mut HeadParams)>; 4] = [
        Box::new(|p| p.bumps[NOSE].amplitude *= 2.5),
        Box::new(|p| p.bumps[8].amplitude *= 2.0),
        Box::new(|p| {
            p.bumps[10].amplitude *= 2.0;
            p.bumps[11].amplitude *= 2.0;
        }),
        Box::new(|p| p.axes.x *= 1.2),
    ];
    let fields: Vec<Vec<Vector3<f64>>> = variants
        .iter()
        .map(|f| {
            let mut p = neutral.clone();
            f(&mut p);
            let m = p.mesh(HEAD_LEVELS);
            m.vertices.iter().zip(&base.vertices).map(|(a, b)| a - b).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let mut m = base.clone();
            for (i, v) in m.vertices.iter_mut().enumerate() {
                for k in 0..4 {
                    *v += c[k] * fields[k][i];
                }
            }
            m
        })
        .collect()
}

/// Raises spike patches over `fraction` of the vertices: each patch lifts a
/// centre vertex by `height` along its normal and its one-ring by half that.
/// Returns the spiked mesh and the moved vertex ids.
pub fn add_spikes(mesh: &Mesh, fraction: f64, height: f64, seed: u64) -> Result<(Mesh, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("spike fraction {fraction} outside [0, 1]")));
    }
    let n = mesh.vertices.len();
    let wanted = ((fraction * n as f64).ceil() as usize).min(n);
    let neighbors = mesh.vertex_neighbors();
    let normals = vertex_normals(mesh);
    let mut lift = vec![0.0f64; n];
    let mut moved = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for centre in sample(&mut rng, n, n).into_iter() {
        if moved >= wanted {
            break;
        }
        if lift[centre] > 0.0 || neighbors[centre].iter().any(|&j| lift[j] > 0.0) {
            continue;
        }
        lift[centre] = height;
        moved += 1;
        for &j in &neighbors[centre] {
            if moved < wanted {
                lift[j] = 0.5 * height;
                moved += 1;
            }
        }
    }
    let mut out = mesh.clone();
    let mut ids = Vec::with_capacity(moved);
    for i in 0..n {
        if lift[i] > 0.0 {
            out.vertices[i] += normals[i] * lift[i];
            ids.push(i);
        }
    }
    Ok((out, ids))
}

/// Renders per-pixel stub features for each view by ray casting the mesh.
///
/// Channels: view depth, view-space normal (3), then sine/cosine encodings
/// at two frequencies of the hit point in box-normalized model coordinates
/// (12). Pixels whose ray misses are zero.
pub fn render_features(mesh: &Mesh, index: &SpatialIndex, rig: &Rig) -> Result<[FeatureMap; 3]> {
    let bounds = index.bounds().ok_or(Error::EmptyMesh)?;
    let center = bounds.center();
    let half = 0.5 * bounds.diagonal();
    let render = |view: ViewId| -> Result<FeatureMap> {
        let cam = rig.camera(view);
        let (w, h) = (cam.width, cam.height);
        let start = cam.max_depth(&bounds) + 0.05 * bounds.diagonal() + 1e-9;
        let rows: Vec<Vec<f64>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row = vec![0.0; w * FEATURE_CHANNELS];
                for x in 0..w {
                    let ray = cam.pixel_ray(x as f64, y as f64, start);
                    let Some(hit) = index.first_hit(&ray) else { continue };
                    let out = &mut row[x * FEATURE_CHANNELS..(x + 1) * FEATURE_CHANNELS];
                    out[0] = cam.to_view(&hit.point).z / half;
                    let n = cam.rotation * mesh.face_cross(hit.face).normalize();
                    out[1..4].copy_from_slice(n.as_slice());
                    let q = (hit.point - center) / half;
                    for (k, freq) in [1.0, 2.0].into_iter().enumerate() {
                        for a in 0..3 {
                            let t = std::f64::consts::PI * freq * q[a];
                            out[4 + k * 6 + 2 * a] = t.sin();
                            out[5 + k * 6 + 2 * a] = t.cos();
                        }
                    }
                }
                row
            })
            .collect();
        FeatureMap::new(w, h, FEATURE_CHANNELS, rows.concat())
    };
    Ok([render(ViewId::Front)?, render(ViewId::Left)?, render(ViewId::Right)?])
}

/// Everything VC-GCN training needs for one head, using the head itself as
/// the reconstructed surface and a stub detector for the 2D landmarks.
pub fn training_sample(
    mesh: &Mesh,
    truth: &LandmarkSet3D,
    scheme: &LandmarkScheme,
    detector: &StubDetector,
) -> Result<TrainingSample> {
    let index = SpatialIndex::build(mesh);
    let rig = default_rig(mesh, IMAGE_SIZE, IMAGE_SIZE)?;
    let truth_2d = project_landmarks(truth, &rig, scheme);
    let detected = detector.detect(truth, &rig, scheme)?;
    let init = initialize_landmarks(mesh, &index, &detected, &rig, scheme)?;
    let maps = render_features(mesh, &index, &rig)?;
    let input = VcGcnInput::from_views(&maps, &detected, &init)?;
    Ok(TrainingSample {
        input,
        detected,
        truth_2d,
        truth: truth.clone(),
        rig,
    })
}

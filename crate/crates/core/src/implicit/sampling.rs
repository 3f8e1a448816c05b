use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, SpatialIndex};

/// A point with its ground-truth occupancy (0 or 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub point: Point3<f64>,
    pub occupancy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub n_surface: usize,
    pub n_uniform: usize,
    /// Standard deviation of the isotropic offset applied to surface samples.
    pub sigma: f64,
    pub seed: u64,
}

impl SamplingConfig {
    /// 16 near-surface samples per uniform one.
    pub fn with_total(total: usize, sigma: f64, seed: u64) -> Self {
        let n_uniform = total / 17;
        Self {
            n_surface: total - n_uniform,
            n_uniform,
            sigma,
            seed,
        }
    }
}

/// Area-weighted uniform points on the surface, with the face each lies on.
pub fn sample_surface(mesh: &Mesh, count: usize, rng: &mut impl Rng) -> Result<Vec<(Point3<f64>, usize)>> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += 0.5 * mesh.face_cross(f).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }
    Ok((0..count)
        .map(|_| {
            let target = rng.gen::<f64>() * total;
            let face = cumulative.partition_point(|&c| c <= target).min(mesh.faces.len() - 1);
            let [a, b, c] = mesh.triangle(face);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            let p = a.coords * (1.0 - s) + b.coords * (s * (1.0 - r2)) + c.coords * (s * r2);
            (Point3::from(p), face)
        })
        .collect())
}

/// Perturbed surface samples plus uniform samples in the 10%-padded bounding
/// box, labelled by the mesh's inside test.
pub fn sample_training_points(mesh: &Mesh, config: &SamplingConfig) -> Result<Vec<LabeledPoint>> {
    if !(config.sigma >= 0.0 && config.sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma {} must be a non-negative number", config.sigma)));
    }
    let index = SpatialIndex::build(mesh);
    if index.boundary_edges() > 0 {
        return Err(Error::NotWatertight { boundary_edges: index.boundary_edges() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut points: Vec<Point3<f64>> = sample_surface(mesh, config.n_surface, &mut rng)?
        .into_iter()
        .map(|(p, _)| p + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
        .collect();
    let b = mesh.bounding_box().padded(0.1);
    points.extend((0..config.n_uniform).map(|_| {
        Point3::from(Vector3::from_fn(|a, _| rng.gen_range(b.min[a]..=b.max[a])))
    }));
    points
        .into_par_iter()
        .map(|p| {
            Ok(LabeledPoint {
                point: p,
                occupancy: if index.contains(&p)? { 1.0 } else { 0.0 },
            })
        })
        .collect()
}

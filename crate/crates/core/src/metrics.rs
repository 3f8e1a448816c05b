//! Similarity alignment and evaluation metrics: Procrustes, point-to-surface
//! distance and root-aligned landmark error.

use std::fmt::Write as _;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, Point3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{obj::format_sig9, Mesh, SpatialIndex};
use crate::multiview::LandmarkSet3D;

/// `p ↦ s·R·p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            scale: 1.0,
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    pub fn apply_mesh(&self, mesh: &Mesh) -> Mesh {
        mesh.transformed(&self.rotation, self.scale, &self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.transpose();
        let scale = 1.0 / self.scale;
        Self {
            translation: -(scale * (rotation * self.translation)),
            rotation,
            scale,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            scale: self.scale * other.scale,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }
}

/// Least-squares similarity mapping `source` onto `target` (reflections excluded).
pub fn procrustes(source: &[Point3<f64>], target: &[Point3<f64>]) -> Result<SimilarityTransform> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len(),
            actual: target.len(),
            context: "Procrustes point counts",
        });
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("Procrustes needs at least 3 pairs, got {n}")));
    }
    let inv = 1.0 / n as f64;
    let mu_s = source.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv;
    let mu_t = target.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv;
    let mut cov = Matrix3::zeros();
    let mut src_cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (p, q) in source.iter().zip(target) {
        let a = p.coords - mu_s;
        let b = q.coords - mu_t;
        cov += b * a.transpose();
        src_cov += a * a.transpose();
        var_s += a.norm_squared();
    }
    cov *= inv;
    var_s *= inv;

    // collinear or coincident sources leave the rotation undetermined
    let spread = src_cov.symmetric_eigenvalues();
    let mut sorted = [spread[0], spread[1], spread[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[0] > 0.0) || sorted[1] <= 1e-12 * sorted[0] {
        return Err(Error::Degenerate("source points are collinear or coincident".into()));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("U requested"), svd.v_t.expect("Vt requested"));
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    // nalgebra returns singular values unsorted; put the reflection on the smallest
    let (u, sv, v_t) = sort_svd(u, svd.singular_values, v_t);
    let rotation = u * d * v_t;
    let trace = sv[0] * d[(0, 0)] + sv[1] * d[(1, 1)] + sv[2] * d[(2, 2)];
    let scale = trace / var_s;
    if !(scale > 0.0) {
        return Err(Error::Degenerate("non-positive Procrustes scale".into()));
    }
    let translation = mu_t - scale * (rotation * mu_s);
    Ok(SimilarityTransform {
        rotation,
        scale,
        translation,
    })
}

fn sort_svd(
    u: Matrix3<f64>,
    s: Vector3<f64>,
    v_t: Matrix3<f64>,
) -> (Matrix3<f64>, Vector3<f64>, Matrix3<f64>) {
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut u2 = Matrix3::zeros();
    let mut v2 = Matrix3::zeros();
    let mut s2 = Vector3::zeros();
    for (k, &i) in order.iter().enumerate() {
        u2.set_column(k, &u.column(i));
        v2.set_row(k, &v_t.row(i));
        s2[k] = s[i];
    }
    (u2, s2, v2)
}

/// Root-mean-square distance between paired points.
pub fn rms_distance(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum::<f64>() / a.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2sOptions {
    pub align: bool,
    /// Size of the vertex subsample used to find alignment pairs.
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for P2sOptions {
    fn default() -> Self {
        Self {
            align: true,
            sample_count: 2000,
            seed: 0,
        }
    }
}

/// Mean distance from each predicted vertex to the ground-truth surface.
///
/// With alignment on, the prediction is first brought onto the ground truth by
/// a similarity transform: index correspondence when both meshes share a
/// topology, centroid and RMS-radius normalization otherwise, then refined twice
/// by Procrustes on mutual-closest vertex pairs from a seeded subsample.
pub fn p2s(pred: &Mesh, gt: &Mesh, options: &P2sOptions) -> Result<f64> {
    if pred.vertices.is_empty() || gt.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let gt_index = SpatialIndex::build(gt);
    let vertices = if options.align {
        let t = align_to(pred, gt, options)?;
        pred.vertices.iter().map(|p| t.apply(p)).collect()
    } else {
        pred.vertices.clone()
    };
    Ok(mean_surface_distance(&vertices, &gt_index))
}

/// Mean distance from points to the indexed surface.
pub fn mean_surface_distance(points: &[Point3<f64>], surface: &SpatialIndex) -> f64 {
    let distances: Vec<f64> = points
        .par_iter()
        .map(|p| surface.closest_point(p).map_or(f64::INFINITY, |c| c.distance))
        .collect();
    distances.iter().sum::<f64>() / distances.len() as f64
}

/// The similarity transform [`p2s`] applies to the prediction.
pub fn align_to(pred: &Mesh, gt: &Mesh, options: &P2sOptions) -> Result<SimilarityTransform> {
    // keeps p2s(A, A) exactly zero; an SVD of identical sets leaves rounding residue
    if pred.vertices == gt.vertices {
        return Ok(SimilarityTransform::identity());
    }
    let mut transform = if pred.check_same_topology(gt).is_ok() {
        procrustes(&pred.vertices, &gt.vertices)?
    } else {
        normalization_transform(&pred.vertices, &gt.vertices)?
    };
    let gt_tree = vertex_tree(&gt.vertices);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let count = options.sample_count.min(pred.vertices.len());
    let mut subsample = sample(&mut rng, pred.vertices.len(), count).into_vec();
    subsample.sort_unstable();

    for _ in 0..2 {
        let moved: Vec<Point3<f64>> = pred.vertices.iter().map(|p| transform.apply(p)).collect();
        let pred_tree = vertex_tree(&moved);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for &i in &subsample {
            let j = nearest(&gt_tree, &moved[i]);
            if nearest(&pred_tree, &gt.vertices[j]) == i {
                src.push(pred.vertices[i]);
                dst.push(gt.vertices[j]);
            }
        }
        match procrustes(&src, &dst) {
            Ok(t) => transform = t,
            // too few or degenerate pairs: keep the current estimate
            Err(Error::Degenerate(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(transform)
}

fn normalization_transform(pred: &[Point3<f64>], gt: &[Point3<f64>]) -> Result<SimilarityTransform> {
    let centroid = |pts: &[Point3<f64>]| pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / pts.len() as f64;
    let radius = |pts: &[Point3<f64>], c: &Vector3<f64>| {
        (pts.iter().map(|p| (p.coords - c).norm_squared()).sum::<f64>() / pts.len() as f64).sqrt()
    };
    let (cp, cg) = (centroid(pred), centroid(gt));
    let (rp, rg) = (radius(pred, &cp), radius(gt, &cg));
    if !(rp > 0.0 && rg > 0.0) {
        return Err(Error::Degenerate("mesh collapses to a point".into()));
    }
    let scale = rg / rp;
    Ok(SimilarityTransform {
        rotation: Matrix3::identity(),
        scale,
        translation: cg - scale * cp,
    })
}

type VertexTree = ImmutableKdTree<f64, 3>;

fn vertex_tree(points: &[Point3<f64>]) -> VertexTree {
    let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    VertexTree::new_from_slice(&coords).expect("finite vertex coordinates")
}

fn nearest(tree: &VertexTree, p: &Point3<f64>) -> usize {
    tree.query(&[p.x, p.y, p.z])
        .nearest_one::<SquaredEuclidean<f64>>()
        .execute()
        .item as usize
}

/// Mean landmark distance after translating both sets so their roots coincide.
pub fn mpjpe(pred: &LandmarkSet3D, gt: &LandmarkSet3D, root: usize) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            actual: pred.len(),
            context: "landmark counts",
        });
    }
    if root >= gt.len() {
        return Err(Error::InvalidArgument(format!(
            "root landmark {root} out of range for {} landmarks",
            gt.len()
        )));
    }
    let (rp, rg) = (pred.points[root].coords, gt.points[root].coords);
    let total: f64 = pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| ((p.coords - rp) - (g.coords - rg)).norm())
        .sum();
    Ok(total / gt.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub aligned: bool,
    pub n_points: usize,
}

impl MetricReport {
    pub fn new(metric: impl Into<String>, value: f64, aligned: bool, n_points: usize) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidArgument(format!("metric value {value} is not a finite non-negative number")));
        }
        Ok(Self {
            metric: metric.into(),
            value,
            aligned,
            n_points,
        })
    }
}

pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("metric,value,aligned,n_points\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{},{}", r.metric, format_sig9(r.value), r.aligned, r.n_points);
    }
    out
}

pub fn reports_summary(reports: &[MetricReport]) -> String {
    let width = reports.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>14}  {:>7}  {:>8}", "metric", "value", "aligned", "points");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>14}  {:>7}  {:>8}",
            r.metric,
            format_sig9(r.value),
            if r.aligned { "yes" } else { "no" },
            r.n_points
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::Rotation3;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn residual(t: &SimilarityTransform, src: &[Point3<f64>], dst: &[Point3<f64>]) -> f64 {
        src.iter().zip(dst).map(|(p, q)| (t.apply(p) - q).norm_squared()).sum()
    }

    #[test]
    fn identity_for_equal_sets() {
        let pts = cloud(20, 1);
        let t = procrustes(&pts, &pts).unwrap();
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_exact_similarity_across_scales() {
        let pts = cloud(30, 2);
        for (k, &s) in [0.1, 0.5, 2.0, 10.0].iter().enumerate() {
            let r = Rotation3::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians())
                * Rotation3::from_euler_angles(0.1 * k as f64, 0.7, -0.3);
            let t0 = Vector3::new(1.0, -2.0, 0.5);
            let dst: Vec<_> = pts.iter().map(|p| Point3::from(s * (r * p.coords) + t0)).collect();
            let t = procrustes(&pts, &dst).unwrap();
            assert!((t.rotation - r.matrix()).abs().max() < 1e-9);
            assert!((t.scale - s).abs() < 1e-9 * s);
            assert!((t.translation - t0).norm() < 1e-9);
            assert!(residual(&t, &pts, &dst).sqrt() < 1e-9);
        }
    }

    #[test]
    fn reflection_is_excluded() {
        let pts = cloud(25, 3);
        let mirrored: Vec<_> = pts.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let t = procrustes(&pts, &mirrored).unwrap();
        assert!((t.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_are_rejected() {
        let line: Vec<_> = (0..5).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(procrustes(&line, &line), Err(Error::Degenerate(_))));
    }

    #[test]
    fn noisy_residual_matches_descent_oracle() {
        let pts = cloud(40, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = Rotation3::from_euler_angles(0.3, -0.2, 0.9);
        let dst: Vec<_> = pts
            .iter()
            .map(|p| {
                let noise = Vector3::from_fn(|_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
                Point3::from(1.4 * (r * p.coords) + Vector3::new(0.2, 0.1, -0.4) + noise)
            })
            .collect();
        let closed = residual(&procrustes(&pts, &dst).unwrap(), &pts, &dst);

        // gradient descent over (axis-angle, log-scale, translation) from identity
        let objective = |x: &[f64; 7]| {
            let rot = Rotation3::new(Vector3::new(x[0], x[1], x[2]));
            let t = SimilarityTransform {
                rotation: *rot.matrix(),
                scale: x[3].exp(),
                translation: Vector3::new(x[4], x[5], x[6]),
            };
            residual(&t, &pts, &dst)
        };
        let mut x = [0.0; 7];
        let mut step = 1e-2;
        let mut f = objective(&x);
        for _ in 0..20000 {
            let mut g = [0.0; 7];
            for k in 0..7 {
                let mut a = x;
                let mut b = x;
                a[k] += 1e-7;
                b[k] -= 1e-7;
                g[k] = (objective(&a) - objective(&b)) / 2e-7;
            }
            let trial: [f64; 7] = std::array::from_fn(|k| x[k] - step * g[k]);
            let ft = objective(&trial);
            if ft < f {
                x = trial;
                f = ft;
                step *= 1.2;
            } else {
                step *= 0.5;
            }
        }
        assert!((f - closed).abs() < 1e-6, "descent {f} vs closed form {closed}");
    }

    #[test]
    fn p2s_of_identical_meshes_is_zero() {
        let m = shapes::icosphere(2, 1.0);
        let off = P2sOptions { align: false, ..Default::default() };
        assert_eq!(p2s(&m, &m, &off).unwrap(), 0.0);
        assert_eq!(p2s(&m, &m, &P2sOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn p2s_alignment_removes_translation() {
        let gt = shapes::icosphere(3, 1.0);
        let pred = gt.map_vertices(|p| p + Vector3::new(0.3, -0.2, 0.7));
        assert!(p2s(&pred, &gt, &P2sOptions::default()).unwrap() < 1e-9);
    }

    #[test]
    fn concentric_spheres_match_brute_force() {
        let pred = shapes::icosphere(3, 1.0);
        let gt = shapes::icosphere(4, 1.1);
        let off = P2sOptions { align: false, ..Default::default() };
        let value = p2s(&pred, &gt, &off).unwrap();
        let index = SpatialIndex::build(&gt);
        let brute = pred
            .vertices
            .iter()
            .map(|p| index.closest_point_brute(p).unwrap().distance)
            .sum::<f64>()
            / pred.vertices.len() as f64;
        assert!((value - brute).abs() < 1e-12);
        // inscribed facets sit slightly inside the radius-1.1 sphere
        assert!((value - 0.1).abs() < 0.01);
    }

    #[test]
    fn p2s_is_similarity_invariant() {
        let gt = shapes::torus(1.0, 0.35, 40, 20);
        let pred = gt.map_vertices(|p| Point3::new(p.x * 1.05, p.y, p.z + 0.02 * p.x.sin()));
        let base = p2s(&pred, &gt, &P2sOptions::default()).unwrap();
        let r = Rotation3::from_euler_angles(0.4, -1.1, 2.0);
        let moved = pred.transformed(r.matrix(), 3.7, &Vector3::new(5.0, -1.0, 2.0));
        let value = p2s(&moved, &gt, &P2sOptions::default()).unwrap();
        assert!((value - base).abs() <= 1e-6 * base);
    }

    #[test]
    fn mpjpe_cases() {
        let gt = LandmarkSet3D::new(cloud(44, 5)).unwrap();
        assert_eq!(mpjpe(&gt, &gt, 14).unwrap(), 0.0);
        let shift = Vector3::new(3.0, -1.0, 2.0);
        let moved = LandmarkSet3D::new(gt.points.iter().map(|p| p + shift).collect()).unwrap();
        assert!(mpjpe(&moved, &gt, 14).unwrap() < 1e-12);
        let mut one = gt.clone();
        let delta = Vector3::new(0.3, 0.4, 0.0);
        one.points[3] += delta;
        assert!((mpjpe(&one, &gt, 14).unwrap() - delta.norm() / 44.0).abs() < 1e-15);
        assert!(mpjpe(&gt, &gt, 44).is_err());
    }

    #[test]
    fn mpjpe_is_not_rotation_invariant() {
        let gt = LandmarkSet3D::new(cloud(44, 6)).unwrap();
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.5);
        let rotated = LandmarkSet3D::new(gt.points.iter().map(|p| r * p).collect()).unwrap();
        assert!(mpjpe(&rotated, &gt, 14).unwrap() > 0.05);
    }

    #[test]
    fn report_rows() {
        let reports = vec![MetricReport::new("p2s_head", 0.25, true, 100).unwrap()];
        assert_eq!(reports_to_csv(&reports), "metric,value,aligned,n_points\np2s_head,0.25,true,100\n");
        assert!(reports_summary(&reports).contains("p2s_head"));
        assert!(MetricReport::new("bad", f64::NAN, false, 1).is_err());
    }
}

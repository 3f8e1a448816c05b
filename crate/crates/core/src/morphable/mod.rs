//! PCA morphable model over meshes sharing one topology.

mod io;

pub use io::{load_region_masks, parse_region_masks, save_region_masks, format_region_masks};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// How many components [`ShapeBasis::build`] keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisSize {
    Components(usize),
    /// Smallest count whose eigenvalues reach this fraction of the total variance.
    VarianceFraction(f64),
}

impl Default for BasisSize {
    fn default() -> Self {
        BasisSize::VarianceFraction(0.99)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCoefficients {
    pub a: Vec<f64>,
}

impl ShapeCoefficients {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("shape coefficients must be finite".into()));
        }
        Ok(Self { a })
    }

    pub fn zeros(d: usize) -> Self {
        Self { a: vec![0.0; d] }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Mean shape, orthonormal components (columns) and their variances.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeBasis {
    mean: DVector<f64>,
    components: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    /// Sum of all eigenvalues of the training set, kept or not.
    total_variance: f64,
    faces: Vec<[usize; 3]>,
    topology_tag: Option<String>,
}

impl ShapeBasis {
    /// PCA over the stacked vertex coordinates of `meshes`.
    pub fn build(meshes: &[Mesh], size: BasisSize) -> Result<Self> {
        let p = meshes.len();
        if p < 2 {
            return Err(Error::InvalidArgument(format!("a basis needs at least 2 meshes, got {p}")));
        }
        let first = &meshes[0];
        for (i, m) in meshes.iter().enumerate().skip(1) {
            first
                .check_same_topology(m)
                .map_err(|e| Error::TopologyMismatch(format!("mesh {i}: {e}")))?;
        }
        let rows = 3 * first.vertices.len();
        let mut data = DMatrix::zeros(rows, p);
        for (j, m) in meshes.iter().enumerate() {
            data.set_column(j, &DVector::from_vec(m.to_stacked()));
        }
        let mean = data.column_mean();
        for mut col in data.column_iter_mut() {
            col -= &mean;
        }

        let gram = data.transpose() * &data;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let max_mu = eig.eigenvalues[order[0]].max(0.0);
        let total_variance = data.norm_squared() / p as f64;
        let all: Vec<f64> = order
            .iter()
            .take(p - 1)
            .map(|&k| clean_eigenvalue(eig.eigenvalues[k], max_mu) / p as f64)
            .collect();

        let d = match size {
            BasisSize::Components(d) => {
                if d == 0 || d > p - 1 {
                    return Err(Error::InvalidArgument(format!(
                        "component count {d} must lie in 1..={}",
                        p - 1
                    )));
                }
                d
            }
            BasisSize::VarianceFraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidArgument(format!("variance fraction {f} outside (0, 1]")));
                }
                components_for_fraction(&all, total_variance, f)
            }
        };

        let mut components = DMatrix::zeros(rows, d);
        let mut eigenvalues = Vec::with_capacity(d);
        for (c, &k) in order.iter().take(d).enumerate() {
            let lambda = all[c];
            eigenvalues.push(lambda);
            if lambda > 0.0 {
                let v = eig.eigenvectors.column(k);
                let u = &data * v;
                let norm = u.norm();
                components.set_column(c, &(u / norm));
            }
        }
        orthonormalize(&mut components, &eigenvalues);

        Ok(Self {
            mean,
            components,
            eigenvalues,
            total_variance,
            faces: first.faces.clone(),
            topology_tag: first.topology_tag.clone(),
        })
    }

    /// Assembles a basis from parts, checking the invariants.
    pub fn from_parts(
        mean: Vec<f64>,
        components: Vec<Vec<f64>>,
        eigenvalues: Vec<f64>,
        total_variance: f64,
        faces: Vec<[usize; 3]>,
        topology_tag: Option<String>,
    ) -> Result<Self> {
        let rows = mean.len();
        if rows % 3 != 0 || rows == 0 {
            return Err(Error::Format(format!("mean length {rows} is not a positive multiple of 3")));
        }
        if components.len() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                actual: eigenvalues.len(),
                context: "eigenvalues per component",
            });
        }
        if let Some(c) = components.iter().find(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch {
                expected: rows,
                actual: c.len(),
                context: "component length",
            });
        }
        if eigenvalues.iter().any(|&l| !(l >= 0.0)) || eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Format("eigenvalues must be non-negative and non-increasing".into()));
        }
        let d = components.len();
        let matrix = DMatrix::from_fn(rows, d, |i, j| components[j][i]);
        let gram = matrix.transpose() * &matrix;
        if (gram - DMatrix::identity(d, d)).abs().max() > 1e-8 {
            return Err(Error::Format("basis components are not orthonormal".into()));
        }
        let mesh = Mesh::new(
            mean.chunks_exact(3).map(|c| nalgebra::Point3::new(c[0], c[1], c[2])).collect(),
            faces,
        )?;
        Ok(Self {
            mean: DVector::from_vec(mean),
            components: matrix,
            eigenvalues,
            total_variance,
            faces: mesh.faces,
            topology_tag,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.mean.len() / 3
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn topology_tag(&self) -> Option<&str> {
        self.topology_tag.as_deref()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Component `i` as a stacked 3N-vector.
    pub fn component(&self, i: usize) -> DVector<f64> {
        self.components.column(i).into_owned()
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    /// Cumulative fraction of total variance explained by the first k components.
    pub fn explained_variance(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|l| {
                acc += l;
                if self.total_variance > 0.0 {
                    acc / self.total_variance
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn mean_mesh(&self) -> Mesh {
        self.mesh_from(&self.mean)
    }

    fn mesh_from(&self, stacked: &DVector<f64>) -> Mesh {
        Mesh {
            vertices: stacked
                .as_slice()
                .chunks_exact(3)
                .map(|c| nalgebra::Point3::new(c[0], c[1], c[2]))
                .collect(),
            faces: self.faces.clone(),
            topology_tag: self.topology_tag.clone(),
        }
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<DVector<f64>> {
        if mesh.vertices.len() != self.vertex_count() {
            return Err(Error::TopologyMismatch(format!(
                "mesh has {} vertices, basis expects {}",
                mesh.vertices.len(),
                self.vertex_count()
            )));
        }
        if let (Some(a), Some(b)) = (&mesh.topology_tag, &self.topology_tag) {
            if a != b {
                return Err(Error::TopologyMismatch(format!("mesh tag {a} vs basis tag {b}")));
            }
        }
        Ok(DVector::from_vec(mesh.to_stacked()))
    }

    /// `S̄ + Σ a_i S_i` on the basis topology.
    pub fn reconstruct(&self, coeffs: &ShapeCoefficients) -> Result<Mesh> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: coeffs.len(),
                context: "shape coefficients",
            });
        }
        let stacked = &self.mean + &self.components * DVector::from_column_slice(&coeffs.a);
        Ok(self.mesh_from(&stacked))
    }

    /// Orthogonal projection coefficients `a_i = S_i · (x − S̄)`.
    pub fn project(&self, mesh: &Mesh) -> Result<ShapeCoefficients> {
        self.project_clamped(mesh, None)
    }

    /// As [`project`](Self::project), clamping each `a_i` to `±k·sqrt(λ_i)` when `k` is given.
    pub fn project_clamped(&self, mesh: &Mesh, clamp: Option<f64>) -> Result<ShapeCoefficients> {
        let x = self.check_mesh(mesh)?;
        let a = self.components.tr_mul(&(x - &self.mean));
        let mut a: Vec<f64> = a.iter().copied().collect();
        if let Some(k) = clamp {
            if !(k >= 0.0) {
                return Err(Error::InvalidArgument(format!("clamp factor {k} must be non-negative")));
            }
            for (ai, l) in a.iter_mut().zip(&self.eigenvalues) {
                let bound = k * l.sqrt();
                *ai = ai.clamp(-bound, bound);
            }
        }
        ShapeCoefficients::new(a)
    }

    /// Projection onto the span: `reconstruct(project(mesh))`.
    pub fn pca_snap(&self, mesh: &Mesh, clamp: Option<f64>) -> Result<Mesh> {
        let mut out = self.reconstruct(&self.project_clamped(mesh, clamp)?)?;
        if out.topology_tag.is_none() {
            out.topology_tag = mesh.topology_tag.clone();
        }
        Ok(out)
    }
}

fn clean_eigenvalue(mu: f64, max_mu: f64) -> f64 {
    // round-off in the Gram matrix leaves tiny or negative values for null directions
    if mu <= 1e-12 * max_mu || mu <= 0.0 {
        0.0
    } else {
        mu
    }
}

fn components_for_fraction(eigenvalues: &[f64], total: f64, fraction: f64) -> usize {
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc >= fraction * total * (1.0 - 1e-12) {
            return i + 1;
        }
    }
    eigenvalues.len().max(1)
}

/// Two passes of modified Gram–Schmidt; columns with zero variance are
/// replaced by coordinate directions orthogonal to the rest.
fn orthonormalize(m: &mut DMatrix<f64>, eigenvalues: &[f64]) {
    let (rows, cols) = m.shape();
    let mut next_axis = 0;
    for c in 0..cols {
        if eigenvalues[c] == 0.0 {
            loop {
                let mut e = DVector::zeros(rows);
                e[next_axis % rows] = 1.0;
                next_axis += 1;
                m.set_column(c, &e);
                if orthogonalize_column(m, c) {
                    break;
                }
            }
        } else {
            orthogonalize_column(m, c);
        }
    }
}

fn orthogonalize_column(m: &mut DMatrix<f64>, c: usize) -> bool {
    let original = m.column(c).norm();
    for _ in 0..2 {
        for k in 0..c {
            let dot = m.column(k).dot(&m.column(c));
            let basis = m.column(k).into_owned();
            m.column_mut(c).axpy(-dot, &basis, 1.0);
        }
    }
    let norm = m.column(c).norm();
    if norm <= 1e-6 * original {
        return false;
    }
    m.column_mut(c).scale_mut(1.0 / norm);
    true
}

/// Per-vertex `(1 − t)·A + t·B`; `t` outside `[0, 1]` extrapolates.
pub fn interpolate(a: &Mesh, b: &Mesh, t: f64) -> Result<Mesh> {
    a.check_same_topology(b)?;
    Ok(Mesh {
        vertices: a
            .vertices
            .iter()
            .zip(&b.vertices)
            .map(|(p, q)| nalgebra::Point3::from(p.coords * (1.0 - t) + q.coords * t))
            .collect(),
        faces: a.faces.clone(),
        topology_tag: a.topology_tag.clone(),
    })
}

/// Named vertex subset of a template topology.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub name: String,
    pub indices: Vec<usize>,
}

impl RegionMask {
    pub fn global(vertex_count: usize) -> Self {
        Self {
            name: "global".into(),
            indices: (0..vertex_count).collect(),
        }
    }

    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= vertex_count) {
            return Err(Error::InvalidArgument(format!(
                "region {} lists vertex {bad} but the mesh has {vertex_count}",
                self.name
            )));
        }
        Ok(())
    }
}

/// Mean squared displacement of masked vertices from the per-vertex dataset mean.
pub fn shape_variance(meshes: &[Mesh], mask: &RegionMask) -> Result<f64> {
    let first = meshes.first().ok_or(Error::EmptyMesh)?;
    if mask.indices.is_empty() {
        return Err(Error::InvalidArgument(format!("region {} is empty", mask.name)));
    }
    for m in &meshes[1..] {
        first.check_same_topology(m)?;
    }
    mask.validate(first.vertices.len())?;
    let p = meshes.len() as f64;
    let mut total = 0.0;
    for &i in &mask.indices {
        // offsets from the first mesh, so identical meshes give exactly zero
        let base = first.vertices[i];
        let mean = meshes.iter().fold(nalgebra::Vector3::zeros(), |a, m| a + (m.vertices[i] - base)) / p;
        total += meshes.iter().map(|m| (m.vertices[i] - base - mean).norm_squared()).sum::<f64>();
    }
    Ok(total / (p * mask.indices.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::{Point3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn jittered(seed: u64, amount: f64) -> Mesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mesh = shapes::icosphere(1, 1.0);
        for p in &mut mesh.vertices {
            *p += Vector3::from_fn(|_, _| rng.gen_range(-amount..amount));
        }
        mesh
    }

    fn corpus(p: usize) -> Vec<Mesh> {
        (0..p).map(|i| jittered(i as u64 + 1, 0.2)).collect()
    }

    #[test]
    fn two_mesh_closed_form() {
        let a = jittered(1, 0.1);
        let b = jittered(2, 0.1);
        let basis = ShapeBasis::build(&[a.clone(), b.clone()], BasisSize::Components(1)).unwrap();
        let xa = DVector::from_vec(a.to_stacked());
        let xb = DVector::from_vec(b.to_stacked());
        assert!((basis.mean() - (&xa + &xb) / 2.0).abs().max() < 1e-15);
        let diff = &xb - &xa;
        let dir = &diff / diff.norm();
        let comp = basis.component(0);
        assert!((comp.dot(&dir).abs() - 1.0).abs() < 1e-12);
        assert!((basis.eigenvalues()[0] - diff.norm_squared() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn identical_meshes_have_zero_variance() {
        let m = jittered(3, 0.1);
        let basis = ShapeBasis::build(&vec![m.clone(); 4], BasisSize::Components(3)).unwrap();
        assert!(basis.eigenvalues().iter().all(|&l| l == 0.0));
        let gram = basis.components().transpose() * basis.components();
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn orthonormal_and_sorted_with_variance_identity() {
        let meshes = corpus(12);
        let basis = ShapeBasis::build(&meshes, BasisSize::Components(11)).unwrap();
        let gram = basis.components().transpose() * basis.components();
        assert!((gram - DMatrix::identity(11, 11)).abs().max() < 1e-8);
        assert!(basis.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        let sum: f64 = basis.eigenvalues().iter().sum();
        assert!((sum - basis.total_variance()).abs() < 1e-6 * basis.total_variance());
    }

    #[test]
    fn component_count_is_checked() {
        let meshes = corpus(3);
        assert!(ShapeBasis::build(&meshes, BasisSize::Components(3)).is_err());
        assert!(ShapeBasis::build(&meshes, BasisSize::Components(0)).is_err());
        assert!(ShapeBasis::build(&meshes[..1], BasisSize::Components(1)).is_err());
        let other = shapes::icosphere(2, 1.0);
        assert!(matches!(
            ShapeBasis::build(&[meshes[0].clone(), other], BasisSize::Components(1)),
            Err(Error::TopologyMismatch(_))
        ));
    }

    #[test]
    fn variance_fraction_picks_smallest_count() {
        let meshes = corpus(10);
        let full = ShapeBasis::build(&meshes, BasisSize::Components(9)).unwrap();
        let basis = ShapeBasis::build(&meshes, BasisSize::VarianceFraction(0.8)).unwrap();
        let explained = full.explained_variance();
        let d = basis.dim();
        assert!(explained[d - 1] >= 0.8 - 1e-12);
        assert!(d == 1 || explained[d - 2] < 0.8);
    }

    #[test]
    fn reconstruct_and_project_round_trip() {
        let basis = ShapeBasis::build(&corpus(8), BasisSize::Components(5)).unwrap();
        assert_eq!(basis.reconstruct(&ShapeCoefficients::zeros(5)).unwrap().to_stacked(), basis.mean().as_slice());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let back = basis.project(&basis.reconstruct(&ShapeCoefficients::new(a.clone()).unwrap()).unwrap()).unwrap();
            for (x, y) in a.iter().zip(&back.a) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        assert!(basis.reconstruct(&ShapeCoefficients::zeros(4)).is_err());
    }

    #[test]
    fn reconstruction_is_linear() {
        let basis = ShapeBasis::build(&corpus(6), BasisSize::Components(3)).unwrap();
        let mean = DVector::from_vec(basis.mean_mesh().to_stacked());
        let s1 = basis.component(0);
        for t in [0.7, 1.4] {
            let m = basis.reconstruct(&ShapeCoefficients::new(vec![t, 0.0, 0.0]).unwrap()).unwrap();
            let expect = &mean + &s1 * t;
            assert!((DVector::from_vec(m.to_stacked()) - expect).abs().max() < 1e-14);
        }
    }

    #[test]
    fn orthogonal_noise_is_removed() {
        let basis = ShapeBasis::build(&corpus(8), BasisSize::Components(4)).unwrap();
        let target = basis.mean() + basis.component(1) * 3.0;
        // Gram–Schmidt some noise against all components
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut noise = DVector::from_fn(target.len(), |_, _| rng.gen_range(-0.1..0.1));
        for c in 0..4 {
            let s = basis.component(c);
            noise -= &s * s.dot(&noise);
        }
        let noisy = basis.mean_mesh().with_stacked((&target + &noise).as_slice()).unwrap();
        let a = basis.project(&noisy).unwrap();
        let expect = [0.0, 3.0, 0.0, 0.0];
        for (x, y) in a.a.iter().zip(expect) {
            assert!((x - y).abs() < 1e-10);
        }
        let snapped = basis.pca_snap(&noisy, None).unwrap();
        assert!((DVector::from_vec(snapped.to_stacked()) - target).abs().max() < 1e-10);
    }

    #[test]
    fn clamp_limits_coefficients() {
        let basis = ShapeBasis::build(&corpus(8), BasisSize::Components(3)).unwrap();
        let far = basis.reconstruct(&ShapeCoefficients::new(vec![100.0, 0.0, -100.0]).unwrap()).unwrap();
        let a = basis.project_clamped(&far, Some(3.0)).unwrap();
        let l = basis.eigenvalues();
        assert!((a.a[0] - 3.0 * l[0].sqrt()).abs() < 1e-12);
        assert!((a.a[2] + 3.0 * l[2].sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spike_residual_is_orthogonal_component() {
        let basis = ShapeBasis::build(&corpus(8), BasisSize::Components(4)).unwrap();
        let mut spiked = basis.mean_mesh();
        spiked.vertices[7] += Vector3::new(0.0, 5.0, 0.0);
        let snapped = basis.pca_snap(&spiked, None).unwrap();
        let x = DVector::from_vec(spiked.to_stacked()) - basis.mean();
        let in_span = basis.components() * basis.components().tr_mul(&x);
        let residual = DVector::from_vec(spiked.to_stacked()) - DVector::from_vec(snapped.to_stacked());
        assert!((residual - (&x - in_span)).abs().max() < 1e-10);
        let again = basis.pca_snap(&snapped, None).unwrap();
        assert!((DVector::from_vec(again.to_stacked()) - DVector::from_vec(snapped.to_stacked())).abs().max() < 1e-12);
    }

    #[test]
    fn interpolation_endpoints_and_extrapolation() {
        let a = jittered(1, 0.1);
        let b = jittered(2, 0.1);
        assert_eq!(interpolate(&a, &b, 0.0).unwrap().vertices, a.vertices);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap().vertices, b.vertices);
        let mid = interpolate(&a, &b, 0.5).unwrap();
        for ((m, p), q) in mid.vertices.iter().zip(&a.vertices).zip(&b.vertices) {
            assert!((m - Point3::from((p.coords + q.coords) / 2.0)).norm() < 1e-15);
        }
        let basis = ShapeBasis::build(&corpus(5), BasisSize::Components(2)).unwrap();
        let one = basis.reconstruct(&ShapeCoefficients::new(vec![1.0, 0.0]).unwrap()).unwrap();
        let ext = interpolate(&basis.mean_mesh(), &one, 1.5).unwrap();
        let expect = basis.reconstruct(&ShapeCoefficients::new(vec![1.5, 0.0]).unwrap()).unwrap();
        for (p, q) in ext.vertices.iter().zip(&expect.vertices) {
            assert!((p - q).norm() < 1e-12);
        }
        assert!(interpolate(&a, &shapes::icosphere(2, 1.0), 0.5).is_err());
    }

    #[test]
    fn variance_closed_forms() {
        let m = jittered(1, 0.1);
        let mask = RegionMask { name: "nose".into(), indices: vec![0, 1, 2, 3] };
        assert_eq!(shape_variance(&[m.clone(), m.clone()], &mask).unwrap(), 0.0);
        let delta = Vector3::new(0.0, 0.3, 0.4);
        let mut a = m.clone();
        let mut b = m.clone();
        a.vertices[2] += delta;
        b.vertices[2] -= delta;
        let v = shape_variance(&[a, b], &mask).unwrap();
        assert!((v - delta.norm_squared() / 4.0).abs() < 1e-15);
        let empty = RegionMask { name: "ear".into(), indices: vec![] };
        assert!(shape_variance(&[m], &empty).is_err());
    }

    #[test]
    fn global_variance_is_weighted_mean_of_regions() {
        let meshes = corpus(6);
        let n = meshes[0].vertices.len();
        let global = shape_variance(&meshes, &RegionMask::global(n)).unwrap();
        let parts = [(0..10).collect::<Vec<_>>(), (10..25).collect(), (25..n).collect()];
        let weighted: f64 = parts
            .iter()
            .map(|idx| {
                let mask = RegionMask { name: "part".into(), indices: idx.clone() };
                shape_variance(&meshes, &mask).unwrap() * idx.len() as f64
            })
            .sum::<f64>()
            / n as f64;
        assert!((global - weighted).abs() < 1e-14);
    }

    #[test]
    fn error_is_monotone_in_dimension() {
        let meshes = corpus(9);
        let mut last = f64::INFINITY;
        for d in 1..=8 {
            let basis = ShapeBasis::build(&meshes, BasisSize::Components(d)).unwrap();
            let snapped = basis.pca_snap(&meshes[0], None).unwrap();
            let err: f64 = snapped.vertices.iter().zip(&meshes[0].vertices).map(|(a, b)| (a - b).norm_squared()).sum();
            assert!(err <= last + 1e-12);
            last = err;
        }
        assert!(last < 1e-20);
    }
}

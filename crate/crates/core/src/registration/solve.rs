//! One optimal-step deformation solve: a 4×3 affine transform per vertex.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, Matrix4, Matrix4x3, Point3, RowVector4, Vector4};

use super::Correspondences;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Landmark constraints: template vertex ids and their target positions.
#[derive(Debug, Clone, Copy)]
pub struct LandmarkPairs<'a> {
    pub vertex_ids: &'a [usize],
    pub targets: &'a [Point3<f64>],
}

impl<'a> LandmarkPairs<'a> {
    pub fn new(vertex_ids: &'a [usize], targets: &'a [Point3<f64>]) -> Result<Self> {
        if vertex_ids.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: vertex_ids.len(),
                actual: targets.len(),
                context: "landmark targets per bound vertex",
            });
        }
        Ok(Self { vertex_ids, targets })
    }

    pub fn none() -> Self {
        Self { vertex_ids: &[], targets: &[] }
    }

    pub fn len(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_ids.is_empty()
    }
}

/// Stiffness and landmark weights of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Weight of the translation column in the stiffness term.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution {
    /// `v' = [v 1] · X_i`.
    pub transforms: Vec<Matrix4x3<f64>>,
    pub mesh: Mesh,
}

fn homogeneous(p: &Point3<f64>) -> RowVector4<f64> {
    RowVector4::new(p.x, p.y, p.z, 1.0)
}

pub fn apply_transforms(template: &Mesh, transforms: &[Matrix4x3<f64>]) -> Mesh {
    let vertices = template
        .vertices
        .iter()
        .zip(transforms)
        .map(|(p, x)| {
            let q = homogeneous(p) * x;
            Point3::new(q[0], q[1], q[2])
        })
        .collect();
    Mesh {
        vertices,
        faces: template.faces.clone(),
        topology_tag: template.topology_tag.clone(),
    }
}

pub fn identity_transforms(n: usize) -> Vec<Matrix4x3<f64>> {
    vec![Matrix4x3::identity(); n]
}

/// Data, stiffness and landmark terms evaluated at `transforms`.
pub fn step_objective(
    template: &Mesh,
    correspondences: &Correspondences,
    landmarks: &LandmarkPairs,
    weights: &StepWeights,
    transforms: &[Matrix4x3<f64>],
) -> f64 {
    let g = Vector4::new(1.0, 1.0, 1.0, weights.gamma);
    let mapped = |i: usize| homogeneous(&template.vertices[i]) * transforms[i];
    let mut data = 0.0;
    for i in 0..template.vertices.len() {
        let w = correspondences.weights[i];
        if w > 0.0 {
            let r = mapped(i) - correspondences.targets[i].coords.transpose();
            data += w * r.norm_squared();
        }
    }
    let mut stiffness = 0.0;
    for (i, j) in template.edges() {
        let d = transforms[i] - transforms[j];
        for r in 0..4 {
            stiffness += g[r] * g[r] * d.row(r).norm_squared();
        }
    }
    let mut lm = 0.0;
    for (&v, t) in landmarks.vertex_ids.iter().zip(landmarks.targets) {
        lm += (mapped(v) - t.coords.transpose()).norm_squared();
    }
    data + weights.alpha * stiffness + weights.beta * lm
}

fn validate(
    template: &Mesh,
    correspondences: &Correspondences,
    landmarks: &LandmarkPairs,
    weights: &StepWeights,
) -> Result<Vec<(usize, usize)>> {
    let n = template.vertices.len();
    if n == 0 {
        return Err(Error::EmptyMesh);
    }
    if correspondences.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: correspondences.len(),
            context: "correspondences per template vertex",
        });
    }
    if !(weights.alpha > 0.0 && weights.alpha.is_finite()) || !(weights.beta >= 0.0) || !(weights.gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid step weights {weights:?}")));
    }
    if let Some(&v) = landmarks.vertex_ids.iter().find(|&&v| v >= n) {
        return Err(Error::InvalidArgument(format!("landmark vertex {v} out of range")));
    }
    let edges = template.edges();

    // every connected piece needs a data or landmark constraint
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in &edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
        }
    }
    let mut anchored = vec![false; n];
    let mut constrained = 0;
    for i in 0..n {
        if correspondences.weights[i] > 0.0 {
            constrained += 1;
            let r = find(&mut parent, i);
            anchored[r] = true;
        }
    }
    if weights.beta > 0.0 {
        for &v in landmarks.vertex_ids {
            constrained += 1;
            let r = find(&mut parent, v);
            anchored[r] = true;
        }
    }
    let loose = (0..n).filter(|&i| find(&mut parent, i) == i && !anchored[i]).count();
    if loose > 0 {
        return Err(Error::Singular {
            unknowns: 4 * n,
            constrained,
            message: format!("{loose} connected piece(s) have no data or landmark constraint"),
        });
    }
    Ok(edges)
}

/// Diagonal blocks and right-hand side of the normal equations (without the stiffness part).
fn data_blocks(
    template: &Mesh,
    correspondences: &Correspondences,
    landmarks: &LandmarkPairs,
    beta: f64,
) -> (Vec<Matrix4<f64>>, Vec<Matrix4x3<f64>>) {
    let n = template.vertices.len();
    let mut diag = vec![Matrix4::zeros(); n];
    let mut rhs = vec![Matrix4x3::zeros(); n];
    let mut add = |i: usize, w: f64, target: &Point3<f64>| {
        let v = homogeneous(&template.vertices[i]).transpose();
        diag[i] += w * v * v.transpose();
        rhs[i] += w * v * target.coords.transpose();
    };
    for i in 0..n {
        let w = correspondences.weights[i];
        if w > 0.0 {
            add(i, w, &correspondences.targets[i]);
        }
    }
    if beta > 0.0 {
        for (&v, t) in landmarks.vertex_ids.iter().zip(landmarks.targets) {
            add(v, beta, t);
        }
    }
    (diag, rhs)
}

/// Solves the step with a sparse Cholesky factorization of the normal equations.
pub fn nicp_step(
    template: &Mesh,
    correspondences: &Correspondences,
    landmarks: &LandmarkPairs,
    weights: &StepWeights,
) -> Result<StepSolution> {
    let edges = validate(template, correspondences, landmarks, weights)?;
    let n = template.vertices.len();
    let g2 = [1.0, 1.0, 1.0, weights.gamma * weights.gamma];
    let (mut diag, rhs) = data_blocks(template, correspondences, landmarks, weights.beta);

    let mut degree = vec![0usize; n];
    for &(i, j) in &edges {
        degree[i] += 1;
        degree[j] += 1;
    }
    let mut triplets = Vec::with_capacity(16 * n + 8 * edges.len());
    for i in 0..n {
        for k in 0..4 {
            diag[i][(k, k)] += weights.alpha * degree[i] as f64 * g2[k];
        }
        for r in 0..4 {
            for c in 0..4 {
                let v = diag[i][(r, c)];
                if v != 0.0 {
                    triplets.push(Triplet::new(4 * i + r, 4 * i + c, v));
                }
            }
        }
    }
    for &(i, j) in &edges {
        for k in 0..4 {
            let v = -weights.alpha * g2[k];
            triplets.push(Triplet::new(4 * i + k, 4 * j + k, v));
            triplets.push(Triplet::new(4 * j + k, 4 * i + k, v));
        }
    }
    let dim = 4 * n;
    let singular = |message: String| Error::Singular {
        unknowns: dim,
        constrained: correspondences.weights.iter().filter(|&&w| w > 0.0).count() + landmarks.len(),
        message,
    };
    let k = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &triplets)
        .map_err(|e| singular(format!("assembly failed: {e:?}")))?;
    let llt = k.sp_cholesky(Side::Lower).map_err(|e| singular(format!("factorization failed: {e:?}")))?;
    let b = Mat::from_fn(dim, 3, |r, c| rhs[r / 4][(r % 4, c)]);
    let x = llt.solve(&b);
    let transforms: Vec<Matrix4x3<f64>> = (0..n).map(|i| Matrix4x3::from_fn(|r, c| x[(4 * i + r, c)])).collect();
    if transforms.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(singular("solution is not finite".into()));
    }
    Ok(StepSolution {
        mesh: apply_transforms(template, &transforms),
        transforms,
    })
}

/// Largest template handled by [`nicp_step_dense`].
pub const DENSE_VERTEX_LIMIT: usize = 500;

/// Same step solved from the explicitly stacked least-squares system with a
/// dense Cholesky factorization; a reference for small meshes.
pub fn nicp_step_dense(
    template: &Mesh,
    correspondences: &Correspondences,
    landmarks: &LandmarkPairs,
    weights: &StepWeights,
) -> Result<StepSolution> {
    let n = template.vertices.len();
    if n > DENSE_VERTEX_LIMIT {
        return Err(Error::InvalidArgument(format!("dense solve limited to {DENSE_VERTEX_LIMIT} vertices, got {n}")));
    }
    let edges = validate(template, correspondences, landmarks, weights)?;
    let g = [1.0, 1.0, 1.0, weights.gamma];
    let mut rows: Vec<(Vec<(usize, f64)>, [f64; 3])> = Vec::new();
    let sa = weights.alpha.sqrt();
    for &(i, j) in &edges {
        for k in 0..4 {
            rows.push((vec![(4 * i + k, sa * g[k]), (4 * j + k, -sa * g[k])], [0.0; 3]));
        }
    }
    let mut point_row = |i: usize, w: f64, t: &Point3<f64>| {
        let s = w.sqrt();
        let p = &template.vertices[i];
        let coeffs = [p.x, p.y, p.z, 1.0];
        rows.push(((0..4).map(|k| (4 * i + k, s * coeffs[k])).collect(), [s * t.x, s * t.y, s * t.z]));
    };
    for i in 0..n {
        if correspondences.weights[i] > 0.0 {
            point_row(i, correspondences.weights[i], &correspondences.targets[i]);
        }
    }
    if weights.beta > 0.0 {
        for (&v, t) in landmarks.vertex_ids.iter().zip(landmarks.targets) {
            point_row(v, weights.beta, t);
        }
    }
    let dim = 4 * n;
    let mut a = DMatrix::zeros(rows.len(), dim);
    let mut b = DMatrix::zeros(rows.len(), 3);
    for (r, (entries, rhs)) in rows.iter().enumerate() {
        for &(c, v) in entries {
            a[(r, c)] += v;
        }
        for c in 0..3 {
            b[(r, c)] = rhs[c];
        }
    }
    let normal = a.transpose() * &a;
    let rhs = a.transpose() * b;
    let chol = normal.cholesky().ok_or_else(|| Error::Singular {
        unknowns: dim,
        constrained: rows.len(),
        message: "dense normal matrix is not positive definite".into(),
    })?;
    let x = chol.solve(&rhs);
    let transforms: Vec<Matrix4x3<f64>> = (0..n).map(|i| Matrix4x3::from_fn(|r, c| x[(4 * i + r, c)])).collect();
    Ok(StepSolution {
        mesh: apply_transforms(template, &transforms),
        transforms,
    })
}

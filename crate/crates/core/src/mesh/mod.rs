//! Indexed triangle meshes and the geometric queries built on them.

mod bvh;
mod geometry;
mod normals;
pub mod obj;
pub mod shapes;

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

pub use bvh::{Aabb, ClosestPoint, RayHit, SpatialIndex};
pub use geometry::{closest_point_on_triangle, ray_triangle, TriangleHit};
pub use normals::vertex_normals;

/// Topology tag carried by meshes that share the full-resolution template layout.
pub const TEMPLATE_11551: &str = "template-11551";
/// Vertex count required by [`TEMPLATE_11551`].
pub const TEMPLATE_11551_VERTICES: usize = 11_551;

/// Indexed triangle surface.
///
/// Meshes with the same `topology_tag` share vertex semantics: vertex `i` of one
/// corresponds to vertex `i` of another.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub topology_tag: Option<String>,
}

impl Mesh {
    /// Builds a mesh and checks its invariants.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            topology_tag: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Result<Self> {
        self.topology_tag = Some(tag.into());
        self.validate()?;
        Ok(self)
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
            topology_tag: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {:?} but mesh has {n} vertices",
                    f
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} is degenerate: {:?}",
                    f
                )));
            }
        }
        if self.topology_tag.as_deref() == Some(TEMPLATE_11551) && n != TEMPLATE_11551_VERTICES {
            return Err(Error::InvalidMesh(format!(
                "topology {TEMPLATE_11551} requires {TEMPLATE_11551_VERTICES} vertices, got {n}"
            )));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal, twice the triangle area in length.
    pub fn face_cross(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a))
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    /// Length of the bounding-box diagonal.
    pub fn diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        self.bounding_box().diagonal()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .vertices
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.vertices.len().max(1) as f64)
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| {
                [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                    .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Number of edges used by exactly one face.
    pub fn boundary_edge_count(&self) -> usize {
        edge_use_counts(&self.faces)
            .values()
            .filter(|&&c| c == 1)
            .count()
    }

    /// Every edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        !self.faces.is_empty() && edge_use_counts(&self.faces).values().all(|&c| c == 2)
    }

    /// Enclosed volume by the divergence theorem. Positive for outward orientation.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| 0.5 * self.face_cross(f).norm())
            .sum()
    }

    /// Applies `f` to every vertex, keeping faces and tag.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            topology_tag: self.topology_tag.clone(),
        }
    }

    /// `p ↦ scale · R p + t`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, scale: f64, translation: &Vector3<f64>) -> Self {
        self.map_vertices(|p| Point3::from(scale * (rotation * p.coords) + translation))
    }

    /// Stacked coordinates `[x0, y0, z0, x1, ...]`.
    pub fn to_stacked(&self) -> Vec<f64> {
        self.vertices
            .iter()
            .flat_map(|p| [p.x, p.y, p.z])
            .collect()
    }

    /// Same faces and tag, vertices replaced from stacked coordinates.
    pub fn with_stacked(&self, stacked: &[f64]) -> Result<Self> {
        if stacked.len() != 3 * self.vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: 3 * self.vertices.len(),
                actual: stacked.len(),
                context: "stacked vertex coordinates",
            });
        }
        Ok(Self {
            vertices: stacked
                .chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect(),
            faces: self.faces.clone(),
            topology_tag: self.topology_tag.clone(),
        })
    }

    /// Flips the winding of every face.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect(),
            topology_tag: self.topology_tag.clone(),
        }
    }

    /// Vertex adjacency lists built from the face edges.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Checks that `other` shares this mesh's vertex layout.
    pub fn check_same_topology(&self, other: &Mesh) -> Result<()> {
        if self.vertices.len() != other.vertices.len() {
            return Err(Error::TopologyMismatch(format!(
                "{} vs {} vertices",
                self.vertices.len(),
                other.vertices.len()
            )));
        }
        if let (Some(a), Some(b)) = (&self.topology_tag, &other.topology_tag) {
            if a != b {
                return Err(Error::TopologyMismatch(format!("tag {a} vs {b}")));
            }
        }
        Ok(())
    }
}

fn edge_use_counts(faces: &[[usize; 3]]) -> HashMap<(usize, usize), u32> {
    let mut counts = HashMap::with_capacity(faces.len() * 2);
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let key = if a < b { (a, b) } else { (b, a) };
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Ray with a unit-length direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    direction: Vector3<f64>,
}

impl Ray {
    /// Normalizes `direction`; fails on a zero or non-finite direction.
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Result<Self> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ray direction {direction:?} cannot be normalized"
            )));
        }
        Ok(Self {
            origin,
            direction: direction / norm,
        })
    }

    #[inline]
    pub fn direction(&self) -> &Vector3<f64> {
        &self.direction
    }

    #[inline]
    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction * t
    }
}

/// Closest point on the mesh surface to `query`.
pub fn closest_point_on_surface(
    query: &Point3<f64>,
    mesh: &Mesh,
    index: &SpatialIndex,
) -> Result<ClosestPoint> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    index.closest_point(query).ok_or(Error::EmptyMesh)
}

/// Nearest positive intersection of `ray` with the mesh.
pub fn ray_intersect(ray: &Ray, _mesh: &Mesh, index: &SpatialIndex) -> Option<RayHit> {
    index.first_hit(ray)
}

/// Ray-parity inside test. Requires a closed mesh.
pub fn point_in_mesh(query: &Point3<f64>, _mesh: &Mesh, index: &SpatialIndex) -> Result<bool> {
    index.contains(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_degenerate_faces() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        assert!(Mesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(Mesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(Mesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn template_tag_requires_vertex_count() {
        let m = shapes::icosahedron(1.0);
        assert!(m.with_tag(TEMPLATE_11551).is_err());
    }

    #[test]
    fn closed_shapes_are_watertight() {
        assert!(shapes::unit_cube().is_watertight());
        assert!(shapes::icosphere(2, 1.0).is_watertight());
        assert!(!shapes::unit_square().is_watertight());
        assert_eq!(shapes::unit_square().boundary_edge_count(), 4);
    }

    #[test]
    fn ray_normalizes_direction() {
        let r = Ray::new(Point3::origin(), Vector3::new(0.0, 3.0, 4.0)).unwrap();
        assert!((r.direction().norm() - 1.0).abs() < 1e-12);
        assert!(Ray::new(Point3::origin(), Vector3::zeros()).is_err());
    }

    #[test]
    fn cube_volume_is_one() {
        assert!((shapes::unit_cube().signed_volume() - 1.0).abs() < 1e-12);
    }
}

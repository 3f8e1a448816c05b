//! Bounding-volume hierarchy over triangle soups.
//!
//! The index keeps its own copy of the triangle corners, so queries never touch
//! the source mesh. Every query has a brute-force twin (`*_brute`) that walks all
//! triangles with the same primitive test and tie-breaking; the accelerated
//! versions must return identical results.

use nalgebra::{Point3, Vector3};

use super::geometry::{closest_point_on_triangle, ray_triangle, TriangleHit};
use super::{Mesh, Ray};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 4;
/// Barycentric margin under which a parity hit counts as an edge graze.
const GRAZE_MARGIN: f64 = 1e-9;
const MAX_PARITY_ATTEMPTS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    /// Box grown by `fraction` of its extent on every side.
    pub fn padded(&self, fraction: f64) -> Aabb {
        let pad = self.extent() * fraction;
        Aabb {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        (0..3)
            .map(|i| {
                let d = (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0);
                d * d
            })
            .sum()
    }

    /// Parametric entry distance of the ray into the box, if it is hit before `t_max`.
    fn ray_entry(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            if dir[i].abs() < 1e-300 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let mut near = (self.min[i] - origin[i]) * inv;
            let mut far = (self.max[i] - origin[i]) * inv;
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Point3<f64>,
    pub face: usize,
    pub distance: f64,
}

/// Result of a ray query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
    pub point: Point3<f64>,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

/// Immutable BVH over a mesh's triangles.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    nodes: Vec<Node>,
    order: Vec<usize>,
    triangles: Vec<[Point3<f64>; 3]>,
    boundary_edges: usize,
}

impl SpatialIndex {
    pub fn build(mesh: &Mesh) -> Self {
        let triangles: Vec<_> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<Point3<f64>> = triangles
            .iter()
            .map(|[a, b, c]| Point3::from((a.coords + b.coords + c.coords) / 3.0))
            .collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            build_node(&mut nodes, &mut order, 0, &triangles, &centroids);
        }
        Self {
            nodes,
            order,
            triangles,
            boundary_edges: mesh.boundary_edge_count(),
        }
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn boundary_edges(&self) -> usize {
        self.boundary_edges
    }

    pub fn bounds(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| n.bounds)
    }

    fn closest_candidate(&self, q: &Point3<f64>, face: usize, best: &mut Option<(f64, usize, Point3<f64>)>) {
        let [a, b, c] = &self.triangles[face];
        let p = closest_point_on_triangle(q, a, b, c);
        let d2 = (p - q).norm_squared();
        let better = match best {
            None => true,
            Some((bd, bf, _)) => d2 < *bd || (d2 == *bd && face < *bf),
        };
        if better {
            *best = Some((d2, face, p));
        }
    }

    /// Closest surface point; equidistant faces resolve to the lowest face id.
    pub fn closest_point(&self, q: &Point3<f64>) -> Option<ClosestPoint> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(f64, usize, Point3<f64>)> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if let Some((bd, _, _)) = best {
                if node.bounds.distance_squared(q) > bd {
                    continue;
                }
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &face in &self.order[start..start + count] {
                        self.closest_candidate(q, face, &mut best);
                    }
                }
                NodeKind::Inner { right } => {
                    let left = ni + 1;
                    let dl = self.nodes[left].bounds.distance_squared(q);
                    let dr = self.nodes[right].bounds.distance_squared(q);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.map(|(d2, face, point)| ClosestPoint {
            point,
            face,
            distance: d2.sqrt(),
        })
    }

    pub fn closest_point_brute(&self, q: &Point3<f64>) -> Option<ClosestPoint> {
        let mut best = None;
        for face in 0..self.triangles.len() {
            self.closest_candidate(q, face, &mut best);
        }
        best.map(|(d2, face, point)| ClosestPoint {
            point,
            face,
            distance: d2.sqrt(),
        })
    }

    fn hit_triangle(&self, ray: &Ray, face: usize) -> Option<TriangleHit> {
        let [a, b, c] = &self.triangles[face];
        ray_triangle(&ray.origin, ray.direction(), a, b, c, 0.0)
    }

    /// Nearest hit with `t > 0`; equal `t` resolves to the lowest face id.
    pub fn first_hit(&self, ray: &Ray) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(f64, usize)> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let t_max = best.map_or(f64::INFINITY, |(t, _)| t);
            if node.bounds.ray_entry(&ray.origin, ray.direction(), t_max).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &face in &self.order[start..start + count] {
                        if let Some(h) = self.hit_triangle(ray, face) {
                            let better = match best {
                                None => true,
                                Some((bt, bf)) => h.t < bt || (h.t == bt && face < bf),
                            };
                            if better {
                                best = Some((h.t, face));
                            }
                        }
                    }
                }
                NodeKind::Inner { right } => {
                    stack.push(right);
                    stack.push(ni + 1);
                }
            }
        }
        best.map(|(t, face)| RayHit {
            t,
            face,
            point: ray.at(t),
        })
    }

    pub fn first_hit_brute(&self, ray: &Ray) -> Option<RayHit> {
        let mut best: Option<(f64, usize)> = None;
        for face in 0..self.triangles.len() {
            if let Some(h) = self.hit_triangle(ray, face) {
                if best.map_or(true, |(bt, bf)| h.t < bt || (h.t == bt && face < bf)) {
                    best = Some((h.t, face));
                }
            }
        }
        best.map(|(t, face)| RayHit {
            t,
            face,
            point: ray.at(t),
        })
    }

    /// Every hit with `t > 0`, sorted by face id.
    pub fn all_hits(&self, ray: &Ray) -> Vec<(usize, TriangleHit)> {
        let mut hits = Vec::new();
        if self.nodes.is_empty() {
            return hits;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node
                .bounds
                .ray_entry(&ray.origin, ray.direction(), f64::INFINITY)
                .is_none()
            {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &face in &self.order[start..start + count] {
                        if let Some(h) = self.hit_triangle(ray, face) {
                            hits.push((face, h));
                        }
                    }
                }
                NodeKind::Inner { right } => {
                    stack.push(right);
                    stack.push(ni + 1);
                }
            }
        }
        hits.sort_by_key(|(f, _)| *f);
        hits
    }

    pub fn all_hits_brute(&self, ray: &Ray) -> Vec<(usize, TriangleHit)> {
        (0..self.triangles.len())
            .filter_map(|f| self.hit_triangle(ray, f).map(|h| (f, h)))
            .collect()
    }

    /// Ray-parity inside test.
    ///
    /// A cast whose hits include an edge or vertex graze is discarded and
    /// re-cast along the next direction of a fixed jitter sequence.
    pub fn contains(&self, q: &Point3<f64>) -> Result<bool> {
        if self.boundary_edges > 0 {
            return Err(Error::NotWatertight {
                boundary_edges: self.boundary_edges,
            });
        }
        match self.bounds() {
            None => return Err(Error::EmptyMesh),
            Some(b) if !b.contains(q) => return Ok(false),
            _ => {}
        }
        self.parity_with(q, parity_directions())
    }

    /// Parity test along caller-supplied directions, used to check direction invariance.
    pub fn contains_along(&self, q: &Point3<f64>, directions: &[Vector3<f64>]) -> Result<bool> {
        if self.boundary_edges > 0 {
            return Err(Error::NotWatertight {
                boundary_edges: self.boundary_edges,
            });
        }
        self.parity_with(q, directions.iter().copied())
    }

    fn parity_with(&self, q: &Point3<f64>, dirs: impl Iterator<Item = Vector3<f64>>) -> Result<bool> {
        let mut last = false;
        for dir in dirs.take(MAX_PARITY_ATTEMPTS) {
            let ray = Ray::new(*q, dir)?;
            let hits = self.all_hits(&ray);
            last = hits.len() % 2 == 1;
            if hits.iter().all(|(_, h)| h.edge_margin() >= GRAZE_MARGIN) {
                return Ok(last);
            }
        }
        Ok(last)
    }
}

/// Deterministic parity-ray directions: a generic base direction followed by
/// golden-angle perturbations of it.
fn parity_directions() -> impl Iterator<Item = Vector3<f64>> {
    const GOLDEN: f64 = 2.399_963_229_728_653;
    (0..MAX_PARITY_ATTEMPTS).map(|k| {
        let base = Vector3::new(0.531_872_9, 0.617_302_3, 0.579_841_7);
        if k == 0 {
            return base;
        }
        let kf = k as f64;
        let z = 1.0 - 2.0 * ((kf + 0.5) / MAX_PARITY_ATTEMPTS as f64);
        let r = (1.0 - z * z).sqrt();
        let phi = GOLDEN * kf;
        base + 0.35 * Vector3::new(r * phi.cos(), r * phi.sin(), z)
    })
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    offset: usize,
    triangles: &[[Point3<f64>; 3]],
    centroids: &[Point3<f64>],
) -> usize {
    let bounds = order
        .iter()
        .flat_map(|&f| triangles[f].iter())
        .fold(Aabb::empty(), |mut b, p| {
            b.grow(p);
            b
        });
    let index = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf {
                start: offset,
                count: order.len(),
            },
        });
        return index;
    }
    let cbounds = Aabb::from_points(order.iter().map(|&f| &centroids[f]));
    let ext = cbounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node {
        bounds,
        kind: NodeKind::Inner { right: 0 },
    });
    let (lo, hi) = order.split_at_mut(mid);
    build_node(nodes, lo, offset, triangles, centroids);
    let right = build_node(nodes, hi, offset + mid, triangles, centroids);
    nodes[index].kind = NodeKind::Inner { right };
    index
}

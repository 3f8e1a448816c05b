//! Marching cubes with the asymptotic decider on ambiguous faces.
//!
//! Instead of a 256-entry lookup table, each cube's iso-contour is traced from
//! its faces: every face contributes directed segments between crossed edges,
//! the segments close into loops, and each loop is fanned into triangles. Both
//! cubes sharing a face derive the same segments (with opposite direction), so
//! the output is watertight whenever the surface stays inside the grid, and
//! swapping inside for outside reverses every loop.

use nalgebra::Point3;
use rayon::prelude::*;

use super::grid::VoxelGrid;
use crate::error::Result;
use crate::mesh::Mesh;

/// Cube corners as `(dx, dy, dz)` offsets; corner `c` has offset bits `c = dx + 2dy + 4dz`.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Corner cycles of the six faces, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2], // x = 0
    [1, 3, 7, 5], // x = 1
    [0, 1, 5, 4], // y = 0
    [2, 6, 7, 3], // y = 1
    [0, 2, 3, 1], // z = 0
    [4, 5, 7, 6], // z = 1
];

/// Extracts the `iso` level set of `grid`; a node is inside when its value exceeds `iso`.
/// A grid without crossings yields an empty mesh.
pub fn marching_cubes(grid: &VoxelGrid, iso: f64) -> Result<Mesh> {
    let spec = &grid.spec;
    spec.validate()?;
    let [nx, ny, nz] = spec.resolution;

    // one vertex per crossed lattice edge, numbered in edge order
    const NONE: u32 = u32::MAX;
    let mut edge_vertex = vec![NONE; 3 * spec.node_count()];
    let mut vertices = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a = [i, j, k];
                for axis in 0..3 {
                    let mut b = a;
                    b[axis] += 1;
                    if b[axis] >= spec.resolution[axis] {
                        continue;
                    }
                    let (fa, fb) = (grid.value(a[0], a[1], a[2]), grid.value(b[0], b[1], b[2]));
                    if (fa > iso) == (fb > iso) {
                        continue;
                    }
                    let t = (iso - fa) / (fb - fa);
                    let pa = spec.node(a[0], a[1], a[2]);
                    let pb = spec.node(b[0], b[1], b[2]);
                    edge_vertex[3 * spec.index(i, j, k) + axis] = vertices.len() as u32;
                    vertices.push(Point3::from(pa.coords + (pb.coords - pa.coords) * t));
                }
            }
        }
    }
    if vertices.is_empty() {
        return Ok(Mesh::empty());
    }

    // slab-local extra vertices are tagged until their final index is known
    const EXTRA: usize = 1 << 62;
    let slabs: Vec<(Vec<[usize; 3]>, Vec<Point3<f64>>)> = (0..nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut faces = Vec::new();
            let mut extra = Vec::new();
            let mut loops = Vec::new();
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let values: [f64; 8] =
                        std::array::from_fn(|c| grid.value(i + CORNERS[c][0], j + CORNERS[c][1], k + CORNERS[c][2]));
                    let mask = values.iter().enumerate().fold(0u8, |m, (c, &v)| m | (((v > iso) as u8) << c));
                    if mask == 0 || mask == 0xff {
                        continue;
                    }
                    let vertex_of = |c0: usize, c1: usize| -> usize {
                        let (lo, hi) = if c0 < c1 { (c0, c1) } else { (c1, c0) };
                        let axis = (hi - lo).trailing_zeros() as usize;
                        let o = CORNERS[lo];
                        let id = edge_vertex[3 * spec.index(i + o[0], j + o[1], k + o[2]) + axis];
                        debug_assert_ne!(id, NONE);
                        id as usize
                    };
                    loops.clear();
                    cube_loops(&values, iso, vertex_of, &mut loops);
                    for ring in &loops {
                        if let Some(pivot) = fan_pivot(ring) {
                            let len = ring.len();
                            for q in 1..len - 1 {
                                faces.push([ring[pivot].0, ring[(pivot + q) % len].0, ring[(pivot + q + 1) % len].0]);
                            }
                        } else {
                            // every fan would run a diagonal along a cube face that the
                            // neighbouring cube may reuse, so fan around the loop centroid
                            let center = EXTRA + extra.len();
                            let sum = ring.iter().fold(nalgebra::Vector3::zeros(), |acc, &(v, _)| acc + vertices[v].coords);
                            extra.push(Point3::from(sum / ring.len() as f64));
                            for q in 0..ring.len() {
                                faces.push([center, ring[q].0, ring[(q + 1) % ring.len()].0]);
                            }
                        }
                    }
                }
            }
            (faces, extra)
        })
        .collect();

    let mut faces = Vec::new();
    for (slab_faces, extra) in slabs {
        let base = vertices.len();
        faces.extend(slab_faces.into_iter().map(|f| f.map(|v| if v >= EXTRA { base + v - EXTRA } else { v })));
        vertices.extend(extra);
    }
    Ok(Mesh {
        vertices,
        faces,
        topology_tag: None,
    })
}

/// A loop vertex and the cube corners of the lattice edge it lies on.
type LoopVertex = (usize, (usize, usize));

/// Smallest-id pivot whose fan diagonals all cross the cube interior.
fn fan_pivot(ring: &[LoopVertex]) -> Option<usize> {
    let len = ring.len();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by_key(|&q| ring[q].0);
    order.into_iter().find(|&p| {
        (2..len.saturating_sub(1)).all(|q| !share_face(ring[p].1, ring[(p + q) % len].1))
    })
}

fn share_face(a: (usize, usize), b: (usize, usize)) -> bool {
    FACES.iter().any(|f| [a.0, a.1, b.0, b.1].iter().all(|c| f.contains(c)))
}

/// Traces the contour loops of one cube, each as a cyclic vertex list.
fn cube_loops(
    values: &[f64; 8],
    iso: f64,
    vertex_of: impl Fn(usize, usize) -> usize,
    out: &mut Vec<Vec<LoopVertex>>,
) {
    // (vertex, successor, edge corners); at most 12 crossed edges per cube
    let mut next: [(usize, usize, (usize, usize)); 12] = [(usize::MAX, usize::MAX, (0, 0)); 12];
    let mut used = 0usize;
    let mut slot_of = |v: usize, corners: (usize, usize), next: &mut [(usize, usize, (usize, usize)); 12]| -> usize {
        for (s, entry) in next.iter().enumerate().take(used) {
            if entry.0 == v {
                return s;
            }
        }
        next[used] = (v, usize::MAX, corners);
        used += 1;
        used - 1
    };

    for face in FACES {
        let f: [f64; 4] = std::array::from_fn(|q| values[face[q]]);
        let ins: [bool; 4] = std::array::from_fn(|q| f[q] > iso);
        // crossings along the cycle: (edge position, entering the inside?)
        let mut crossings: [(usize, bool); 4] = [(0, false); 4];
        let mut n = 0;
        for q in 0..4 {
            let r = (q + 1) % 4;
            if ins[q] != ins[r] {
                crossings[n] = (q, ins[r]);
                n += 1;
            }
        }
        let corners = |q: usize| (face[q], face[(q + 1) % 4]);
        let mut link = |from: usize, to: usize| {
            let a = vertex_of(face[from], face[(from + 1) % 4]);
            let b = vertex_of(face[to], face[(to + 1) % 4]);
            let sa = slot_of(a, corners(from), &mut next);
            next[sa].1 = b;
            slot_of(b, corners(to), &mut next);
        };
        match n {
            0 => {}
            2 => {
                let (enter, leave) = if crossings[0].1 {
                    (crossings[0].0, crossings[1].0)
                } else {
                    (crossings[1].0, crossings[0].0)
                };
                link(enter, leave);
            }
            4 => {
                // diagonal pattern: decide whether the inside corners connect
                let saddle = (f[0] * f[2] - f[1] * f[3]) / (f[0] + f[2] - f[1] - f[3]);
                let inside_connected = saddle > iso;
                for idx in 0..4 {
                    let (q, entering) = crossings[idx];
                    if !entering {
                        continue;
                    }
                    let partner = if inside_connected {
                        crossings[(idx + 3) % 4].0
                    } else {
                        crossings[(idx + 1) % 4].0
                    };
                    link(q, partner);
                }
            }
            _ => unreachable!("a face cycle crosses the iso level an even number of times"),
        }
    }

    let mut visited = [false; 12];
    for start in 0..used {
        if visited[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut s = start;
        while !visited[s] {
            visited[s] = true;
            ring.push((next[s].0, next[s].2));
            let succ = next[s].1;
            s = (0..used).find(|&t| next[t].0 == succ).expect("closed contour");
        }
        out.push(ring);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit::grid::{rasterize_field, GridSpec};
    use crate::implicit::{FnField, MeshOracle, OccupancyField};
    use crate::mesh::{shapes, SpatialIndex};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere_field(p: &Point3<f64>) -> f64 {
        // smooth occupancy crossing 0.5 on the unit sphere
        1.0 / (1.0 + ((p.coords.norm() - 1.0) * 8.0).exp())
    }

    #[test]
    fn single_corner_gives_one_outward_triangle() {
        let spec = GridSpec::cube(0.0, 1.0, 2).unwrap();
        let mut values = vec![0.0; 8];
        values[0] = 1.0;
        let grid = VoxelGrid::new(spec, values).unwrap();
        let mesh = marching_cubes(&grid, 0.5).unwrap();
        assert_eq!(mesh.faces.len(), 1);
        assert_eq!(mesh.vertices.len(), 3);
        for p in &mesh.vertices {
            assert!((p.coords.sum() - 0.5).abs() < 1e-12);
        }
        // normal points away from the occupied corner
        assert!(mesh.face_cross(0).dot(&Vector3::new(1.0, 1.0, 1.0)) > 0.0);
    }

    #[test]
    fn constant_grid_is_empty() {
        let spec = GridSpec::cube(0.0, 1.0, 4).unwrap();
        let grid = VoxelGrid::new(spec, vec![0.9; 64]).unwrap();
        assert!(marching_cubes(&grid, 0.5).unwrap().is_empty());
    }

    #[test]
    fn sphere_vertices_are_near_radius_and_closed() {
        let spec = GridSpec::cube(-1.5, 1.5, 64).unwrap();
        let grid = rasterize_field(&FnField(sphere_field), &spec).unwrap();
        let mesh = marching_cubes(&grid, 0.5).unwrap();
        let diag = spec.cell_size().norm();
        assert!(mesh.vertices.iter().all(|p| (p.coords.norm() - 1.0).abs() < diag));
        assert!(mesh.is_watertight());
        assert!(mesh.signed_volume() > 0.0);
        let p2s: f64 = mesh.vertices.iter().map(|p| (p.coords.norm() - 1.0).abs()).sum::<f64>()
            / mesh.vertices.len() as f64;
        assert!(p2s < spec.cell_size().x);
    }

    #[test]
    fn random_fields_stay_watertight_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let res = [7, 6, 8];
            let spec = GridSpec::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0), res).unwrap();
            let mut values: Vec<f64> = (0..spec.node_count()).map(|_| rng.gen::<f64>()).collect();
            // clear the boundary so every contour is closed
            for k in 0..res[2] {
                for j in 0..res[1] {
                    for i in 0..res[0] {
                        if i == 0 || j == 0 || k == 0 || i == res[0] - 1 || j == res[1] - 1 || k == res[2] - 1 {
                            values[spec.index(i, j, k)] = 0.0;
                        }
                    }
                }
            }
            let grid = VoxelGrid::new(spec, values).unwrap();
            let mesh = marching_cubes(&grid, 0.5).unwrap();
            assert!(mesh.is_watertight());
            // every undirected edge is used once in each direction
            let mut directed = std::collections::HashSet::new();
            for f in &mesh.faces {
                for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                    assert!(directed.insert((a, b)), "edge used twice in one direction");
                }
            }
        }
    }

    #[test]
    fn complement_flips_orientation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec = GridSpec::cube(0.0, 1.0, 9).unwrap();
        let values: Vec<f64> = (0..spec.node_count()).map(|_| rng.gen::<f64>()).collect();
        let grid = VoxelGrid::new(spec, values).unwrap();
        let a = marching_cubes(&grid, 0.4).unwrap();
        let b = marching_cubes(&grid.complement(), 0.6).unwrap();
        assert_eq!(a.vertices.len(), b.vertices.len());
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            assert!((p - q).norm() < 1e-12);
        }
        let mut fa: Vec<_> = a.flipped().faces.iter().map(|f| canonical(*f)).collect();
        let mut fb: Vec<_> = b.faces.iter().map(|f| canonical(*f)).collect();
        fa.sort_unstable();
        fb.sort_unstable();
        assert_eq!(fa, fb);
    }

    fn canonical(f: [usize; 3]) -> [usize; 3] {
        let r = (0..3).min_by_key(|&i| f[i]).unwrap();
        [f[r], f[(r + 1) % 3], f[(r + 2) % 3]]
    }

    #[test]
    fn oracle_round_trip_agrees_on_torus() {
        let torus = shapes::torus(1.0, 0.4, 64, 32);
        let oracle = MeshOracle::new(&torus).unwrap();
        let spec = GridSpec::around(&torus.bounding_box(), 0.1, 64).unwrap();
        let grid = rasterize_field(&oracle, &spec).unwrap();
        let mesh = marching_cubes(&grid, 0.5).unwrap();
        assert!(mesh.is_watertight());
        let extracted = SpatialIndex::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = spec;
        let trials = 2000;
        let agree = (0..trials)
            .filter(|_| {
                let p = Point3::from(Vector3::from_fn(|a, _| rng.gen_range(b.min[a]..b.max[a])));
                extracted.contains(&p).unwrap() == (oracle.occupancy(&p) == 1.0)
            })
            .count();
        assert!(agree as f64 >= 0.99 * trials as f64, "{agree}/{trials}");
    }
}

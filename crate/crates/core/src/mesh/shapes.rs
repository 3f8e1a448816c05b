//! Procedural fixture meshes.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Point3;

use super::Mesh;

fn build(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Mesh {
    Mesh {
        vertices,
        faces,
        topology_tag: None,
    }
}

/// Regular tetrahedron inscribed in a sphere of radius `radius`, outward winding.
pub fn tetrahedron(radius: f64) -> Mesh {
    let s = radius / 3f64.sqrt();
    build(
        vec![
            Point3::new(s, s, s),
            Point3::new(s, -s, -s),
            Point3::new(-s, s, -s),
            Point3::new(-s, -s, s),
        ],
        vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    )
}

/// Axis-aligned unit cube `[0,1]^3`, 12 outward triangles.
pub fn unit_cube() -> Mesh {
    let v = (0..8)
        .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let faces = vec![
        [0, 2, 1], [1, 2, 3], // z = 0
        [4, 5, 6], [5, 7, 6], // z = 1
        [0, 1, 4], [1, 5, 4], // y = 0
        [2, 6, 3], [3, 6, 7], // y = 1
        [0, 4, 2], [2, 4, 6], // x = 0
        [1, 3, 5], [3, 7, 5], // x = 1
    ];
    build(v, faces)
}

/// Unit square in the `z = 0` plane split into two counter-clockwise triangles.
pub fn unit_square() -> Mesh {
    build(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
}

/// Regular icosahedron with vertices on a sphere of radius `radius` (20 faces, 12 vertices).
pub fn icosahedron(radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|p| Point3::from(nalgebra::Vector3::from(*p).normalize() * radius))
        .collect();
    let faces = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    build(vertices, faces)
}

/// Icosahedron subdivided `levels` times with vertices projected onto the sphere.
pub fn icosphere(levels: usize, radius: f64) -> Mesh {
    let mut mesh = icosahedron(1.0);
    for _ in 0..levels {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
        let mut vertices = mesh.vertices.clone();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3<f64>>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a].coords + vertices[b].coords).normalize();
                vertices.push(Point3::from(m));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &mesh.faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            faces.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        mesh = build(vertices, faces);
    }
    mesh.map_vertices(|p| Point3::from(p.coords * radius))
}

/// Torus around the z axis with major radius `major` and tube radius `minor`.
pub fn torus(major: f64, minor: f64, segments: usize, rings: usize) -> Mesh {
    let mut vertices = Vec::with_capacity(segments * rings);
    for i in 0..segments {
        let u = 2.0 * PI * i as f64 / segments as f64;
        for j in 0..rings {
            let v = 2.0 * PI * j as f64 / rings as f64;
            let r = major + minor * v.cos();
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % segments) * rings + (j % rings);
    let mut faces = Vec::with_capacity(2 * segments * rings);
    for i in 0..segments {
        for j in 0..rings {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    build(vertices, faces)
}

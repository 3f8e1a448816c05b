use nalgebra::Vector3;

use super::Mesh;

/// Area-weighted vertex normals. Vertices whose incident faces have zero total
/// area (or no faces) get the zero vector.
pub fn vertex_normals(mesh: &Mesh) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); mesh.vertices.len()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        // |cross| = 2 * area, so summing raw cross products weights by area
        let n = mesh.face_cross(fi);
        for &v in f {
            acc[v] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::zeros()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::{Point3, Rotation3};

    #[test]
    fn flat_triangle_points_up() {
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        for n in vertex_normals(&m) {
            assert_eq!(n, Vector3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn cube_corner_matches_incident_face_sum() {
        let m = shapes::unit_cube();
        let normals = vertex_normals(&m);
        for (v, n) in normals.iter().enumerate() {
            // brute force: scan every face, weight unit normal by area
            let mut sum = Vector3::zeros();
            for f in 0..m.faces.len() {
                if m.faces[f].contains(&v) {
                    let c = m.face_cross(f);
                    let area = 0.5 * c.norm();
                    sum += c.normalize() * area;
                }
            }
            let expected = sum.normalize();
            assert!((n - expected).norm() < 1e-12);
            // a cube corner normal points away from the center
            let out = (m.vertices[v] - Point3::new(0.5, 0.5, 0.5)).normalize();
            assert!(n.dot(&out) > 0.5);
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = shapes::icosphere(3, 1.0);
        let limit = 2f64.to_radians().cos();
        for (p, n) in m.vertices.iter().zip(vertex_normals(&m)) {
            assert!(n.dot(&p.coords.normalize()) > limit);
        }
    }

    #[test]
    fn isolated_vertex_gets_zero_sentinel() {
        let mut m = shapes::unit_square();
        m.vertices.push(Point3::new(5.0, 5.0, 5.0));
        let normals = vertex_normals(&m);
        assert_eq!(normals[4], Vector3::zeros());
    }

    #[test]
    fn normals_rotate_with_the_mesh() {
        let m = shapes::torus(1.0, 0.3, 24, 12);
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let rotated = m.transformed(rot.matrix(), 1.0, &Vector3::new(0.5, 2.0, -1.0));
        for (a, b) in vertex_normals(&m).iter().zip(vertex_normals(&rotated)) {
            assert!((rot * a - b).norm() < 1e-9);
        }
    }
}

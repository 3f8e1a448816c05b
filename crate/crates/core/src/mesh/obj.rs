//! Wavefront OBJ reading and writing (vertex positions and triangle faces only).
//!
//! The topology tag travels as a `# topology <tag>` comment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Result};

const TOPOLOGY_PREFIX: &str = "# topology ";

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_obj(mesh)).map_err(|e| Error::io(path, e))
}

pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces: Vec<([usize; 3], usize)> = Vec::new();
    let mut tag = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if let Some(t) = line.strip_prefix(TOPOLOGY_PREFIX) {
            tag = Some(t.trim().to_string());
            continue;
        }
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in xyz.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| parse_err(line_no, "vertex needs 3 coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let idx: Vec<&str> = tokens.collect();
                if idx.len() != 3 {
                    return Err(parse_err(
                        line_no,
                        format!("only triangles are supported, face has {} corners", idx.len()),
                    ));
                }
                let mut face = [0usize; 3];
                for (slot, tok) in face.iter_mut().zip(&idx) {
                    *slot = resolve_index(tok, vertices.len(), line_no)?;
                }
                faces.push((face, line_no));
            }
            // normals, texture coordinates, groups and materials are ignored
            Some(_) | None => {}
        }
    }

    let n = vertices.len();
    for (face, line_no) in &faces {
        if let Some(bad) = face.iter().find(|&&i| i >= n) {
            return Err(parse_err(
                *line_no,
                format!("face index {} exceeds vertex count {n}", bad + 1),
            ));
        }
        if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            return Err(parse_err(*line_no, "degenerate face repeats a vertex"));
        }
    }
    let mesh = Mesh {
        vertices,
        faces: faces.into_iter().map(|(f, _)| f).collect(),
        topology_tag: tag,
    };
    mesh.validate()?;
    Ok(mesh)
}

fn resolve_index(token: &str, seen_vertices: usize, line_no: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| parse_err(line_no, format!("bad face index {token:?}")))?;
    match raw {
        0 => Err(parse_err(line_no, "face index 0 is invalid (indices are 1-based)")),
        r if r > 0 => Ok(r as usize - 1),
        r => {
            // negative indices count back from the most recent vertex
            let back = (-r) as usize;
            if back > seen_vertices {
                Err(parse_err(line_no, format!("relative index {r} before start of file")))
            } else {
                Ok(seen_vertices - back)
            }
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn format_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 20);
    if let Some(tag) = &mesh.topology_tag {
        let _ = writeln!(out, "{TOPOLOGY_PREFIX}{tag}");
    }
    for p in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z));
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros trimmed.
pub fn format_sig9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= DIGITS {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (DIGITS - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1234567891.0), "1.23456789e+09");
        assert_eq!(format_sig9(1.5e-7), "1.5e-07");
        assert_eq!(format_sig9(0.000123456789123), "0.000123456789");
    }

    #[test]
    fn tetrahedron_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tet.obj");
        let tet = shapes::tetrahedron(1.0);
        save_mesh(&tet, &path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.vertices.len(), 4);
        assert_eq!(back.faces, tet.faces);
        for (a, b) in tet.vertices.iter().zip(&back.vertices) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn icosahedron_resave_is_byte_identical() {
        let first = format_obj(&shapes::icosahedron(1.0));
        let reloaded = parse_obj(&first).unwrap();
        assert_eq!(reloaded.vertices.len(), 12);
        assert_eq!(reloaded.faces.len(), 20);
        let second = format_obj(&reloaded);
        let vlines = |s: &str| s.lines().filter(|l| l.starts_with("v ")).map(String::from).collect::<Vec<_>>();
        assert_eq!(vlines(&first), vlines(&second));
        assert_eq!(first, second);
    }

    #[test]
    fn face_index_past_end_names_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\n# comment\nf 1 2 4\n";
        match parse_obj(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("exceeds"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_tokens_and_quads_are_rejected() {
        assert!(matches!(parse_obj("v 0 zero 0\n"), Err(Error::Parse { line: 1, .. })));
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(parse_obj(quad), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn slash_and_negative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 -1//1\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn topology_tag_survives() {
        let mut m = shapes::tetrahedron(1.0);
        m.topology_tag = Some("head-642".into());
        let back = parse_obj(&format_obj(&m)).unwrap();
        assert_eq!(back.topology_tag.as_deref(), Some("head-642"));
    }
}

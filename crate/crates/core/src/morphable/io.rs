//! Basis and region-mask files.
//!
//! A basis file is a short text header closed by `data f64le`, followed by
//! little-endian `f64` values (mean, then each component, then eigenvalues) and
//! the template faces as little-endian `u32` triples.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{RegionMask, ShapeBasis};
use crate::error::{Error, Result};
use crate::io_util::split_header;

const MAGIC: &str = "SHAPEBASIS 1";
const DATA_LINE: &str = "data f64le";

impl ShapeBasis {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.vertex_count();
        let d = self.dim();
        let mut header = String::new();
        let _ = writeln!(header, "{MAGIC}");
        let _ = writeln!(header, "vertices {n}");
        let _ = writeln!(header, "components {d}");
        let _ = writeln!(header, "faces {}", self.faces.len());
        let _ = writeln!(header, "topology {}", self.topology_tag.as_deref().unwrap_or("-"));
        let _ = writeln!(header, "total_variance {:e}", self.total_variance);
        let _ = writeln!(header, "{DATA_LINE}");
        let mut out = header.into_bytes();
        out.reserve(8 * (3 * n * (d + 1) + d) + 12 * self.faces.len());
        let floats = self
            .mean
            .iter()
            .chain(self.components.iter())
            .chain(self.eigenvalues.iter());
        for x in floats {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for f in &self.faces {
            for &i in f {
                out.extend_from_slice(&(i as u32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, body) = split_header(bytes)?;
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Parse { line: 1, message: format!("expected {MAGIC:?}") });
        }
        let mut n = None;
        let mut d = None;
        let mut f = None;
        let mut tag = None;
        let mut total = None;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let (key, value) = line.split_once(' ').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("malformed header line {line:?}"),
            })?;
            let bad = |what: &str| Error::Parse { line: line_no, message: format!("bad {what} {value:?}") };
            match key {
                "vertices" => n = Some(value.parse::<usize>().map_err(|_| bad("vertex count"))?),
                "components" => d = Some(value.parse::<usize>().map_err(|_| bad("component count"))?),
                "faces" => f = Some(value.parse::<usize>().map_err(|_| bad("face count"))?),
                "topology" => tag = Some((value != "-").then(|| value.to_string())),
                "total_variance" => total = Some(value.parse::<f64>().map_err(|_| bad("variance"))?),
                _ => {
                    return Err(Error::Parse { line: line_no, message: format!("unknown header key {key:?}") })
                }
            }
        }
        let missing = |k: &str| Error::Format(format!("basis header lacks {k}"));
        let n = n.ok_or_else(|| missing("vertices"))?;
        let d = d.ok_or_else(|| missing("components"))?;
        let f = f.ok_or_else(|| missing("faces"))?;
        let total = total.ok_or_else(|| missing("total_variance"))?;
        let float_count = 3 * n * (d + 1) + d;
        let expected = 8 * float_count + 12 * f;
        if body.len() != expected {
            return Err(Error::Format(format!(
                "basis payload has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let (float_bytes, face_bytes) = body.split_at(8 * float_count);
        let floats: Vec<f64> = float_bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let ints: Vec<usize> = face_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
            .collect();
        let rows = 3 * n;
        let mean = floats[..rows].to_vec();
        let components = (0..d)
            .map(|j| floats[rows * (j + 1)..rows * (j + 2)].to_vec())
            .collect();
        let eigenvalues = floats[rows * (d + 1)..].to_vec();
        let faces = ints.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        ShapeBasis::from_parts(mean, components, eigenvalues, total, faces, tag.flatten())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// One line per region: the name followed by vertex indices.
pub fn format_region_masks(masks: &[RegionMask]) -> String {
    let mut out = String::new();
    for m in masks {
        out.push_str(&m.name);
        for i in &m.indices {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_region_masks(text: &str) -> Result<Vec<RegionMask>> {
    let mut masks: Vec<RegionMask> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let name = tok.next().expect("non-empty line").to_string();
        if masks.iter().any(|m| m.name == name) {
            return Err(Error::Parse { line: i + 1, message: format!("region {name} listed twice") });
        }
        let indices = tok
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad vertex index {t:?}"),
                })
            })
            .collect::<Result<_>>()?;
        masks.push(RegionMask { name, indices });
    }
    Ok(masks)
}

pub fn load_region_masks(path: impl AsRef<Path>) -> Result<Vec<RegionMask>> {
    let path = path.as_ref();
    parse_region_masks(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_region_masks(masks: &[RegionMask], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_region_masks(masks)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::morphable::BasisSize;
    use nalgebra::Vector3;

    #[test]
    fn basis_file_round_trip_is_exact() {
        let meshes: Vec<_> = (0..4)
            .map(|i| {
                shapes::icosphere(1, 1.0)
                    .map_vertices(|p| p + Vector3::new(0.01 * i as f64 * p.y, 0.02 * (i * i) as f64 * p.x, 0.0))
                    .with_tag("ico-42")
                    .unwrap()
            })
            .collect();
        let basis = ShapeBasis::build(&meshes, BasisSize::Components(2)).unwrap();
        let back = ShapeBasis::from_bytes(&basis.to_bytes()).unwrap();
        assert_eq!(back, basis);
        let mut truncated = basis.to_bytes();
        truncated.pop();
        assert!(matches!(ShapeBasis::from_bytes(&truncated), Err(Error::Format(_))));
    }

    #[test]
    fn region_masks_round_trip() {
        let masks = vec![
            RegionMask { name: "nose".into(), indices: vec![1, 5, 9] },
            RegionMask { name: "ear".into(), indices: vec![] },
        ];
        assert_eq!(parse_region_masks(&format_region_masks(&masks)).unwrap(), masks);
        assert!(parse_region_masks("nose 1 x\n").is_err());
    }
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::OccupancyField;
use crate::error::{Error, Result};
use crate::mesh::Aabb;
use crate::io_util::split_header;

const MAGIC: &str = "VOXELGRID 1";

/// Axis-aligned lattice: node `(i, j, k)` sits at `min + (max - min) * (i, j, k) / (res - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
    pub resolution: [usize; 3],
}

impl GridSpec {
    pub fn new(min: Point3<f64>, max: Point3<f64>, resolution: [usize; 3]) -> Result<Self> {
        let spec = Self { min, max, resolution };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cube(min: f64, max: f64, resolution: usize) -> Result<Self> {
        Self::new(Point3::new(min, min, min), Point3::new(max, max, max), [resolution; 3])
    }

    /// Box padded by `padding` (a fraction of each extent) around `bounds`.
    pub fn around(bounds: &Aabb, padding: f64, resolution: usize) -> Result<Self> {
        let b = bounds.padded(padding);
        Self::new(b.min, b.max, [resolution; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution.iter().any(|&r| r < 2) {
            return Err(Error::InvalidArgument(format!(
                "grid resolution {:?} must be at least 2 per axis",
                self.resolution
            )));
        }
        for a in 0..3 {
            if !(self.max[a] > self.min[a]) || !self.min[a].is_finite() || !self.max[a].is_finite() {
                return Err(Error::InvalidArgument(format!("grid box is empty along axis {a}")));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Spacing between neighbouring nodes per axis.
    pub fn cell_size(&self) -> Vector3<f64> {
        Vector3::from_fn(|a, _| (self.max[a] - self.min[a]) / (self.resolution[a] - 1) as f64)
    }

    /// Linear index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        let c = [i, j, k];
        Point3::from(Vector3::from_fn(|a, _| {
            let t = c[a] as f64 / (self.resolution[a] - 1) as f64;
            self.min[a] + (self.max[a] - self.min[a]) * t
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    /// Node samples, x fastest.
    pub values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.node_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.node_count(),
                actual: values.len(),
                context: "grid samples",
            });
        }
        Ok(Self { spec, values })
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    /// Trilinear interpolation; zero outside the box.
    pub fn trilinear(&self, p: &Point3<f64>) -> f64 {
        let s = &self.spec;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = s.resolution[a];
            let x = (p[a] - s.min[a]) / (s.max[a] - s.min[a]) * (n - 1) as f64;
            if !(x >= 0.0 && x <= (n - 1) as f64) {
                return 0.0;
            }
            let cell = (x.floor() as usize).min(n - 2);
            base[a] = cell;
            frac[a] = x - cell as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let d = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if d[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.value(base[0] + d[0], base[1] + d[1], base[2] + d[2]);
            }
        }
        acc
    }

    pub fn complement(&self) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Text header followed by little-endian `f32` samples.
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.spec;
        let mut header = String::new();
        let _ = writeln!(header, "{MAGIC}");
        let _ = writeln!(header, "min {:e} {:e} {:e}", s.min.x, s.min.y, s.min.z);
        let _ = writeln!(header, "max {:e} {:e} {:e}", s.max.x, s.max.y, s.max.z);
        let _ = writeln!(header, "resolution {} {} {}", s.resolution[0], s.resolution[1], s.resolution[2]);
        let _ = writeln!(header, "data f32le");
        let mut out = header.into_bytes();
        out.reserve(4 * self.values.len());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, body) = split_header(bytes)?;
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Parse { line: 1, message: format!("expected {MAGIC:?}") });
        }
        let mut min = None;
        let mut max = None;
        let mut res = None;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let mut tok = line.split_whitespace();
            let key = tok.next().unwrap_or("");
            let rest: Vec<&str> = tok.collect();
            let err = |m: String| Error::Parse { line: line_no, message: m };
            if rest.len() != 3 {
                return Err(err(format!("{key} expects 3 values")));
            }
            match key {
                "min" | "max" => {
                    let v = rest
                        .iter()
                        .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    let p = Point3::new(v[0], v[1], v[2]);
                    if key == "min" {
                        min = Some(p);
                    } else {
                        max = Some(p);
                    }
                }
                "resolution" => {
                    let v = rest
                        .iter()
                        .map(|s| s.parse::<usize>().map_err(|_| err(format!("bad resolution {s:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    res = Some([v[0], v[1], v[2]]);
                }
                other => return Err(err(format!("unknown header key {other:?}"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("grid header lacks {k}"));
        let spec = GridSpec::new(
            min.ok_or_else(|| missing("min"))?,
            max.ok_or_else(|| missing("max"))?,
            res.ok_or_else(|| missing("resolution"))?,
        )?;
        if body.len() != 4 * spec.node_count() {
            return Err(Error::Format(format!(
                "grid payload has {} bytes, expected {}",
                body.len(),
                4 * spec.node_count()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect();
        Self::new(spec, values)
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

/// Samples `field` at every lattice node (in parallel, deterministic order).
pub fn rasterize_field(field: &dyn OccupancyField, spec: &GridSpec) -> Result<VoxelGrid> {
    spec.validate()?;
    let [nx, ny, _] = spec.resolution;
    let values = (0..spec.node_count())
        .into_par_iter()
        .map(|idx| {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            field.occupancy(&spec.node(i, j, k))
        })
        .collect();
    VoxelGrid::new(*spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit::{FnField, MeshOracle};
    use crate::mesh::shapes;

    fn sphere_indicator(p: &Point3<f64>) -> f64 {
        if p.coords.norm() < 1.0 {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn cube_center_is_inside() {
        let oracle = MeshOracle::new(&shapes::unit_cube()).unwrap();
        let spec = GridSpec::cube(0.0, 1.0, 3).unwrap();
        let grid = rasterize_field(&oracle, &spec).unwrap();
        assert_eq!(grid.value(1, 1, 1), 1.0);
    }

    #[test]
    fn nodes_outside_shape_are_zero() {
        let oracle = MeshOracle::new(&shapes::unit_cube()).unwrap();
        let spec = GridSpec::cube(2.0, 3.0, 4).unwrap();
        let grid = rasterize_field(&oracle, &spec).unwrap();
        assert!(grid.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sphere_grid_matches_indicator_away_from_shell() {
        let mesh = shapes::icosphere(5, 1.0);
        let oracle = MeshOracle::new(&mesh).unwrap();
        let spec = GridSpec::cube(-1.25, 1.25, 32).unwrap();
        let grid = rasterize_field(&oracle, &spec).unwrap();
        let half = 0.5 * spec.cell_size().x;
        // the faceted sphere sits within 1 - cos(edge angle) of the true radius
        let facet_gap = 0.002;
        for k in 0..32 {
            for j in 0..32 {
                for i in 0..32 {
                    let p = spec.node(i, j, k);
                    if (p.coords.norm() - 1.0).abs() > half + facet_gap {
                        assert_eq!(grid.value(i, j, k), sphere_indicator(&p));
                    }
                }
            }
        }
    }

    #[test]
    fn trilinear_reproduces_linear_fields() {
        let spec = GridSpec::new(Point3::new(-1.0, 0.0, 2.0), Point3::new(1.0, 3.0, 4.0), [5, 4, 3]).unwrap();
        let f = |p: &Point3<f64>| 0.3 * p.x - 0.2 * p.y + 0.1 * p.z + 0.05;
        let grid = rasterize_field(&FnField(f), &spec).unwrap();
        for p in [Point3::new(0.13, 1.7, 2.9), Point3::new(-1.0, 0.0, 2.0), Point3::new(1.0, 3.0, 4.0)] {
            assert!((grid.trilinear(&p) - f(&p)).abs() < 1e-12);
        }
        assert_eq!(grid.trilinear(&Point3::new(5.0, 1.0, 3.0)), 0.0);
    }

    #[test]
    fn file_round_trip_to_f32() {
        let spec = GridSpec::cube(-1.0, 1.0, 5).unwrap();
        let grid = rasterize_field(&FnField(|p: &Point3<f64>| (p.x * 0.3 + 0.5).clamp(0.0, 1.0)), &spec).unwrap();
        let back = VoxelGrid::from_bytes(&grid.to_bytes()).unwrap();
        assert_eq!(back.spec, grid.spec);
        for (a, b) in grid.values.iter().zip(&back.values) {
            assert_eq!(*b, *a as f32 as f64);
        }
        assert!(GridSpec::cube(0.0, 1.0, 1).is_err());
    }
}

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{Aabb, Mesh, Ray};

/// The three rendering views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViewId {
    Front,
    Left,
    Right,
}

impl ViewId {
    pub const ALL: [ViewId; 3] = [ViewId::Front, ViewId::Left, ViewId::Right];

    pub fn index(self) -> usize {
        match self {
            ViewId::Front => 0,
            ViewId::Left => 1,
            ViewId::Right => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewId::Front => "front",
            ViewId::Left => "left",
            ViewId::Right => "right",
        }
    }

    /// Yaw of the view about the vertical axis. The subject faces `+z` with
    /// its left side toward `+x`.
    pub fn yaw(self) -> f64 {
        match self {
            ViewId::Front => 0.0,
            ViewId::Left => -std::f64::consts::FRAC_PI_2,
            ViewId::Right => std::f64::consts::FRAC_PI_2,
        }
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViewId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "front" | "f" => Ok(ViewId::Front),
            "left" | "l" => Ok(ViewId::Left),
            "right" | "r" => Ok(ViewId::Right),
            other => Err(Error::InvalidArgument(format!("unknown view {other:?}"))),
        }
    }
}

/// Pixel coordinates plus view-space depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Orthographic camera. World points map to view space by `q = R p + t`;
/// the camera looks down `-z` of view space, so larger depth is nearer.
/// Pixels: `u = w/2 + s q.x`, `v = h/2 - s q.y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewCamera {
    pub view: ViewId,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
    pub width: usize,
    pub height: usize,
}

impl ViewCamera {
    pub fn new(
        view: ViewId,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        scale: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self {
            view,
            rotation,
            translation,
            scale,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "{} camera rotation is not a proper rotation",
                self.view
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{} camera scale must be positive, got {}",
                self.view, self.scale
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        Ok(())
    }

    fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn to_view(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    pub fn project(&self, p: &Point3<f64>) -> Projection {
        let q = self.to_view(p);
        let (cx, cy) = self.center();
        Projection {
            u: cx + self.scale * q.x,
            v: cy - self.scale * q.y,
            depth: q.z,
        }
    }

    /// Inverse of [`project`](Self::project) at a given view depth.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        let (cx, cy) = self.center();
        let q = Vector3::new((u - cx) / self.scale, (cy - v) / self.scale, depth);
        Point3::from(self.rotation.transpose() * (q - self.translation))
    }

    /// World-space viewing direction (view `-z`).
    pub fn forward(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * Vector3::z())
    }

    /// Ray through pixel `(u, v)` starting at view depth `start_depth`, pointing into the scene.
    pub fn pixel_ray(&self, u: f64, v: f64, start_depth: f64) -> Ray {
        Ray::new(self.unproject(u, v, start_depth), self.forward()).expect("unit forward direction")
    }

    /// Largest view depth of the box corners.
    pub fn max_depth(&self, bounds: &Aabb) -> f64 {
        corners(bounds)
            .iter()
            .map(|c| self.to_view(c).z)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest view depth of the box corners.
    pub fn min_depth(&self, bounds: &Aabb) -> f64 {
        corners(bounds)
            .iter()
            .map(|c| self.to_view(c).z)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn in_frame(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= self.width as f64 && v <= self.height as f64
    }
}

fn corners(b: &Aabb) -> [Point3<f64>; 8] {
    std::array::from_fn(|i| {
        Point3::new(
            if i & 1 == 0 { b.min.x } else { b.max.x },
            if i & 2 == 0 { b.min.y } else { b.max.y },
            if i & 4 == 0 { b.min.z } else { b.max.z },
        )
    })
}

/// Front, left and right cameras, indexed by [`ViewId::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub cameras: [ViewCamera; 3],
}

impl Rig {
    pub fn camera(&self, view: ViewId) -> &ViewCamera {
        &self.cameras[view.index()]
    }
}

impl ViewCamera {
    /// Text block: `view`, row-major `rotation`, `translation`, `scale`, `image` records.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let r = &self.rotation;
        let _ = writeln!(out, "view {}", self.view);
        let _ = writeln!(
            out,
            "rotation {}",
            (0..3)
                .flat_map(|i| (0..3).map(move |j| format_exact(r[(i, j)])))
                .collect::<Vec<_>>()
                .join(" ")
        );
        let t = &self.translation;
        let _ = writeln!(
            out,
            "translation {} {} {}",
            format_exact(t.x),
            format_exact(t.y),
            format_exact(t.z)
        );
        let _ = writeln!(out, "scale {}", format_exact(self.scale));
        let _ = writeln!(out, "image {} {}", self.width, self.height);
        out
    }

    /// Parses one camera block; `first_line` offsets reported line numbers.
    pub fn parse_block(text: &str, first_line: usize) -> Result<Self> {
        let mut view = None;
        let mut rotation = None;
        let mut translation = None;
        let mut scale = None;
        let mut image = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = first_line + i;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse { line: line_no, message: m };
            let mut tok = line.split_whitespace();
            let key = tok.next().unwrap_or("");
            let rest: Vec<&str> = tok.collect();
            let floats = |count: usize| -> Result<Vec<f64>> {
                if rest.len() != count {
                    return Err(err(format!("{key} expects {count} values")));
                }
                rest.iter()
                    .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}"))))
                    .collect()
            };
            match key {
                "view" => {
                    if view.is_some() {
                        return Err(err("second `view` record in one camera block".into()));
                    }
                    let name = rest.first().ok_or_else(|| err("missing view name".into()))?;
                    view = Some(name.parse::<ViewId>().map_err(|e| err(e.to_string()))?);
                }
                "rotation" => rotation = Some(Matrix3::from_row_slice(&floats(9)?)),
                "translation" => translation = Some(Vector3::from_vec(floats(3)?)),
                "scale" => scale = Some(floats(1)?[0]),
                "image" => {
                    if rest.len() != 2 {
                        return Err(err("image expects width and height".into()));
                    }
                    let dims = rest
                        .iter()
                        .map(|s| s.parse::<usize>().map_err(|_| err(format!("bad size {s:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    image = Some((dims[0], dims[1]));
                }
                other => return Err(err(format!("unknown camera record {other:?}"))),
            }
        }
        let view = view.ok_or_else(|| Error::Format("camera block has no view record".into()))?;
        let missing = |what: &str| Error::Format(format!("{view} camera is missing {what}"));
        let (w, h) = image.ok_or_else(|| missing("image size"))?;
        ViewCamera::new(
            view,
            rotation.ok_or_else(|| missing("rotation"))?,
            translation.ok_or_else(|| missing("translation"))?,
            scale.ok_or_else(|| missing("scale"))?,
            w,
            h,
        )
    }
}

impl Rig {
    pub fn to_text(&self) -> String {
        self.cameras.iter().map(ViewCamera::to_text).collect()
    }

    /// Parses three camera blocks, each opened by a `view` record.
    pub fn parse(text: &str) -> Result<Self> {
        let mut blocks: Vec<(usize, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim_start().starts_with("view") || blocks.is_empty() {
                blocks.push((i + 1, String::new()));
            }
            let block = &mut blocks.last_mut().expect("block opened").1;
            block.push_str(line);
            block.push('\n');
        }
        let mut cams: [Option<ViewCamera>; 3] = Default::default();
        for (first_line, block) in &blocks {
            if block.trim().is_empty() {
                continue;
            }
            let cam = ViewCamera::parse_block(block, *first_line)?;
            let view = cam.view;
            if cams[view.index()].replace(cam).is_some() {
                return Err(Error::Parse {
                    line: *first_line,
                    message: format!("{view} view defined twice"),
                });
            }
        }
        let [f, l, r] = cams;
        let need = |c: Option<ViewCamera>, v: ViewId| c.ok_or_else(|| Error::Format(format!("rig lacks the {v} camera")));
        Ok(Self {
            cameras: [need(f, ViewId::Front)?, need(l, ViewId::Left)?, need(r, ViewId::Right)?],
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Round-trip exact float formatting for camera parameters.
fn format_exact(x: f64) -> String {
    format!("{x:e}")
}

/// Fraction of the image the bounding box spans in its largest view extent.
pub const RIG_FILL: f64 = 0.9;

/// Three orthographic views centred on the mesh bounding box, sharing one
/// scale chosen so the box spans [`RIG_FILL`] of the image.
pub fn default_rig(mesh: &Mesh, width: usize, height: usize) -> Result<Rig> {
    if mesh.vertices.is_empty() {
        return Err(Error::EmptyMesh);
    }
    rig_for_bounds(&mesh.bounding_box(), width, height)
}

pub fn rig_for_bounds(bounds: &Aabb, width: usize, height: usize) -> Result<Rig> {
    let ext = bounds.extent();
    let horizontal = ext.x.max(ext.z);
    if !(horizontal > 0.0 && ext.y > 0.0) {
        return Err(Error::Degenerate(format!(
            "bounding box extent {:?} has a zero dimension",
            ext
        )));
    }
    let scale = RIG_FILL * (width as f64 / horizontal).min(height as f64 / ext.y);
    let center = bounds.center().coords;
    let make = |view: ViewId| -> Result<ViewCamera> {
        let rotation = *Rotation3::from_axis_angle(&Vector3::y_axis(), view.yaw()).matrix();
        ViewCamera::new(view, rotation, -(rotation * center), scale, width, height)
    };
    Ok(Rig {
        cameras: [make(ViewId::Front)?, make(ViewId::Left)?, make(ViewId::Right)?],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn centered_cube() -> Mesh {
        shapes::unit_cube().map_vertices(|p| p - Vector3::new(0.5, 0.5, 0.5))
    }

    #[test]
    fn front_projection_is_symmetric() {
        let rig = default_rig(&centered_cube(), 512, 512).unwrap();
        let cam = rig.camera(ViewId::Front);
        let a = cam.project(&Point3::new(0.5, 0.5, 0.3));
        let b = cam.project(&Point3::new(-0.5, -0.5, -0.2));
        assert!((a.u + b.u - 512.0).abs() < 1e-12);
        assert!((a.v + b.v - 512.0).abs() < 1e-12);
        // the box spans 90% of the image
        assert!((a.u - b.u - 0.9 * 512.0).abs() < 1e-9);
    }

    #[test]
    fn rig_file_round_trip_is_exact() {
        let rig = default_rig(&shapes::torus(1.3, 0.4, 12, 8), 640, 480).unwrap();
        let back = Rig::parse(&rig.to_text()).unwrap();
        assert_eq!(back, rig);
        assert!(Rig::parse("view front\nscale 2\n").is_err());
    }

    #[test]
    fn left_view_sees_plus_x_on_axis() {
        let rig = default_rig(&centered_cube(), 512, 512).unwrap();
        let cam = rig.camera(ViewId::Left);
        let p = Point3::new(0.4, 0.0, 0.0);
        let proj = cam.project(&p);
        let explicit = Matrix3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0) * p.coords;
        assert!((proj.u - 256.0).abs() < 1e-12);
        assert!((proj.depth - explicit.z).abs() < 1e-12);
        assert!(proj.depth > 0.0, "the +x side faces the left camera");
        assert!((cam.forward() - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn orthographic_ignores_depth() {
        let rig = default_rig(&centered_cube(), 256, 128).unwrap();
        let cam = rig.camera(ViewId::Right);
        let p = Point3::new(0.1, 0.2, 0.3);
        let q = p + cam.forward() * 0.7;
        let (a, b) = (cam.project(&p), cam.project(&q));
        assert!((a.u - b.u).abs() < 1e-12 && (a.v - b.v).abs() < 1e-12);
        assert!((a.depth - b.depth - 0.7).abs() < 1e-12);
    }

    #[test]
    fn unproject_inverts_project() {
        let rig = default_rig(&shapes::icosphere(1, 2.0), 300, 200).unwrap();
        for cam in &rig.cameras {
            for p in [Point3::new(0.3, -0.7, 1.1), Point3::new(-1.9, 0.2, 0.0)] {
                let pr = cam.project(&p);
                let back = cam.unproject(pr.u, pr.v, pr.depth);
                assert!((back - p).norm() < 1e-12);
                let again = cam.project(&back);
                assert!((again.u - pr.u).abs() < 1e-9 && (again.v - pr.v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rig_translation_covariance() {
        let m = shapes::torus(1.0, 0.3, 12, 6);
        let shift = Vector3::new(3.0, -1.0, 0.5);
        let moved = m.map_vertices(|p| p + shift);
        let (a, b) = (default_rig(&m, 512, 512).unwrap(), default_rig(&moved, 512, 512).unwrap());
        for (ca, cb) in a.cameras.iter().zip(&b.cameras) {
            let p = Point3::new(0.2, 0.1, -0.3);
            let (pa, pb) = (ca.project(&p), cb.project(&(p + shift)));
            assert!((pa.u - pb.u).abs() < 1e-9 && (pa.v - pb.v).abs() < 1e-9);
            assert!((ca.scale - cb.scale).abs() < 1e-12);
        }
    }

    #[test]
    fn rig_scale_covariance() {
        let m = shapes::torus(1.0, 0.3, 12, 6).map_vertices(|p| p + Vector3::new(0.2, 0.4, -0.1));
        let k = 3.5;
        let scaled = m.map_vertices(|p| Point3::from(p.coords * k));
        let (a, b) = (default_rig(&m, 512, 512).unwrap(), default_rig(&scaled, 512, 512).unwrap());
        for (ca, cb) in a.cameras.iter().zip(&b.cameras) {
            assert!((ca.scale / cb.scale - k).abs() < 1e-12);
            for p in &m.vertices {
                let (pa, pb) = (ca.project(p), cb.project(&Point3::from(p.coords * k)));
                assert!((pa.u - pb.u).abs() < 1e-9 && (pa.v - pb.v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_mesh_is_degenerate() {
        let needle = Mesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 1.0), Point3::new(0.0, 0.0, 2.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(default_rig(&needle, 64, 64), Err(Error::Degenerate(_))));
        assert!(default_rig(&shapes::unit_square(), 64, 64).is_ok());
    }

    #[test]
    fn rejects_improper_rotation() {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(ViewCamera::new(ViewId::Front, flip, Vector3::zeros(), 1.0, 8, 8).is_err());
    }
}

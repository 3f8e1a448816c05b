use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point2, Point3, Vector3};

use super::camera::{Rig, ViewCamera, ViewId};
use super::scheme::LandmarkScheme;
use crate::error::{Error, Result};
use crate::mesh::obj::format_sig9;
use crate::mesh::{Mesh, SpatialIndex};

/// 2D landmarks of one view, aligned with the scheme's view subset.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet2D {
    pub view: ViewId,
    pub points: Vec<Point2<f64>>,
}

impl LandmarkSet2D {
    /// Per-point flags for points that fall outside the camera image.
    pub fn out_of_frame(&self, camera: &ViewCamera) -> Vec<bool> {
        self.points.iter().map(|p| !camera.in_frame(p.x, p.y)).collect()
    }
}

/// 3D landmarks in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet3D {
    pub points: Vec<Point3<f64>>,
}

impl LandmarkSet3D {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument("landmark positions must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of a view subset, in per-view order.
    pub fn subset(&self, indices: &[usize]) -> Vec<Point3<f64>> {
        indices.iter().map(|&i| self.points[i]).collect()
    }

    /// Positions of template vertices bound to landmarks.
    pub fn from_vertices(mesh: &Mesh, vertex_ids: &[usize]) -> Result<Self> {
        let points = vertex_ids
            .iter()
            .map(|&v| {
                mesh.vertices.get(v).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("landmark vertex {v} out of range"))
                })
            })
            .collect::<Result<_>>()?;
        Self::new(points)
    }
}

/// Projects 3D landmarks into every view of the rig, one set per view.
pub fn project_landmarks(
    landmarks: &LandmarkSet3D,
    rig: &Rig,
    scheme: &LandmarkScheme,
) -> [LandmarkSet2D; 3] {
    std::array::from_fn(|v| {
        let view = ViewId::ALL[v];
        let cam = rig.camera(view);
        LandmarkSet2D {
            view,
            points: scheme
                .view_subset(view)
                .iter()
                .map(|&i| {
                    let p = cam.project(&landmarks.points[i]);
                    Point2::new(p.u, p.v)
                })
                .collect(),
        }
    })
}

/// A lifted landmark. `fallback` marks rays that missed the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedPoint {
    pub point: Point3<f64>,
    pub fallback: bool,
}

/// Lifts a pixel onto the mesh: the front-most hit of the view ray, or the
/// surface point closest to the ray when it misses.
pub fn lift_landmark(
    camera: &ViewCamera,
    pixel: &Point2<f64>,
    mesh: &Mesh,
    index: &SpatialIndex,
) -> Result<LiftedPoint> {
    let bounds = index.bounds().ok_or(Error::EmptyMesh)?;
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let margin = 0.05 * bounds.diagonal() + 1e-9;
    let start = camera.max_depth(&bounds) + margin;
    let ray = camera.pixel_ray(pixel.x, pixel.y, start);
    if let Some(hit) = index.first_hit(&ray) {
        return Ok(LiftedPoint {
            point: hit.point,
            fallback: false,
        });
    }
    // travel through the box: from the nearest to the farthest corner depth
    let length = start - camera.min_depth(&bounds) + margin;
    let distance = |t: f64| {
        index
            .closest_point(&ray.at(t))
            .map(|c| c.distance)
            .unwrap_or(f64::INFINITY)
    };
    let samples = 64;
    let step = length / samples as f64;
    let (mut best_t, mut best_d) = (0.0, f64::INFINITY);
    for i in 0..=samples {
        let t = i as f64 * step;
        let d = distance(t);
        if d < best_d {
            best_d = d;
            best_t = t;
        }
    }
    // golden-section refinement inside the bracketing samples
    let (mut lo, mut hi) = ((best_t - step).max(0.0), (best_t + step).min(length));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if distance(a) <= distance(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let t = 0.5 * (lo + hi);
    let t = if distance(t) <= best_d { t } else { best_t };
    let cp = index.closest_point(&ray.at(t)).ok_or(Error::EmptyMesh)?;
    Ok(LiftedPoint {
        point: cp.point,
        fallback: true,
    })
}

/// Lifted landmarks: the averaged canonical set plus each view's own lifts.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLandmarks {
    pub global: LandmarkSet3D,
    /// `L^v` per view, aligned with the scheme's view subsets.
    pub per_view: [Vec<Point3<f64>>; 3],
    /// Number of lifts that fell back to the closest-point rule.
    pub fallbacks: usize,
}

/// Lifts each view's 2D landmarks and averages landmarks seen by several views.
pub fn initialize_landmarks(
    mesh: &Mesh,
    index: &SpatialIndex,
    detections: &[LandmarkSet2D],
    rig: &Rig,
    scheme: &LandmarkScheme,
) -> Result<InitialLandmarks> {
    let mut by_view: [Option<&LandmarkSet2D>; 3] = [None, None, None];
    for set in detections {
        let expected = scheme.view_subset(set.view).len();
        if set.points.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: set.points.len(),
                context: "2D landmarks per view",
            });
        }
        if by_view[set.view.index()].replace(set).is_some() {
            return Err(Error::InvalidArgument(format!("{} view given twice", set.view)));
        }
    }

    let mut per_view: [Vec<Point3<f64>>; 3] = Default::default();
    let mut fallbacks = 0;
    for view in ViewId::ALL {
        if let Some(set) = by_view[view.index()] {
            let cam = rig.camera(view);
            per_view[view.index()] = set
                .points
                .iter()
                .map(|p| {
                    let l = lift_landmark(cam, p, mesh, index)?;
                    fallbacks += l.fallback as usize;
                    Ok(l.point)
                })
                .collect::<Result<_>>()?;
        }
    }

    let mut points = Vec::with_capacity(scheme.len());
    for i in 0..scheme.len() {
        let mut sum = Vector3::zeros();
        let mut count = 0usize;
        // fixed front/left/right summation order
        for view in ViewId::ALL {
            if by_view[view.index()].is_none() {
                continue;
            }
            if let Some(pos) = scheme.view_position(view, i) {
                sum += per_view[view.index()][pos].coords;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::UncoveredLandmark {
                index: i,
                name: scheme.name(i).to_string(),
            });
        }
        points.push(Point3::from(sum / count as f64));
    }
    Ok(InitialLandmarks {
        global: LandmarkSet3D::new(points)?,
        per_view,
        fallbacks,
    })
}

/// Landmark file contents: optional 3D set and optional 2D set per view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LandmarkRecords {
    pub points3d: Option<LandmarkSet3D>,
    pub views: [Option<LandmarkSet2D>; 3],
}

impl LandmarkRecords {
    pub fn detections(&self) -> Vec<LandmarkSet2D> {
        self.views.iter().flatten().cloned().collect()
    }

    pub fn to_text(&self, scheme: &LandmarkScheme) -> String {
        let mut out = String::from("# <index> <name> 3d <x> <y> <z> | <index> <name> 2d <view> <u> <v>\n");
        if let Some(set) = &self.points3d {
            for (i, p) in set.points.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{i} {} 3d {} {} {}",
                    scheme.name(i),
                    format_sig9(p.x),
                    format_sig9(p.y),
                    format_sig9(p.z)
                );
            }
        }
        for set in self.views.iter().flatten() {
            for (pos, &i) in scheme.view_subset(set.view).iter().enumerate() {
                let p = set.points[pos];
                let _ = writeln!(
                    out,
                    "{i} {} 2d {} {} {}",
                    scheme.name(i),
                    set.view,
                    format_sig9(p.x),
                    format_sig9(p.y)
                );
            }
        }
        out
    }

    pub fn parse(text: &str, scheme: &LandmarkScheme) -> Result<Self> {
        let n = scheme.len();
        let mut p3: Vec<Option<Point3<f64>>> = vec![None; n];
        let mut p2: [Vec<Option<Point2<f64>>>; 3] =
            std::array::from_fn(|v| vec![None; scheme.view_subset(ViewId::ALL[v]).len()]);
        let mut any3 = false;
        let mut any2 = [false; 3];
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse { line: line_no, message: m };
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() < 3 {
                return Err(err(format!("short landmark record {line:?}")));
            }
            let idx: usize = tok[0].parse().map_err(|_| err(format!("bad index {:?}", tok[0])))?;
            if idx >= n {
                return Err(err(format!("landmark index {idx} out of range")));
            }
            if tok[1] != scheme.name(idx) {
                return Err(err(format!("landmark {idx} is {:?}, not {:?}", scheme.name(idx), tok[1])));
            }
            let nums = |from: usize, count: usize| -> Result<Vec<f64>> {
                if tok.len() != from + count {
                    return Err(err(format!("expected {count} numbers")));
                }
                tok[from..]
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}"))))
                    .collect()
            };
            match tok[2] {
                "3d" => {
                    let c = nums(3, 3)?;
                    p3[idx] = Some(Point3::new(c[0], c[1], c[2]));
                    any3 = true;
                }
                "2d" => {
                    let view: ViewId = tok
                        .get(3)
                        .ok_or_else(|| err("missing view".into()))?
                        .parse()
                        .map_err(|e: Error| err(e.to_string()))?;
                    let c = nums(4, 2)?;
                    let pos = scheme.view_position(view, idx).ok_or_else(|| {
                        err(format!("landmark {idx} is not part of the {view} view"))
                    })?;
                    p2[view.index()][pos] = Some(Point2::new(c[0], c[1]));
                    any2[view.index()] = true;
                }
                other => return Err(err(format!("unknown record kind {other:?}"))),
            }
        }
        let points3d = if any3 {
            let pts = p3
                .into_iter()
                .enumerate()
                .map(|(i, p)| p.ok_or_else(|| Error::Format(format!("3D landmark {i} missing"))))
                .collect::<Result<_>>()?;
            Some(LandmarkSet3D::new(pts)?)
        } else {
            None
        };
        let mut views: [Option<LandmarkSet2D>; 3] = Default::default();
        for v in 0..3 {
            if any2[v] {
                let view = ViewId::ALL[v];
                let pts = std::mem::take(&mut p2[v])
                    .into_iter()
                    .enumerate()
                    .map(|(pos, p)| {
                        p.ok_or_else(|| {
                            Error::Format(format!(
                                "{view} view is missing landmark {}",
                                scheme.view_subset(view)[pos]
                            ))
                        })
                    })
                    .collect::<Result<_>>()?;
                views[v] = Some(LandmarkSet2D { view, points: pts });
            }
        }
        Ok(Self { points3d, views })
    }

    pub fn load(path: impl AsRef<Path>, scheme: &LandmarkScheme) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?, scheme)
    }

    pub fn save(&self, path: impl AsRef<Path>, scheme: &LandmarkScheme) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text(scheme)).map_err(|e| Error::io(path, e))
    }
}

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::multiview::{LandmarkScheme, LandmarkSet2D, LandmarkSet3D, Rig, ViewId};

/// `0.5 x²` inside the unit knee, `|x| − 0.5` outside.
pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

fn smooth_l1_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Smooth-L1 summed over the columns of each row, averaged over rows.
pub fn smooth_l1_rows(residuals: &DMatrix<f64>) -> f64 {
    if residuals.nrows() == 0 {
        return 0.0;
    }
    residuals.iter().map(|&x| smooth_l1(x)).sum::<f64>() / residuals.nrows() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub detect: f64,
    pub projection: f64,
    pub landmarks: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            detect: 0.1,
            projection: 0.8,
            landmarks: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("detect", self.detect), ("projection", self.projection), ("landmarks", self.landmarks)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} loss weight {w} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            detect: self.detect * k,
            projection: self.projection * k,
            landmarks: self.landmarks * k,
        }
    }
}

/// Unweighted terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// 2D detections against ground-truth 2D landmarks, summed over views.
    /// Both 2D terms measure image residuals in model units (pixels divided
    /// by the camera scale).
    pub detect: f64,
    /// Projected refined landmarks against ground-truth 2D landmarks, summed over views.
    pub projection: f64,
    /// Refined against ground-truth 3D landmarks.
    pub landmarks: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub(crate) fn add_scaled(&mut self, other: &LossBreakdown, k: f64) {
        self.detect += k * other.detect;
        self.projection += k * other.projection;
        self.landmarks += k * other.landmarks;
        self.total += k * other.total;
    }
}

fn check_views(sets: &[LandmarkSet2D; 3], scheme: &LandmarkScheme, what: &'static str) -> Result<()> {
    for view in ViewId::ALL {
        let set = &sets[view.index()];
        if set.view != view {
            return Err(Error::InvalidArgument(format!("{what}: {} landmarks in the {view} slot", set.view)));
        }
        let k = scheme.view_subset(view).len();
        if set.points.len() != k {
            return Err(Error::DimensionMismatch { expected: k, actual: set.points.len(), context: what });
        }
    }
    Ok(())
}

/// Weighted three-term loss. The detect term compares fixed inputs, so it
/// only shifts the value and carries no gradient.
pub fn total_loss(
    detected: &[LandmarkSet2D; 3],
    truth_2d: &[LandmarkSet2D; 3],
    pred: &LandmarkSet3D,
    truth: &LandmarkSet3D,
    rig: &Rig,
    scheme: &LandmarkScheme,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    loss_with_gradient(detected, truth_2d, pred, truth, rig, scheme, weights).map(|(l, _)| l)
}

/// Loss and its gradient with respect to the refined landmarks (`n × 3`).
pub(crate) fn loss_with_gradient(
    detected: &[LandmarkSet2D; 3],
    truth_2d: &[LandmarkSet2D; 3],
    pred: &LandmarkSet3D,
    truth: &LandmarkSet3D,
    rig: &Rig,
    scheme: &LandmarkScheme,
    weights: &LossWeights,
) -> Result<(LossBreakdown, DMatrix<f64>)> {
    weights.validate()?;
    check_views(detected, scheme, "detected 2D landmarks")?;
    check_views(truth_2d, scheme, "ground-truth 2D landmarks")?;
    let n = scheme.len();
    for (set, what) in [(pred, "predicted 3D landmarks"), (truth, "ground-truth 3D landmarks")] {
        if set.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: set.len(), context: what });
        }
    }

    let mut grad = DMatrix::zeros(n, 3);
    let mut detect = 0.0;
    let mut projection = 0.0;
    for view in ViewId::ALL {
        let v = view.index();
        let subset = scheme.view_subset(view);
        let k = subset.len() as f64;
        let cam = rig.camera(view);
        // pixel residuals divided by the camera scale are in model units,
        // the same units as the 3D term
        let px = 1.0 / cam.scale;
        for (pos, &i) in subset.iter().enumerate() {
            let (d, t) = (&detected[v].points[pos], &truth_2d[v].points[pos]);
            detect += (smooth_l1((d.x - t.x) * px) + smooth_l1((d.y - t.y) * px)) / k;
            let p = cam.project(&pred.points[i]);
            let (ru, rv) = ((p.u - t.x) * px, (p.v - t.y) * px);
            projection += (smooth_l1(ru) + smooth_l1(rv)) / k;
            // u = w/2 + s (R p + t)_x, v = h/2 − s (R p + t)_y
            let (gu, gv) = (smooth_l1_grad(ru) / k, smooth_l1_grad(rv) / k);
            for a in 0..3 {
                grad[(i, a)] += weights.projection * (gu * cam.rotation[(0, a)] - gv * cam.rotation[(1, a)]);
            }
        }
    }
    let mut landmarks = 0.0;
    for i in 0..n {
        for a in 0..3 {
            let r = pred.points[i][a] - truth.points[i][a];
            landmarks += smooth_l1(r) / n as f64;
            grad[(i, a)] += weights.landmarks * smooth_l1_grad(r) / n as f64;
        }
    }
    let total = weights.detect * detect + weights.projection * projection + weights.landmarks * landmarks;
    Ok((LossBreakdown { detect, projection, landmarks, total }, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Aabb;
    use crate::multiview::{project_landmarks, rig_for_bounds};
    use nalgebra::{Point2, Point3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smooth_l1_knee() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(1.0), 0.5);
        assert_eq!(smooth_l1(-1.0), 0.5);
        assert_eq!(smooth_l1(3.0), 2.5);
        let r = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 1.0, 1.0]);
        assert_eq!(smooth_l1_rows(&r), (2.5 + 1.0) / 2.0);
    }

    struct Fixture {
        scheme: LandmarkScheme,
        rig: Rig,
        truth: LandmarkSet3D,
        truth_2d: [LandmarkSet2D; 3],
    }

    fn fixture() -> Fixture {
        let scheme = LandmarkScheme::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = LandmarkSet3D::new(
            (0..44)
                .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap();
        let bounds = Aabb { min: Point3::new(-1.0, -1.0, -1.0), max: Point3::new(1.0, 1.0, 1.0) };
        let rig = rig_for_bounds(&bounds, 64, 64).unwrap();
        let truth_2d = project_landmarks(&truth, &rig, &scheme);
        Fixture { scheme, rig, truth, truth_2d }
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        let f = fixture();
        let l = total_loss(&f.truth_2d, &f.truth_2d, &f.truth, &f.truth, &f.rig, &f.scheme, &LossWeights::default()).unwrap();
        assert!(l.total.abs() < 1e-20, "{l:?}");
    }

    #[test]
    fn constant_offset_matches_hand_computation() {
        let f = fixture();
        let delta = Vector3::new(0.02, -0.01, 0.015);
        let pred = LandmarkSet3D::new(f.truth.points.iter().map(|p| p + delta).collect()).unwrap();
        let w = LossWeights::default();
        let l = total_loss(&f.truth_2d, &f.truth_2d, &pred, &f.truth, &f.rig, &f.scheme, &w).unwrap();
        let three_d = 0.5 * delta.norm_squared();
        // projected offset per view in model units: R δ with the v axis flipped
        let mut two_d = 0.0;
        for view in ViewId::ALL {
            let q = f.rig.camera(view).rotation * delta;
            two_d += smooth_l1(q.x) + smooth_l1(-q.y);
        }
        let expected = w.landmarks * three_d + w.projection * two_d;
        assert!((l.total - expected).abs() < 1e-9, "{} vs {expected}", l.total);
        let doubled = total_loss(&f.truth_2d, &f.truth_2d, &pred, &f.truth, &f.rig, &f.scheme, &w.scaled(2.0)).unwrap();
        assert!((doubled.total - 2.0 * l.total).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pred = LandmarkSet3D::new(
            f.truth.points.iter().map(|p| p + Vector3::from_fn(|_, _| rng.gen_range(-0.2..0.2))).collect(),
        )
        .unwrap();
        let detected = f.truth_2d.clone().map(|mut s| {
            s.points.iter_mut().for_each(|p| *p = Point2::new(p.x + 0.7, p.y - 0.3));
            s
        });
        let w = LossWeights::default();
        let (_, g) = loss_with_gradient(&detected, &f.truth_2d, &pred, &f.truth, &f.rig, &f.scheme, &w).unwrap();
        let h = 1e-6;
        for i in 0..44 {
            for a in 0..3 {
                let eval = |d: f64| {
                    let mut p = pred.clone();
                    p.points[i][a] += d;
                    total_loss(&detected, &f.truth_2d, &p, &f.truth, &f.rig, &f.scheme, &w).unwrap().total
                };
                let num = (eval(h) - eval(-h)) / (2.0 * h);
                assert!((num - g[(i, a)]).abs() < 1e-6, "({i}, {a}): {num} vs {}", g[(i, a)]);
            }
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let f = fixture();
        let short = LandmarkSet3D::new(f.truth.points[..10].to_vec()).unwrap();
        assert!(total_loss(&f.truth_2d, &f.truth_2d, &short, &f.truth, &f.rig, &f.scheme, &LossWeights::default()).is_err());
    }
}

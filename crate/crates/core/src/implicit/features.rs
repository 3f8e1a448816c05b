use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::io_util::split_header;
use crate::multiview::ViewCamera;

const MAGIC: &str = "FEATUREMAP 1";

/// `width × height` lattice of `channels`-vectors; node `(x, y)` sits at pixel `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, channel fastest: `(y * width + x) * channels + c`.
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature map dimensions {width}x{height}x{channels} must be positive"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels,
                actual: data.len(),
                context: "feature map values",
            });
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn node(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Bilinear sample at pixel `(u, v)`, clamped to the border.
    pub fn sample(&self, u: f64, v: f64, out: &mut [f64]) {
        let (x0, x1, tx) = axis(u, self.width);
        let (y0, y1, ty) = axis(v, self.height);
        let (a, b, c, d) = (self.node(x0, y0), self.node(x1, y0), self.node(x0, y1), self.node(x1, y1));
        for ch in 0..self.channels {
            let top = a[ch] + (b[ch] - a[ch]) * tx;
            let bottom = c[ch] + (d[ch] - c[ch]) * tx;
            out[ch] = top + (bottom - top) * ty;
        }
    }
}

fn axis(x: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, max) };
    let i0 = (x.floor() as usize).min(n.saturating_sub(2));
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, x - i0 as f64)
}

/// Feature lattice aligned with one orthographic view.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolumeInput {
    pub map: FeatureMap,
    pub camera: ViewCamera,
}

impl FeatureVolumeInput {
    pub fn new(map: FeatureMap, camera: ViewCamera) -> Result<Self> {
        if camera.width != map.width || camera.height != map.height {
            return Err(Error::InvalidArgument(format!(
                "camera image {}x{} does not match feature map {}x{}",
                camera.width, camera.height, map.width, map.height
            )));
        }
        Ok(Self { map, camera })
    }

    /// Text header (size, camera block) followed by little-endian `f32` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        let _ = writeln!(header, "{MAGIC}");
        let _ = writeln!(header, "size {} {} {}", self.map.width, self.map.height, self.map.channels);
        header.push_str(&self.camera.to_text());
        header.push_str("data f32le\n");
        let mut out = header.into_bytes();
        out.reserve(4 * self.map.data.len());
        for v in &self.map.data {
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
        let size_line = lines.next().unwrap_or("");
        let dims: Vec<usize> = size_line
            .strip_prefix("size ")
            .map(|s| s.split_whitespace().filter_map(|t| t.parse().ok()).collect())
            .unwrap_or_default();
        if dims.len() != 3 {
            return Err(Error::Parse { line: 2, message: format!("expected `size W H C`, got {size_line:?}") });
        }
        let camera_text: String = lines.map(|l| format!("{l}\n")).collect();
        let camera = ViewCamera::parse_block(&camera_text, 3)?;
        let count = dims[0] * dims[1] * dims[2];
        if body.len() != 4 * count {
            return Err(Error::Format(format!("feature payload has {} bytes, expected {}", body.len(), 4 * count)));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect();
        Self::new(FeatureMap::new(dims[0], dims[1], dims[2], data)?, camera)
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

/// Feature sampled at the projection of `x`, and the view depth of `x`.
pub fn pixel_aligned_feature(input: &FeatureVolumeInput, x: &Point3<f64>) -> (Vec<f64>, f64) {
    let p = input.camera.project(x);
    let mut feature = vec![0.0; input.map.channels];
    input.map.sample(p.u, p.v, &mut feature);
    (feature, p.depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiview::ViewId;
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Camera with pixel = model x/y plus image center offset.
    fn input(map: FeatureMap) -> FeatureVolumeInput {
        let (w, h) = (map.width, map.height);
        let cam = ViewCamera::new(ViewId::Front, Matrix3::identity(), Vector3::zeros(), 1.0, w, h).unwrap();
        FeatureVolumeInput::new(map, cam).unwrap()
    }

    /// World point whose projection is pixel `(u, v)` at depth `z`.
    fn at(inp: &FeatureVolumeInput, u: f64, v: f64, z: f64) -> Point3<f64> {
        inp.camera.unproject(u, v, z)
    }

    fn random_map(seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::from_fn(6, 5, 3, |_, _, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn lattice_node_returns_its_feature() {
        let inp = input(random_map(1));
        let (f, z) = pixel_aligned_feature(&inp, &at(&inp, 2.0, 3.0, 0.7));
        assert_eq!(f, inp.map.node(2, 3));
        assert!((z - 0.7).abs() < 1e-15);
    }

    #[test]
    fn cell_center_averages_corners() {
        let inp = input(random_map(2));
        let (f, _) = pixel_aligned_feature(&inp, &at(&inp, 1.5, 2.5, 0.0));
        for c in 0..3 {
            let avg = (inp.map.node(1, 2)[c] + inp.map.node(2, 2)[c] + inp.map.node(1, 3)[c] + inp.map.node(2, 3)[c]) / 4.0;
            assert!((f[c] - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn random_positions_match_direct_formula() {
        let inp = input(random_map(3));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let (u, v) = (rng.gen_range(0.0..5.0), rng.gen_range(0.0..4.0));
            let (f, _) = pixel_aligned_feature(&inp, &at(&inp, u, v, 0.0));
            let (x0, y0) = (u.floor() as usize, v.floor() as usize);
            let (tx, ty) = (u - x0 as f64, v - y0 as f64);
            for c in 0..3 {
                let n = |x: usize, y: usize| inp.map.node(x, y)[c];
                let direct = n(x0, y0) * (1.0 - tx) * (1.0 - ty)
                    + n(x0 + 1, y0) * tx * (1.0 - ty)
                    + n(x0, y0 + 1) * (1.0 - tx) * ty
                    + n(x0 + 1, y0 + 1) * tx * ty;
                assert!((f[c] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outside_samples_clamp_to_border() {
        let inp = input(random_map(5));
        let (f, _) = pixel_aligned_feature(&inp, &at(&inp, -40.0, 2.0, 0.0));
        assert_eq!(f, inp.map.node(0, 2));
        let (g, _) = pixel_aligned_feature(&inp, &at(&inp, 90.0, 99.0, 0.0));
        assert_eq!(g, inp.map.node(5, 4));
    }

    #[test]
    fn file_round_trip() {
        let inp = input(random_map(6));
        let back = FeatureVolumeInput::from_bytes(&inp.to_bytes()).unwrap();
        assert_eq!(back.camera, inp.camera);
        for (a, b) in inp.map.data.iter().zip(&back.map.data) {
            assert_eq!(*b, *a as f32 as f64);
        }
    }
}

//! Keypoint belief maps: ground-truth rendering and subpixel peak extraction.
//!
//! Maps use the sample-grid convention: cell `(x, y)` of a map at scale
//! `alpha` is the continuous map coordinate `(x, y)`, which corresponds to
//! the full-resolution pixel `(x / alpha, y / alpha)`. The renderer and the
//! extractor both rely on this.

use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

pub const BMAP_MAGIC: &[u8; 4] = b"BMAP";
pub const BMAP_VERSION: u16 = 1;
/// Standard deviation used for ground-truth maps, in full-resolution pixels.
pub const GT_SIGMA: f64 = 2.0;

#[derive(Debug, Error)]
pub enum BeliefMapError {
    #[error("unsupported scale {0}; expected 1, 0.5 or 0.25")]
    BadScale(f64),
    #[error("image size {width}x{height} is not divisible at scale {alpha}")]
    BadDimensions { width: u32, height: u32, alpha: f64 },
    #[error("belief map stack is inconsistent: {0}")]
    Inconsistent(String),
    #[error("invalid BMAP data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Output resolution relative to the input image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum MapScale {
    Full,
    Half,
    Quarter,
}

impl MapScale {
    pub fn alpha(self) -> f64 {
        match self {
            MapScale::Full => 1.0,
            MapScale::Half => 0.5,
            MapScale::Quarter => 0.25,
        }
    }

    fn divisor(self) -> u32 {
        match self {
            MapScale::Full => 1,
            MapScale::Half => 2,
            MapScale::Quarter => 4,
        }
    }

    /// Map dimensions for a given image size.
    pub fn map_dims(self, width: u32, height: u32) -> Result<(usize, usize), BeliefMapError> {
        let d = self.divisor();
        if !width.is_multiple_of(d) || !height.is_multiple_of(d) || width == 0 || height == 0 {
            return Err(BeliefMapError::BadDimensions {
                width,
                height,
                alpha: self.alpha(),
            });
        }
        Ok(((width / d) as usize, (height / d) as usize))
    }
}

impl TryFrom<f64> for MapScale {
    type Error = BeliefMapError;
    fn try_from(a: f64) -> Result<Self, Self::Error> {
        match a {
            1.0 => Ok(MapScale::Full),
            0.5 => Ok(MapScale::Half),
            0.25 => Ok(MapScale::Quarter),
            a => Err(BeliefMapError::BadScale(a)),
        }
    }
}

impl From<MapScale> for f64 {
    fn from(s: MapScale) -> f64 {
        s.alpha()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    pub width: usize,
    pub height: usize,
    pub scale: MapScale,
    /// Row-major, `height * width` values.
    pub values: Vec<f64>,
}

impl BeliefMap {
    pub fn zeros(width: usize, height: usize, scale: MapScale) -> Self {
        BeliefMap {
            width,
            height,
            scale,
            values: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Index and value of the first maximal cell in row-major order.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, v)| (i % self.width, i / self.width, v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMapStack {
    pub names: Vec<String>,
    pub maps: Vec<BeliefMap>,
}

impl BeliefMapStack {
    pub fn new(names: Vec<String>, maps: Vec<BeliefMap>) -> Result<Self, BeliefMapError> {
        if names.len() != maps.len() {
            return Err(BeliefMapError::Inconsistent(format!(
                "{} names for {} maps",
                names.len(),
                maps.len()
            )));
        }
        if let Some(first) = maps.first() {
            for m in &maps {
                if (m.width, m.height, m.scale) != (first.width, first.height, first.scale) {
                    return Err(BeliefMapError::Inconsistent("maps differ in size or scale".into()));
                }
                if m.values.len() != m.width * m.height {
                    return Err(BeliefMapError::Inconsistent("value count mismatch".into()));
                }
                if m.values.iter().any(|v| !v.is_finite()) {
                    return Err(BeliefMapError::Inconsistent("non-finite value".into()));
                }
            }
        }
        Ok(BeliefMapStack { names, maps })
    }

    pub fn scale(&self) -> Option<MapScale> {
        self.maps.first().map(|m| m.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointDetection {
    pub name: String,
    /// Full-resolution pixel coordinates.
    pub pixel: [f64; 2],
    pub confidence: f64,
}

impl KeypointDetection {
    pub fn pixel(&self) -> Vec2 {
        Vec2::new(self.pixel[0], self.pixel[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakExtractConfig {
    pub peak_threshold: f64,
    /// Gaussian smoothing applied before peak search, in map pixels.
    pub smooth_sigma: f64,
    /// Chebyshev radius of the centroid window, in map pixels.
    pub window_radius: usize,
}

impl Default for PeakExtractConfig {
    fn default() -> Self {
        PeakExtractConfig {
            peak_threshold: 0.03,
            smooth_sigma: 1.0,
            window_radius: 6,
        }
    }
}

impl PeakExtractConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.peak_threshold > 0.0) {
            return Err("peak_threshold must be > 0".into());
        }
        if !(self.smooth_sigma >= 0.0) {
            return Err("smooth_sigma must be >= 0".into());
        }
        if self.window_radius < 1 {
            return Err("window_radius must be >= 1".into());
        }
        Ok(())
    }
}

/// Renders a ground-truth map for a keypoint at full-resolution `pixel`.
pub fn render_gt(
    image_width: u32,
    image_height: u32,
    scale: MapScale,
    pixel: Vec2,
    sigma: f64,
) -> Result<BeliefMap, BeliefMapError> {
    let (w, h) = scale.map_dims(image_width, image_height)?;
    let a = scale.alpha();
    let (px, py) = (a * pixel.x, a * pixel.y);
    let s = a * sigma;
    let inv = 1.0 / (2.0 * s * s);
    let mut map = BeliefMap::zeros(w, h, scale);
    for y in 0..h {
        let dy = y as f64 - py;
        for x in 0..w {
            let dx = x as f64 - px;
            map.set(x, y, (-(dx * dx + dy * dy) * inv).exp());
        }
    }
    Ok(map)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable convolution of one line, renormalizing over in-bounds taps.
fn convolve_line(src: &[f64], dst: &mut [f64], kernel: &[f64]) {
    let r = (kernel.len() / 2) as i64;
    let n = src.len() as i64;
    for (i, out) in dst.iter_mut().enumerate() {
        let i = i as i64;
        let lo = (i - r).max(0);
        let hi = (i + r).min(n - 1);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for j in lo..=hi {
            let w = kernel[(j - i + r) as usize];
            acc += w * src[j as usize];
            wsum += w;
        }
        *out = acc / wsum;
    }
}

/// Gaussian smoothing, kernel truncated at `ceil(3 sigma)`.
pub fn smooth(map: &BeliefMap, sigma: f64) -> BeliefMap {
    if sigma <= 0.0 {
        return map.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = (map.width, map.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        convolve_line(&map.values[y * w..(y + 1) * w], &mut tmp[y * w..(y + 1) * w], &kernel);
    }
    let mut out = BeliefMap::zeros(w, h, map.scale);
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = tmp[y * w + x];
        }
        convolve_line(&col, &mut col_out, &kernel);
        for y in 0..h {
            out.values[y * w + x] = col_out[y];
        }
    }
    out
}

/// Subpixel location of the strongest peak, or `None` below threshold.
pub fn extract_peak(map: &BeliefMap, cfg: &PeakExtractConfig) -> Option<(Vec2, f64)> {
    let s = smooth(map, cfg.smooth_sigma);
    let (px, py, peak) = s.argmax()?;
    if !(peak >= cfg.peak_threshold) {
        return None;
    }
    let r = cfg.window_radius;
    let (x0, x1) = (px.saturating_sub(r), (px + r).min(s.width - 1));
    let (y0, y1) = (py.saturating_sub(r), (py + r).min(s.height - 1));
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let v = s.at(x, y);
            if v >= cfg.peak_threshold {
                sw += v;
                sx += v * x as f64;
                sy += v * y as f64;
            }
        }
    }
    let a = map.scale.alpha();
    Some((Vec2::new(sx / sw / a, sy / sw / a), peak))
}

pub fn extract_named(name: &str, map: &BeliefMap, cfg: &PeakExtractConfig) -> Option<KeypointDetection> {
    extract_peak(map, cfg).map(|(p, confidence)| KeypointDetection {
        name: name.to_string(),
        pixel: [p.x, p.y],
        confidence,
    })
}

/// One optional detection per map, in stack order.
pub fn extract_all(stack: &BeliefMapStack, cfg: &PeakExtractConfig) -> Vec<(String, Option<KeypointDetection>)> {
    use rayon::prelude::*;
    stack
        .names
        .par_iter()
        .zip(stack.maps.par_iter())
        .map(|(n, m)| (n.clone(), extract_named(n, m, cfg)))
        .collect()
}

// --- BMAP binary format ---------------------------------------------------

/// JSON sidecar describing a BMAP file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmapSidecar {
    pub keypoints: Vec<String>,
    pub alpha: MapScale,
}

/// Writes `magic, u16 version, u16 n, u16 height, u16 width` then f32 LE values,
/// keypoint-major and row-major.
pub fn write_bmap<W: Write>(stack: &BeliefMapStack, mut w: W) -> Result<(), BeliefMapError> {
    let (height, width) = stack.maps.first().map(|m| (m.height, m.width)).unwrap_or((0, 0));
    let to_u16 =
        |v: usize, what: &str| u16::try_from(v).map_err(|_| BeliefMapError::Format(format!("{what} {v} exceeds u16")));
    w.write_all(BMAP_MAGIC)?;
    w.write_all(&BMAP_VERSION.to_le_bytes())?;
    w.write_all(&to_u16(stack.maps.len(), "keypoint count")?.to_le_bytes())?;
    w.write_all(&to_u16(height, "height")?.to_le_bytes())?;
    w.write_all(&to_u16(width, "width")?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(height * width * 4);
    for m in &stack.maps {
        buf.clear();
        for &v in &m.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_bmap<R: Read>(mut r: R, sidecar: &BmapSidecar) -> Result<BeliefMapStack, BeliefMapError> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| BeliefMapError::Format("truncated header".into()))?;
    if &header[0..4] != BMAP_MAGIC {
        return Err(BeliefMapError::Format("bad magic".into()));
    }
    let field = |i: usize| u16::from_le_bytes([header[i], header[i + 1]]);
    let (version, n, height, width) = (field(4), field(6), field(8), field(10));
    if version != BMAP_VERSION {
        return Err(BeliefMapError::Format(format!("unsupported version {version}")));
    }
    let (n, height, width) = (n as usize, height as usize, width as usize);
    if sidecar.keypoints.len() != n {
        return Err(BeliefMapError::Inconsistent(format!(
            "sidecar lists {} keypoints, file has {n}",
            sidecar.keypoints.len()
        )));
    }
    let mut raw = vec![0u8; n * height * width * 4];
    r.read_exact(&mut raw)
        .map_err(|_| BeliefMapError::Format("truncated values".into()))?;
    let mut maps = Vec::with_capacity(n);
    for chunk in raw.chunks_exact((height * width * 4).max(1)).take(n) {
        let values = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        maps.push(BeliefMap {
            width,
            height,
            scale: sidecar.alpha,
            values,
        });
    }
    BeliefMapStack::new(sidecar.keypoints.clone(), maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PeakExtractConfig {
        PeakExtractConfig::default()
    }

    #[test]
    fn gt_values_follow_gaussian() {
        let m = render_gt(640, 480, MapScale::Full, Vec2::new(100.0, 200.0), 2.0).unwrap();
        assert_eq!(m.at(100, 200), 1.0);
        assert!((m.at(101, 200) - (-1.0f64 / 8.0).exp()).abs() < 1e-15);
        assert!((m.at(101, 200) - 0.8825).abs() < 1e-4);
    }

    #[test]
    fn far_outside_is_effectively_zero() {
        let m = render_gt(640, 480, MapScale::Full, Vec2::new(-100.0, -100.0), 2.0).unwrap();
        let max = m.values.iter().cloned().fold(0.0, f64::max);
        assert!(max < 1e-100);
        assert!(extract_peak(&m, &cfg()).is_none());
    }

    #[test]
    fn half_scale_peak_cell() {
        let m = render_gt(640, 480, MapScale::Half, Vec2::new(100.0, 200.0), 2.0).unwrap();
        assert_eq!((m.width, m.height), (320, 240));
        let (x, y, v) = m.argmax().unwrap();
        assert_eq!((x, y, v), (50, 100, 1.0));
    }

    #[test]
    fn smoothing_identity_and_constant() {
        let m = render_gt(64, 48, MapScale::Full, Vec2::new(20.3, 30.7), 2.0).unwrap();
        assert_eq!(smooth(&m, 0.0), m);
        let mut c = BeliefMap::zeros(17, 9, MapScale::Full);
        c.values.iter_mut().for_each(|v| *v = 0.37);
        let s = smooth(&c, 1.5);
        assert!(s.values.iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    // Values frozen from an independent dense-convolution oracle (numpy, 11x11
    // map, impulse at (5, 5), sigma 1, edge renormalization).
    #[test]
    fn impulse_matches_dense_convolution_oracle() {
        let mut m = BeliefMap::zeros(11, 11, MapScale::Full);
        m.set(5, 5, 1.0);
        let s = smooth(&m, 1.0);
        assert!((s.at(5, 5) - 0.15924112569070248).abs() < 1e-12);
        assert!((s.at(6, 5) - 0.096584625018564144).abs() < 1e-12);
        assert!((s.at(8, 5) - 0.0017768861358861277).abs() < 1e-12);
    }

    #[test]
    fn impulse_mass_is_preserved_in_the_interior() {
        let mut m = BeliefMap::zeros(41, 41, MapScale::Full);
        m.set(20, 20, 1.0);
        for sigma in [0.5, 1.0, 2.5] {
            let total: f64 = smooth(&m, sigma).values.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "{sigma}: {total}");
        }
    }

    #[test]
    fn empty_map_has_no_detection() {
        assert!(extract_peak(&BeliefMap::zeros(32, 32, MapScale::Full), &cfg()).is_none());
    }

    #[test]
    fn integer_peak_is_exact() {
        let m = render_gt(640, 480, MapScale::Full, Vec2::new(100.0, 200.0), 2.0).unwrap();
        let (p, conf) = extract_peak(&m, &cfg()).unwrap();
        assert!((p - Vec2::new(100.0, 200.0)).norm() < 1e-6);
        assert!(conf > 0.03 && conf < 1.0);
    }

    // Expected centroids frozen from the numpy oracle using the same
    // procedure (smooth sigma 1, radius 6, threshold 0.03).
    #[test]
    fn subpixel_example_matches_oracle() {
        let m = render_gt(640, 480, MapScale::Full, Vec2::new(100.5, 200.25), 2.0).unwrap();
        let (p, _) = extract_peak(&m, &cfg()).unwrap();
        assert!((p.x - 100.5).abs() < 1e-9);
        assert!((p.y - 200.229624940682925).abs() < 1e-9);
        assert!((p - Vec2::new(100.5, 200.25)).norm() < 0.1);

        let m = render_gt(640, 480, MapScale::Half, Vec2::new(100.5, 200.25), 2.0).unwrap();
        let (p, _) = extract_peak(&m, &cfg()).unwrap();
        assert!((p.x - 100.520557328327428).abs() < 1e-9);
        assert!((p.y - 200.261014661976020).abs() < 1e-9);
    }

    #[test]
    fn integer_shift_equivariance() {
        let base = Vec2::new(40.3, 35.8);
        let m0 = render_gt(128, 96, MapScale::Full, base, 2.0).unwrap();
        let (p0, _) = extract_peak(&m0, &cfg()).unwrap();
        for (dx, dy) in [(1, 0), (0, 3), (-5, 7), (20, -10)] {
            let shift = Vec2::new(dx as f64, dy as f64);
            let m = render_gt(128, 96, MapScale::Full, base + shift, 2.0).unwrap();
            let (p, _) = extract_peak(&m, &cfg()).unwrap();
            assert!((p - (p0 + shift)).norm() < 1e-9);
        }
    }

    #[test]
    fn extract_all_keeps_order() {
        let k = |x, y| render_gt(64, 64, MapScale::Full, Vec2::new(x, y), 2.0).unwrap();
        let stack = BeliefMapStack::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![k(10.0, 10.0), BeliefMap::zeros(64, 64, MapScale::Full), k(40.25, 20.5)],
        )
        .unwrap();
        let out = extract_all(&stack, &cfg());
        assert_eq!(out[0].0, "a");
        assert!(out[1].1.is_none());
        let c = out[2].1.as_ref().unwrap();
        assert_eq!(c.name, "c");
        assert!((c.pixel() - Vec2::new(40.25, 20.5)).norm() < 0.1);
    }

    #[test]
    fn bmap_header_layout() {
        let stack = BeliefMapStack::new(
            vec!["k".into()],
            vec![render_gt(8, 4, MapScale::Full, Vec2::new(3.0, 2.0), 2.0).unwrap()],
        )
        .unwrap();
        let mut bytes = Vec::new();
        write_bmap(&stack, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"BMAP");
        assert_eq!(&bytes[4..12], &[1, 0, 1, 0, 4, 0, 8, 0]);
        assert_eq!(bytes.len(), 12 + 8 * 4 * 4);
        let sidecar = BmapSidecar {
            keypoints: vec!["k".into()],
            alpha: MapScale::Full,
        };
        let back = read_bmap(&bytes[..], &sidecar).unwrap();
        assert_eq!(back.maps[0].at(3, 2), 1.0);
        assert!(read_bmap(&bytes[..20], &sidecar).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_bmap(&bad[..], &sidecar).is_err());
    }

    #[test]
    fn scale_serializes_as_number() {
        let s: BmapSidecar = serde_json::from_str(r#"{"keypoints":["a"],"alpha":0.25}"#).unwrap();
        assert_eq!(s.alpha, MapScale::Quarter);
        assert!(serde_json::from_str::<BmapSidecar>(r#"{"keypoints":[],"alpha":0.3}"#).is_err());
    }
}

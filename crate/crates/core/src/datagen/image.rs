use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::{DofDomain, DofValue, TransformFamily, TransformParams};

/// Square grayscale image stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    size: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(size: usize, pixels: Vec<f64>) -> Result<Image> {
        if size == 0 || pixels.len() != size * size {
            return Err(Error::Dimension {
                context: "square image pixel count",
                expected: size * size,
                got: pixels.len(),
            });
        }
        Ok(Image { size, pixels })
    }

    pub fn zeros(size: usize) -> Image {
        Image {
            size,
            pixels: vec![0.0; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Pixel at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    pub fn mass(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Mean absolute difference.
    pub fn l1(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.pixels.len() as f64
    }

    /// Intensity-weighted centroid `(row, col)`, or the center for a blank image.
    pub fn centroid(&self) -> (f64, f64) {
        let (mut r, mut c, mut m) = (0.0, 0.0, 0.0);
        for (k, &v) in self.pixels.iter().enumerate() {
            r += v * (k / self.size) as f64;
            c += v * (k % self.size) as f64;
            m += v;
        }
        if m == 0.0 {
            let mid = (self.size as f64 - 1.0) / 2.0;
            (mid, mid)
        } else {
            (r / m, c / m)
        }
    }

    /// Bilinear sample at fractional `(x = col, y = row)`; outside samples are 0.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x, y) = (snap(x), snap(y));
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let n = self.size as i64;
        let at = |r: i64, c: i64| {
            if r < 0 || c < 0 || r >= n || c >= n {
                0.0
            } else {
                self.pixels[(r * n + c) as usize]
            }
        };
        let (c0, r0) = (x0 as i64, y0 as i64);
        let top = at(r0, c0) * (1.0 - fx) + if fx > 0.0 { at(r0, c0 + 1) * fx } else { 0.0 };
        if fy == 0.0 {
            return top;
        }
        let bottom = at(r0 + 1, c0) * (1.0 - fx)
            + if fx > 0.0 {
                at(r0 + 1, c0 + 1) * fx
            } else {
                0.0
            };
        top * (1.0 - fy) + bottom * fy
    }
}

/// Coordinates within 1e-9 of the pixel grid are treated as exact grid
/// points, so quarter-turns and identities resample without blur.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Image-space warp: per-axis scale ratios applied in a coordinate frame,
/// followed by a rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub rotation: f64,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl Default for WarpParams {
    fn default() -> Self {
        WarpParams {
            rotation: 0.0,
            scale_x: 1.0,
            scale_y: 1.0,
        }
    }
}

impl WarpParams {
    pub fn rotation(angle: f64) -> WarpParams {
        WarpParams {
            rotation: angle,
            ..WarpParams::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && self.scale_x == 1.0 && self.scale_y == 1.0
    }

    fn validate(&self) -> Result<()> {
        for (name, s) in [("scale_x", self.scale_x), ("scale_y", self.scale_y)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Parameter(format!(
                    "warp {name} must be positive and finite, got {s}"
                )));
            }
        }
        if !self.rotation.is_finite() {
            return Err(Error::Parameter(format!(
                "warp rotation must be finite, got {}",
                self.rotation
            )));
        }
        Ok(())
    }

    /// `second` applied after `self` when the frame follows the first
    /// rotation: angles add and scales multiply.
    pub fn then(&self, second: &WarpParams) -> WarpParams {
        WarpParams {
            rotation: self.rotation + second.rotation,
            scale_x: self.scale_x * second.scale_x,
            scale_y: self.scale_y * second.scale_y,
        }
    }

    /// Image-space counterpart of `params` for an image rendered at the
    /// interval lower bound.
    ///
    /// An interval value `v` is the target's absolute scale in the glyph's
    /// canonical frame, so the ratio is `v / lo`; the interval's lower
    /// bound is both the feature-space identity and the unit ratio.
    pub fn from_transform(
        family: &TransformFamily,
        params: &TransformParams,
    ) -> Result<WarpParams> {
        params.validate(family)?;
        let mut w = WarpParams::default();
        for d in family.dofs() {
            let value = match params.get(&d.name) {
                Some(DofValue::Scalar(v)) => *v,
                _ => {
                    return Err(Error::Config(format!(
                        "dof {} has no image-space warp",
                        d.name
                    )))
                }
            };
            match (d.name.as_str(), &d.domain) {
                ("rotation", DofDomain::Circle) => w.rotation = value,
                ("scale_x", DofDomain::Interval { lo, .. }) if *lo > 0.0 => w.scale_x = value / lo,
                ("scale_y", DofDomain::Interval { lo, .. }) if *lo > 0.0 => w.scale_y = value / lo,
                _ => {
                    return Err(Error::Config(format!(
                        "dof {} has no image-space warp",
                        d.name
                    )))
                }
            }
        }
        Ok(w)
    }
}

/// Warp in the image's own axes.
pub fn warp(image: &Image, params: &WarpParams) -> Result<Image> {
    warp_in_frame(image, params, 0.0)
}

/// Warp about the image center with scalings along axes rotated by `frame`:
/// forward map `R(frame + rotation) · S · R(−frame)`, resampled by inverse
/// mapping with bilinear interpolation.
pub fn warp_in_frame(image: &Image, params: &WarpParams, frame: f64) -> Result<Image> {
    params.validate()?;
    if !frame.is_finite() {
        return Err(Error::Parameter(format!(
            "warp frame must be finite, got {frame}"
        )));
    }
    if params.is_identity() {
        return Ok(image.clone());
    }
    let (s1, c1) = frame.sin_cos();
    let (s2, c2) = (-(frame + params.rotation)).sin_cos();
    let (ix, iy) = (1.0 / params.scale_x, 1.0 / params.scale_y);
    // R(frame) · diag(ix, iy) · R(−frame − rotation)
    let m = [c1 * ix, -s1 * iy, s1 * ix, c1 * iy];
    let a = [
        m[0] * c2 + m[1] * s2,
        -m[0] * s2 + m[1] * c2,
        m[2] * c2 + m[3] * s2,
        -m[2] * s2 + m[3] * c2,
    ];
    let n = image.size;
    let mid = (n as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        let dy = row as f64 - mid;
        for col in 0..n {
            let dx = col as f64 - mid;
            let x = mid + a[0] * dx + a[1] * dy;
            let y = mid + a[2] * dx + a[3] * dy;
            out.push(image.sample(x, y));
        }
    }
    Ok(Image {
        size: n,
        pixels: out,
    })
}

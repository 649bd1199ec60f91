use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

/// Procedural pen-stroke shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlyphShape {
    Bar,
    Ell,
    Tee,
    Cross,
    DiscWithNotch,
    Arrow,
    Triangle,
    Chevron,
    Zed,
    Hook,
    Frame,
}

/// Half-size of the glyph's canonical box as a fraction of the raster
/// width, chosen so the largest scaled pose still fits the frame.
const EXTENT: f64 = 0.28;
const SUPERSAMPLE: usize = 4;

impl GlyphShape {
    pub const ALL: [GlyphShape; 11] = [
        GlyphShape::Bar,
        GlyphShape::Ell,
        GlyphShape::Tee,
        GlyphShape::Cross,
        GlyphShape::DiscWithNotch,
        GlyphShape::Arrow,
        GlyphShape::Triangle,
        GlyphShape::Chevron,
        GlyphShape::Zed,
        GlyphShape::Hook,
        GlyphShape::Frame,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GlyphShape::Bar => "bar",
            GlyphShape::Ell => "ell",
            GlyphShape::Tee => "tee",
            GlyphShape::Cross => "cross",
            GlyphShape::DiscWithNotch => "disc-with-notch",
            GlyphShape::Arrow => "arrow",
            GlyphShape::Triangle => "triangle",
            GlyphShape::Chevron => "chevron",
            GlyphShape::Zed => "zed",
            GlyphShape::Hook => "hook",
            GlyphShape::Frame => "frame",
        }
    }

    /// Order of the rotation symmetry group at unit aspect.
    fn base_order(&self) -> u32 {
        match self {
            GlyphShape::Cross | GlyphShape::Frame => 4,
            GlyphShape::Triangle => 3,
            GlyphShape::Bar | GlyphShape::Zed => 2,
            _ => 1,
        }
    }

    /// Membership test in canonical coordinates `[-1, 1]²` (`v` points down).
    fn contains(&self, u: f64, v: f64, stroke: f64) -> bool {
        let h = stroke / 2.0;
        let seg = |a: (f64, f64), b: (f64, f64)| segment_distance((u, v), a, b) <= h;
        match self {
            GlyphShape::Bar => u.abs() <= 1.0 && v.abs() <= h,
            GlyphShape::Ell => {
                seg((-0.6, -1.0), (-0.6, 1.0 - h)) || seg((-0.6, 1.0 - h), (0.7, 1.0 - h))
            }
            GlyphShape::Tee => {
                seg((-1.0, -1.0 + h), (1.0, -1.0 + h)) || seg((0.0, -1.0 + h), (0.0, 1.0))
            }
            GlyphShape::Cross => seg((-1.0, 0.0), (1.0, 0.0)) || seg((0.0, -1.0), (0.0, 1.0)),
            GlyphShape::DiscWithNotch => u * u + v * v <= 0.85 * 0.85 && !(u > -0.1 && v.abs() < h),
            GlyphShape::Arrow => {
                let head = (0.1..=1.0).contains(&u) && v.abs() <= 0.8 * (1.0 - u) / 0.9;
                seg((-1.0, 0.0), (0.2, 0.0)) || head
            }
            GlyphShape::Triangle => {
                let r = 0.95;
                let pts = [0.0f64, 120.0, 240.0].map(|deg| {
                    let a = (deg - 90.0f64).to_radians();
                    (r * a.cos(), r * a.sin())
                });
                let side = |p: (f64, f64), q: (f64, f64)| {
                    (q.0 - p.0) * (v - p.1) - (q.1 - p.1) * (u - p.0)
                };
                let s = [
                    side(pts[0], pts[1]),
                    side(pts[1], pts[2]),
                    side(pts[2], pts[0]),
                ];
                s.iter().all(|&x| x >= 0.0) || s.iter().all(|&x| x <= 0.0)
            }
            GlyphShape::Chevron => seg((-0.85, -0.6), (0.0, 0.7)) || seg((0.0, 0.7), (0.85, -0.6)),
            GlyphShape::Zed => {
                seg((-0.9, -0.9), (0.9, -0.9))
                    || seg((0.9, -0.9), (-0.9, 0.9))
                    || seg((-0.9, 0.9), (0.9, 0.9))
            }
            GlyphShape::Hook => {
                let ring = ((u + 0.05).powi(2) + (v - 0.45).powi(2)).sqrt();
                seg((0.45, -1.0), (0.45, 0.45)) || ((ring - 0.5).abs() <= h && v >= 0.45)
            }
            GlyphShape::Frame => {
                let m = u.abs().max(v.abs());
                m <= 0.9 && m >= 0.9 - 2.0 * h
            }
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// A shape with its intrinsic parameters and canonical-pose raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Glyph {
    pub shape: GlyphShape,
    /// Stroke width relative to the glyph's half-size.
    pub stroke: f64,
    /// Horizontal stretch of the canonical shape.
    pub aspect: f64,
    pub raster: Image,
}

impl Glyph {
    /// Rasterize with 4×4 supersampling, centered on its intensity centroid.
    pub fn render(shape: GlyphShape, stroke: f64, aspect: f64, resolution: usize) -> Result<Glyph> {
        if resolution < 4 {
            return Err(Error::Parameter(format!(
                "glyph resolution must be at least 4, got {resolution}"
            )));
        }
        if !(stroke > 0.0 && stroke <= 1.0) || !(aspect > 0.0 && aspect.is_finite()) {
            return Err(Error::Parameter(format!(
                "glyph stroke must lie in (0, 1] and aspect be positive, got {stroke} and {aspect}"
            )));
        }
        let mid = (resolution as f64 - 1.0) / 2.0;
        let first = rasterize(shape, stroke, aspect, resolution, (0.0, 0.0));
        let (r, c) = first.centroid();
        let raster = rasterize(shape, stroke, aspect, resolution, (r - mid, c - mid));
        Ok(Glyph {
            shape,
            stroke,
            aspect,
            raster,
        })
    }

    /// Rotations by `2π / order` leave the canonical shape unchanged.
    pub fn rotational_order(&self) -> u32 {
        let base = self.shape.base_order();
        if self.aspect == 1.0 {
            base
        } else if base % 2 == 0 {
            2
        } else {
            1
        }
    }

    pub fn resolution(&self) -> usize {
        self.raster.size()
    }
}

fn rasterize(shape: GlyphShape, stroke: f64, aspect: f64, n: usize, offset: (f64, f64)) -> Image {
    let mid = (n as f64 - 1.0) / 2.0;
    let radius = EXTENT * n as f64;
    let step = 1.0 / SUPERSAMPLE as f64;
    let mut pixels = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let mut hits = 0usize;
            for a in 0..SUPERSAMPLE {
                let y = row as f64 - 0.5 + (a as f64 + 0.5) * step + offset.0;
                for b in 0..SUPERSAMPLE {
                    let x = col as f64 - 0.5 + (b as f64 + 0.5) * step + offset.1;
                    let u = (x - mid) / radius / aspect;
                    let v = (y - mid) / radius;
                    hits += usize::from(shape.contains(u, v, stroke));
                }
            }
            pixels.push(hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64);
        }
    }
    Image::new(n, pixels).expect("square raster")
}

/// `per_shape` random variants of every shape: stroke in [0.35, 0.55] and
/// aspect in [0.8, 1.25]. The first variant of each shape has unit aspect.
pub fn glyph_pool(resolution: usize, per_shape: usize, seed: u64) -> Result<Vec<Glyph>> {
    if per_shape == 0 {
        return Err(Error::Parameter(
            "glyph pool needs at least one variant per shape".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(GlyphShape::ALL.len() * per_shape);
    for shape in GlyphShape::ALL {
        for k in 0..per_shape {
            let stroke = rng.gen_range(0.35..=0.55);
            let aspect = if k == 0 {
                1.0
            } else {
                rng.gen_range(0.8..=1.25)
            };
            pool.push(Glyph::render(shape, stroke, aspect, resolution)?);
        }
    }
    Ok(pool)
}

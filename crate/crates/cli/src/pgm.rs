//! Binary 8-bit portable graymaps.

use std::path::Path;

use ftl_core::datagen::Image;

use crate::error::{CliError, CliResult};

/// `P5` raster of row-major intensities in `[0, 1]`.
pub fn pgm_bytes(width: usize, height: usize, pixels: &[f64]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_pgm(path: &Path, image: &Image) -> CliResult<()> {
    let n = image.size();
    std::fs::write(path, pgm_bytes(n, n, image.pixels())).map_err(|e| CliError::io(path, e))
}

/// Grid of equally sized images with a one-pixel black gutter.
pub fn mosaic(rows: &[Vec<Image>]) -> (usize, usize, Vec<f64>) {
    let n = rows.first().and_then(|r| r.first()).map_or(0, Image::size);
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let (w, h) = (cols * (n + 1) + 1, rows.len() * (n + 1) + 1);
    let mut px = vec![0.0; w * h];
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            for y in 0..n {
                let dst = (r * (n + 1) + 1 + y) * w + c * (n + 1) + 1;
                px[dst..dst + n].copy_from_slice(&img.pixels()[y * n..(y + 1) * n]);
            }
        }
    }
    (w, h, px)
}

/// Read a `P5` file back into `(width, height, pixels / 255)`.
pub fn read_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<f64>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    (data.len() == w * h).then(|| (w, h, data.iter().map(|&b| b as f64 / 255.0).collect()))
}

//! Small rotation matrices (row-major) and the interval-to-angle map.

use std::f64::consts::PI;

use crate::error::{Error, Result};

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite, got {v}")))
    }
}

/// `[[cos, −sin], [sin, cos]]`
pub fn rotation_2d(angle: f64) -> Result<[f64; 4]> {
    finite("angle", angle)?;
    let (s, c) = angle.sin_cos();
    Ok([c, -s, s, c])
}

/// Elevation · azimuth, with no roll.
///
/// Azimuth turns about the third axis, elevation turns in the 1–3 plane.
pub fn rotation_3d(azimuth: f64, elevation: f64) -> Result<[f64; 9]> {
    rotation_3d_with_roll(azimuth, elevation, 0.0)
}

/// Elevation · azimuth · roll, where roll turns in the 2–3 plane (about the
/// first axis). Every rotation of 3-space has this form, which is what makes
/// sphere parameters closed under composition.
pub fn rotation_3d_with_roll(azimuth: f64, elevation: f64, roll: f64) -> Result<[f64; 9]> {
    finite("azimuth", azimuth)?;
    finite("elevation", elevation)?;
    finite("roll", roll)?;
    let (sp, cp) = azimuth.sin_cos();
    let (st, ct) = elevation.sin_cos();
    let elev = [ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct];
    let azim = [cp, -sp, 0.0, sp, cp, 0.0, 0.0, 0.0, 1.0];
    let r = mat3_mul(&elev, &azim);
    if roll == 0.0 {
        return Ok(r);
    }
    let (sr, cr) = roll.sin_cos();
    let rollm = [1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr];
    Ok(mat3_mul(&r, &rollm))
}

/// Recover `(azimuth, elevation, roll)` from a rotation matrix. Azimuth is
/// returned in `[−π/2, π/2]`.
pub fn euler_from_rotation(r: &[f64; 9]) -> (f64, f64, f64) {
    let s_az = r[3].clamp(-1.0, 1.0);
    let c_az = (r[0] * r[0] + r[6] * r[6]).sqrt();
    if c_az > 1e-9 {
        let azimuth = s_az.atan2(c_az);
        let elevation = (-r[6]).atan2(r[0]);
        let roll = (-r[5]).atan2(r[4]);
        (azimuth, elevation, roll)
    } else {
        // Gimbal lock: elevation and roll share an axis; put it all in elevation.
        let azimuth = if s_az > 0.0 { PI / 2.0 } else { -PI / 2.0 };
        let elevation = r[2].atan2(r[8]);
        (azimuth, elevation, 0.0)
    }
}

pub fn mat3_mul(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut c = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            c[i * 3 + j] = (0..3).map(|p| a[i * 3 + p] * b[p * 3 + j]).sum();
        }
    }
    c
}

/// Affine map of `[lo, hi]` onto the half-circle `[0, π]`.
pub fn map_interval_to_angle(value: f64, lo: f64, hi: f64) -> Result<f64> {
    finite("value", value)?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Parameter(format!(
            "interval [{lo}, {hi}] needs lo < hi"
        )));
    }
    if value < lo || value > hi {
        return Err(Error::Domain {
            value,
            domain: format!("[{lo}, {hi}]"),
        });
    }
    Ok((value - lo) / (hi - lo) * PI)
}

/// Inverse of [`map_interval_to_angle`].
pub fn angle_to_interval(angle: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&angle) {
        return Err(Error::Domain {
            value: lo + angle / PI * (hi - lo),
            domain: format!("[{lo}, {hi}]"),
        });
    }
    Ok(lo + angle / PI * (hi - lo))
}

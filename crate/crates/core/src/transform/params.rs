use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::family::{DofDomain, DofSpec, TransformFamily};
use super::rotation::{
    angle_to_interval, euler_from_rotation, map_interval_to_angle, rotation_2d,
    rotation_3d_with_roll,
};
use crate::error::{Error, Result};

/// Value of one degree of freedom: an angle (circle), a raw value
/// (interval), or a 3D orientation (sphere).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DofValue {
    Scalar(f64),
    Sphere {
        azimuth: f64,
        elevation: f64,
        /// Zero for every orientation the two-angle parameterization can
        /// express; composed orientations may need it.
        #[serde(default)]
        roll: f64,
    },
}

impl DofValue {
    pub fn sphere(azimuth: f64, elevation: f64) -> DofValue {
        DofValue::Sphere {
            azimuth,
            elevation,
            roll: 0.0,
        }
    }
}

/// A concrete θ: one value per named dof.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub values: BTreeMap<String, DofValue>,
}

impl TransformParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: DofValue) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn scalar(self, name: &str, value: f64) -> Self {
        self.with(name, DofValue::Scalar(value))
    }

    pub fn get(&self, name: &str) -> Option<&DofValue> {
        self.values.get(name)
    }

    /// Parameters whose feature-space operator is the identity: angle 0,
    /// interval lower bound, zero orientation.
    pub fn identity(family: &TransformFamily) -> TransformParams {
        let mut p = TransformParams::new();
        for d in family.dofs() {
            let v = match d.domain {
                DofDomain::Circle => DofValue::Scalar(0.0),
                DofDomain::Interval { lo, .. } => DofValue::Scalar(lo),
                DofDomain::Sphere => DofValue::sphere(0.0, 0.0),
            };
            p.values.insert(d.name.clone(), v);
        }
        p
    }

    /// Uniform draw over each dof's domain.
    pub fn random<R: Rng + ?Sized>(family: &TransformFamily, rng: &mut R) -> TransformParams {
        let mut p = TransformParams::new();
        for d in family.dofs() {
            let v = match d.domain {
                DofDomain::Circle => DofValue::Scalar(rng.gen_range(0.0..TAU)),
                DofDomain::Interval { lo, hi } => DofValue::Scalar(rng.gen_range(lo..=hi)),
                DofDomain::Sphere => {
                    DofValue::sphere(rng.gen_range(-PI..PI), rng.gen_range(-PI / 2.0..=PI / 2.0))
                }
            };
            p.values.insert(d.name.clone(), v);
        }
        p
    }

    /// Check completeness and per-domain validity.
    pub fn validate(&self, family: &TransformFamily) -> Result<()> {
        for d in family.dofs() {
            dof_value(self, d)?;
        }
        Ok(())
    }
}

fn dof_value<'a>(params: &'a TransformParams, d: &DofSpec) -> Result<&'a DofValue> {
    let v = params
        .get(&d.name)
        .ok_or_else(|| Error::Parameter(format!("missing value for dof {}", d.name)))?;
    match (&d.domain, v) {
        (DofDomain::Circle, DofValue::Scalar(a)) if a.is_finite() => Ok(v),
        (DofDomain::Interval { lo, hi }, DofValue::Scalar(x)) => {
            map_interval_to_angle(*x, *lo, *hi)?;
            Ok(v)
        }
        (
            DofDomain::Sphere,
            DofValue::Sphere {
                azimuth,
                elevation,
                roll,
            },
        ) if azimuth.is_finite() && elevation.is_finite() && roll.is_finite() => Ok(v),
        _ => Err(Error::Parameter(format!(
            "value {v:?} does not fit dof {} ({:?})",
            d.name, d.domain
        ))),
    }
}

/// The rotation block for one dof, row-major `block_dim × block_dim`.
pub fn dof_matrix(d: &DofSpec, params: &TransformParams) -> Result<Vec<f64>> {
    let v = dof_value(params, d)?;
    Ok(match (&d.domain, *v) {
        (DofDomain::Circle, DofValue::Scalar(a)) => rotation_2d(a)?.to_vec(),
        (DofDomain::Interval { lo, hi }, DofValue::Scalar(x)) => {
            rotation_2d(map_interval_to_angle(x, *lo, *hi)?)?.to_vec()
        }
        (
            DofDomain::Sphere,
            DofValue::Sphere {
                azimuth,
                elevation,
                roll,
            },
        ) => rotation_3d_with_roll(azimuth, elevation, roll)?.to_vec(),
        _ => unreachable!("dof_value checked the pairing"),
    })
}

fn sphere_parts(v: &DofValue) -> [f64; 3] {
    match *v {
        DofValue::Sphere {
            azimuth,
            elevation,
            roll,
        } => [azimuth, elevation, roll],
        DofValue::Scalar(_) => unreachable!("checked by dof_value"),
    }
}

fn scalar(v: &DofValue) -> f64 {
    match *v {
        DofValue::Scalar(x) => x,
        DofValue::Sphere { .. } => unreachable!("checked by dof_value"),
    }
}

/// `θ₂ ∘ θ₁`: apply `first`, then `second`.
///
/// Circles add angles modulo 2π, spheres multiply rotation matrices, and
/// intervals add their half-circle angles. The interval case fails with a
/// domain error when the sum leaves `[0, π]`.
pub fn compose(
    family: &TransformFamily,
    second: &TransformParams,
    first: &TransformParams,
) -> Result<TransformParams> {
    let mut out = TransformParams::new();
    for d in family.dofs() {
        let (v2, v1) = (dof_value(second, d)?, dof_value(first, d)?);
        let v = match d.domain {
            DofDomain::Circle => DofValue::Scalar((scalar(v1) + scalar(v2)).rem_euclid(TAU)),
            DofDomain::Interval { lo, hi } => {
                let angle = map_interval_to_angle(scalar(v1), lo, hi)?
                    + map_interval_to_angle(scalar(v2), lo, hi)?;
                DofValue::Scalar(angle_to_interval(angle, lo, hi)?)
            }
            DofDomain::Sphere => {
                let [a2, e2, r2] = sphere_parts(v2);
                let [a1, e1, r1] = sphere_parts(v1);
                let m = super::rotation::mat3_mul(
                    &rotation_3d_with_roll(a2, e2, r2)?,
                    &rotation_3d_with_roll(a1, e1, r1)?,
                );
                let (azimuth, elevation, roll) = euler_from_rotation(&m);
                DofValue::Sphere {
                    azimuth,
                    elevation,
                    roll,
                }
            }
        };
        out.values.insert(d.name.clone(), v);
    }
    Ok(out)
}

/// `θ⁻¹`, so that `compose(invert(θ), θ)` is the identity.
///
/// An interval dof only has an in-domain inverse at its lower bound; any
/// other value yields a domain error.
pub fn invert(family: &TransformFamily, params: &TransformParams) -> Result<TransformParams> {
    let mut out = TransformParams::new();
    for d in family.dofs() {
        let v = dof_value(params, d)?;
        let inv = match d.domain {
            DofDomain::Circle => DofValue::Scalar((-scalar(v)).rem_euclid(TAU)),
            DofDomain::Interval { lo, hi } => {
                let angle = map_interval_to_angle(scalar(v), lo, hi)?;
                DofValue::Scalar(angle_to_interval(-angle, lo, hi)?)
            }
            DofDomain::Sphere => {
                let [a, e, r] = sphere_parts(v);
                let m = rotation_3d_with_roll(a, e, r)?;
                let mt = [m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]];
                let (azimuth, elevation, roll) = euler_from_rotation(&mt);
                DofValue::Sphere {
                    azimuth,
                    elevation,
                    roll,
                }
            }
        };
        out.values.insert(d.name.clone(), inv);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> TransformFamily {
        TransformFamily::new(vec![DofSpec::new("rot", DofDomain::Circle, 1)]).unwrap()
    }

    #[test]
    fn circle_angles_add() {
        let f = circle();
        let a = TransformParams::new().scalar("rot", 0.3);
        let b = TransformParams::new().scalar("rot", 0.5);
        let c = compose(&f, &b, &a).unwrap();
        match c.get("rot").unwrap() {
            DofValue::Scalar(v) => assert!((v - 0.8).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identity_is_neutral() {
        let f = TransformFamily::desk();
        let p = TransformParams::new()
            .scalar("rotation", 1.2)
            .scalar("scale_x", 0.9)
            .scalar("scale_y", 1.25);
        let id = TransformParams::identity(&f);
        let c = compose(&f, &id, &p).unwrap();
        for d in f.dofs() {
            let (DofValue::Scalar(x), DofValue::Scalar(y)) =
                (c.get(&d.name).unwrap(), p.get(&d.name).unwrap())
            else {
                panic!()
            };
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(invert(&f, &id).unwrap(), id);
    }

    #[test]
    fn circle_inverse_negates() {
        let f = circle();
        let p = TransformParams::new().scalar("rot", 1.0);
        let DofValue::Scalar(v) = *invert(&f, &p).unwrap().get("rot").unwrap() else {
            panic!()
        };
        assert!((v - (TAU - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn interval_composition_is_partial() {
        let f = TransformFamily::tiny();
        let p = TransformParams::new()
            .scalar("rotation", 0.0)
            .scalar("scale_x", 1.2)
            .scalar("scale_y", 0.7);
        assert!(matches!(compose(&f, &p, &p), Err(Error::Domain { .. })));
        assert!(matches!(invert(&f, &p), Err(Error::Domain { .. })));
        let small = TransformParams::new()
            .scalar("rotation", 0.0)
            .scalar("scale_x", 0.8)
            .scalar("scale_y", 0.7);
        let c = compose(&f, &small, &small).unwrap();
        let DofValue::Scalar(v) = *c.get("scale_x").unwrap() else {
            panic!()
        };
        assert!((v - 0.9).abs() < 1e-12);
    }

    #[test]
    fn validation_catches_missing_and_out_of_range() {
        let f = TransformFamily::tiny();
        let missing = TransformParams::new().scalar("rotation", 0.0);
        assert!(matches!(missing.validate(&f), Err(Error::Parameter(_))));
        let oob = TransformParams::identity(&f).scalar("scale_y", 2.0);
        assert!(matches!(oob.validate(&f), Err(Error::Domain { .. })));
        let wrong_kind = TransformParams::identity(&f).with("rotation", DofValue::sphere(0.0, 0.0));
        assert!(wrong_kind.validate(&f).is_err());
    }

    #[test]
    fn params_json_round_trip() {
        let p = TransformParams::new()
            .scalar("rotation", 0.1)
            .with("lighting", DofValue::sphere(0.2, -0.3));
        let s = serde_json::to_string(&p).unwrap();
        let back: TransformParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}

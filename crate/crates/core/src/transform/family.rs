use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a degree of freedom lives before it is turned into a rotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DofDomain {
    /// Periodic angle on `[0, 2π)`.
    Circle,
    /// Bounded value mapped affinely onto the half-circle `[0, π]`.
    Interval { lo: f64, hi: f64 },
    /// Azimuth/elevation pair acting as a 3D rotation.
    Sphere,
}

impl DofDomain {
    pub fn block_dim(&self) -> usize {
        match self {
            DofDomain::Sphere => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofSpec {
    pub name: String,
    pub domain: DofDomain,
    pub block_dim: usize,
    /// Number of subvectors that share (are tied to) this rotation.
    pub repetitions: usize,
}

impl DofSpec {
    pub fn new(name: &str, domain: DofDomain, repetitions: usize) -> DofSpec {
        DofSpec {
            name: name.to_string(),
            block_dim: domain.block_dim(),
            domain,
            repetitions,
        }
    }

    pub fn width(&self) -> usize {
        self.block_dim * self.repetitions
    }

    /// Number of signature entries this dof contributes: `r(r+1)/2`.
    pub fn signature_len(&self) -> usize {
        self.repetitions * (self.repetitions + 1) / 2
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("dof name must not be empty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config(format!(
                "dof {}: repetitions must be positive",
                self.name
            )));
        }
        if self.block_dim != self.domain.block_dim() {
            return Err(Error::Config(format!(
                "dof {}: block_dim {} does not fit its domain (needs {})",
                self.name,
                self.block_dim,
                self.domain.block_dim()
            )));
        }
        if let DofDomain::Interval { lo, hi } = self.domain {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "dof {}: interval [{lo}, {hi}] needs lo < hi",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Ordered degrees of freedom and the feature width they occupy. Subvectors
/// are laid out contiguously: every block of the first dof, then the second…
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFamily")]
pub struct TransformFamily {
    dofs: Vec<DofSpec>,
    feature_dim: usize,
}

#[derive(Deserialize)]
struct RawFamily {
    dofs: Vec<DofSpec>,
    feature_dim: usize,
}

impl TryFrom<RawFamily> for TransformFamily {
    type Error = Error;

    fn try_from(raw: RawFamily) -> Result<Self> {
        let family = TransformFamily::new(raw.dofs)?;
        if family.feature_dim != raw.feature_dim {
            return Err(Error::Config(format!(
                "feature_dim {} does not match dofs (sum of block_dim × repetitions = {})",
                raw.feature_dim, family.feature_dim
            )));
        }
        Ok(family)
    }
}

impl TransformFamily {
    pub fn new(dofs: Vec<DofSpec>) -> Result<TransformFamily> {
        if dofs.is_empty() {
            return Err(Error::Config(
                "a transform family needs at least one dof".into(),
            ));
        }
        for (i, d) in dofs.iter().enumerate() {
            d.validate()?;
            if dofs[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::Config(format!("duplicate dof name {}", d.name)));
            }
        }
        let feature_dim = dofs.iter().map(DofSpec::width).sum();
        Ok(TransformFamily { dofs, feature_dim })
    }

    /// Rotation on a circle plus x/y scalings on half-circles, each tied
    /// over `reps` subvectors.
    pub fn planar(reps: usize, scale_lo: f64, scale_hi: f64) -> Result<TransformFamily> {
        TransformFamily::new(vec![
            DofSpec::new("rotation", DofDomain::Circle, reps),
            DofSpec::new(
                "scale_x",
                DofDomain::Interval {
                    lo: scale_lo,
                    hi: scale_hi,
                },
                reps,
            ),
            DofSpec::new(
                "scale_y",
                DofDomain::Interval {
                    lo: scale_lo,
                    hi: scale_hi,
                },
                reps,
            ),
        ])
    }

    /// Three 2D rotations repeated 85 times: 510 features.
    pub fn mnist() -> TransformFamily {
        TransformFamily::planar(85, 0.7, 1.3).expect("valid preset")
    }

    /// Desk-scale planar family: 3 dofs × 5 reps × 2 = 30 features.
    pub fn desk() -> TransformFamily {
        TransformFamily::planar(5, 0.7, 1.3).expect("valid preset")
    }

    /// One subvector per dof: 6 features.
    pub fn tiny() -> TransformFamily {
        TransformFamily::planar(1, 0.7, 1.3).expect("valid preset")
    }

    /// Geometry and lighting, each a 3D rotation on one subvector.
    pub fn face() -> TransformFamily {
        TransformFamily::new(vec![
            DofSpec::new("rotation", DofDomain::Sphere, 1),
            DofSpec::new("lighting", DofDomain::Sphere, 1),
        ])
        .expect("valid preset")
    }

    pub fn dofs(&self) -> &[DofSpec] {
        &self.dofs
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn dof(&self, name: &str) -> Option<&DofSpec> {
        self.dofs.iter().find(|d| d.name == name)
    }

    /// Start of each dof's block group on the feature axis.
    pub fn offsets(&self) -> Vec<usize> {
        self.dofs
            .iter()
            .scan(0, |acc, d| {
                let start = *acc;
                *acc += d.width();
                Some(start)
            })
            .collect()
    }

    pub fn signature_len(&self) -> usize {
        self.dofs.iter().map(DofSpec::signature_len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("family serializes")
    }

    pub fn from_json(s: &str) -> Result<TransformFamily> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_widths() {
        assert_eq!(TransformFamily::mnist().feature_dim(), 510);
        assert_eq!(TransformFamily::mnist().signature_len(), 3 * 85 * 86 / 2);
        assert_eq!(TransformFamily::desk().feature_dim(), 30);
        assert_eq!(TransformFamily::tiny().feature_dim(), 6);
        assert_eq!(TransformFamily::face().feature_dim(), 6);
        assert_eq!(TransformFamily::desk().offsets(), vec![0, 10, 20]);
    }

    #[test]
    fn json_shape() {
        let json = TransformFamily::tiny().to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["feature_dim"], 6);
        assert_eq!(v["dofs"][0]["domain"]["kind"], "circle");
        assert_eq!(v["dofs"][1]["domain"]["kind"], "interval");
        assert_eq!(v["dofs"][1]["domain"]["lo"], 0.7);
        assert_eq!(v["dofs"][2]["repetitions"], 1);
    }

    #[test]
    fn rejects_inconsistent_documents() {
        let bad_dim = r#"{"dofs":[{"name":"a","domain":{"kind":"circle"},"block_dim":2,"repetitions":2}],"feature_dim":5}"#;
        assert!(TransformFamily::from_json(bad_dim).is_err());
        let sphere_2d = r#"{"dofs":[{"name":"a","domain":{"kind":"sphere"},"block_dim":2,"repetitions":1}],"feature_dim":2}"#;
        assert!(TransformFamily::from_json(sphere_2d).is_err());
        let empty_interval = r#"{"dofs":[{"name":"a","domain":{"kind":"interval","lo":1.0,"hi":1.0},"block_dim":2,"repetitions":1}],"feature_dim":2}"#;
        assert!(TransformFamily::from_json(empty_interval).is_err());
        let dup = r#"{"dofs":[{"name":"a","domain":{"kind":"circle"},"block_dim":2,"repetitions":1},{"name":"a","domain":{"kind":"circle"},"block_dim":2,"repetitions":1}],"feature_dim":4}"#;
        assert!(TransformFamily::from_json(dup).is_err());
        assert!(TransformFamily::from_json("{not json").is_err());
    }
}

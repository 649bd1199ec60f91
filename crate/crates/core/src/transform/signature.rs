use ftl_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::family::TransformFamily;
use crate::error::{Error, Result};

/// Per-dof subvector inner products of one code: lengths and relative phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSignature {
    pub entries: Vec<f64>,
}

/// Signature of every row of `e: [N, feature_dim]`, as `[N, signature_len]`.
///
/// Within each dof's tied group the entries run over pairs `(i, j)` with
/// `i ≤ j` in lexicographic order. Products across dofs are left out since
/// they are not invariant to one dof's rotation alone.
pub fn invariant_signature(family: &TransformFamily, e: &Tensor) -> Result<Tensor> {
    let s = e.shape();
    if s.len() != 2 || s[1] != family.feature_dim() {
        return Err(Error::Dimension {
            context: "invariant signature input width",
            expected: family.feature_dim(),
            got: *s.last().unwrap_or(&0),
        });
    }
    let parts = family
        .dofs()
        .iter()
        .zip(family.offsets())
        .map(|(d, off)| e.gram_upper(off, d.repetitions, d.block_dim))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().expect("one part"));
    }
    Ok(Tensor::concat(&parts)?)
}

/// Split a `[N, L]` signature tensor into per-row records.
pub fn signature_rows(sig: &Tensor) -> Vec<InvariantSignature> {
    let width = *sig.shape().last().expect("rank >= 1");
    sig.data()
        .chunks(width)
        .map(|c| InvariantSignature {
            entries: c.to_vec(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::family::{DofDomain, DofSpec};

    #[test]
    fn three_four_five() {
        let f = TransformFamily::new(vec![DofSpec::new("rot", DofDomain::Circle, 1)]).unwrap();
        let sig = invariant_signature(&f, &Tensor::new(vec![3.0, 4.0], &[1, 2]).unwrap()).unwrap();
        assert_eq!(sig.data(), &[25.0]);
    }

    #[test]
    fn orthogonal_pair_has_zero_phase() {
        let f = TransformFamily::new(vec![DofSpec::new("rot", DofDomain::Circle, 2)]).unwrap();
        let sig = invariant_signature(&f, &Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[1, 4]).unwrap())
            .unwrap();
        assert_eq!(sig.data(), &[1.0, 0.0, 1.0]);
        let rows = signature_rows(&sig);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].entries.len(), f.signature_len());
    }

    #[test]
    fn width_checked() {
        let f = TransformFamily::tiny();
        assert!(invariant_signature(&f, &Tensor::zeros(&[1, 4]).unwrap()).is_err());
    }
}

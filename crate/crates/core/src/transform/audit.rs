use std::f64::consts::PI;

use ftl_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::family::{DofDomain, TransformFamily};
use super::operator::{build_block_transform, dense_matmul_into, BlockTransform};
use super::params::{compose, invert, DofValue, TransformParams};
use super::rotation::angle_to_interval;
use super::signature::invariant_signature;
use crate::error::{Error, Result};

/// Bound for the exact algebraic residuals.
pub const EXACT_TOLERANCE: f64 = 1e-12;
/// Bound for the signature residual, which squares feature magnitudes.
pub const SIGNATURE_TOLERANCE: f64 = 1e-9;

/// Largest residual seen for each algebraic property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub feature_dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub homomorphism: f64,
    pub inverse: f64,
    pub identity: f64,
    pub norm: f64,
    pub signature: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    /// Names of the properties whose residual exceeds its bound.
    pub fn failures(&self) -> Vec<&'static str> {
        let checks = [
            ("homomorphism", self.homomorphism, EXACT_TOLERANCE),
            ("inverse", self.inverse, EXACT_TOLERANCE),
            ("identity", self.identity, EXACT_TOLERANCE),
            ("norm", self.norm, EXACT_TOLERANCE),
            ("signature", self.signature, SIGNATURE_TOLERANCE),
        ];
        checks
            .iter()
            // NaN residuals count as failures.
            .filter(|(_, r, tol)| !(r <= tol))
            .map(|(n, _, _)| *n)
            .collect()
    }
}

/// Random `(θ₁, θ₂)` whose composition stays inside every interval domain:
/// the two half-circle angles of each interval dof sum to at most π.
pub fn sample_composable_pair<R: Rng + ?Sized>(
    family: &TransformFamily,
    rng: &mut R,
) -> Result<(TransformParams, TransformParams)> {
    let mut first = TransformParams::random(family, rng);
    let mut second = TransformParams::random(family, rng);
    for d in family.dofs() {
        if let DofDomain::Interval { lo, hi } = d.domain {
            let a1 = rng.gen_range(0.0..=PI);
            let a2 = rng.gen_range(0.0..=PI - a1);
            first.values.insert(
                d.name.clone(),
                DofValue::Scalar(angle_to_interval(a1, lo, hi)?),
            );
            second.values.insert(
                d.name.clone(),
                DofValue::Scalar(angle_to_interval(a2, lo, hi)?),
            );
        }
    }
    Ok((first, second))
}

/// Audit `F_θ` built by [`build_block_transform`] over `trials` random
/// parameter pairs.
pub fn audit_homomorphism(
    family: &TransformFamily,
    trials: usize,
    seed: u64,
) -> Result<AuditReport> {
    audit_with(family, trials, seed, &build_block_transform)
}

/// Operator constructor under audit.
pub type Builder<'a> = &'a dyn Fn(&TransformFamily, &TransformParams) -> Result<BlockTransform>;

/// Like [`audit_homomorphism`] with a caller-supplied operator constructor.
pub fn audit_with(
    family: &TransformFamily,
    trials: usize,
    seed: u64,
    builder: Builder,
) -> Result<AuditReport> {
    if trials == 0 {
        return Err(Error::Parameter("audit needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(trials);
    let mut vectors = Vec::with_capacity(trials);
    for _ in 0..trials {
        pairs.push(sample_composable_pair(family, &mut rng)?);
        vectors.push(
            (0..family.feature_dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        );
    }
    let mut report = audit_pairs(family, &pairs, &vectors, builder)?;
    report.seed = seed;
    Ok(report)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn identity_residual(m: &[f64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in m.chunks(d).enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `F⁻¹` from parameter inversion where the domain allows it and from the
/// block transpose for interval dofs, whose inverse parameters lie outside
/// the interval.
fn inverse_operator(
    family: &TransformFamily,
    params: &TransformParams,
    op: &BlockTransform,
    builder: Builder,
) -> Result<BlockTransform> {
    let mut invertible = params.clone();
    for d in family.dofs() {
        if let DofDomain::Interval { lo, .. } = d.domain {
            invertible
                .values
                .insert(d.name.clone(), DofValue::Scalar(lo));
        }
    }
    let inv = builder(family, &invert(family, &invertible)?)?;
    let transposed = op.transpose();
    let matrices = family
        .dofs()
        .iter()
        .enumerate()
        .map(|(i, d)| match d.domain {
            DofDomain::Interval { .. } => transposed.blocks()[i].matrix.clone(),
            _ => inv.blocks()[i].matrix.clone(),
        })
        .collect();
    BlockTransform::from_matrices(family, matrices)
}

/// Residuals over explicit `(θ₁, θ₂)` pairs and probe vectors.
pub fn audit_pairs(
    family: &TransformFamily,
    pairs: &[(TransformParams, TransformParams)],
    vectors: &[Vec<f64>],
    builder: Builder,
) -> Result<AuditReport> {
    if pairs.is_empty() || pairs.len() != vectors.len() {
        return Err(Error::Parameter(
            "audit needs one probe vector per parameter pair".into(),
        ));
    }
    let d = family.feature_dim();
    let id_op = builder(family, &TransformParams::identity(family))?;
    let mut r = AuditReport {
        feature_dim: d,
        trials: pairs.len(),
        seed: 0,
        homomorphism: 0.0,
        inverse: 0.0,
        identity: identity_residual(&id_op.to_dense(), d),
        norm: 0.0,
        signature: 0.0,
    };
    // Dense scratch matrices are reused; fresh multi-megabyte allocations
    // per trial would dominate the run time.
    let (mut dense1, mut dense2, mut densec, mut prod) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for ((first, second), v) in pairs.iter().zip(vectors) {
        let e = Tensor::new(v.clone(), &[1, d])?;
        let f1 = builder(family, first)?;
        let f2 = builder(family, second)?;
        let fc = builder(family, &compose(family, second, first)?)?;
        let finv = inverse_operator(family, first, &f1, builder)?;

        f1.write_dense(&mut dense1);
        f2.write_dense(&mut dense2);
        fc.write_dense(&mut densec);
        dense_matmul_into(&dense2, &dense1, d, &mut prod);
        let hom = max_abs_diff(&densec, &prod);
        let y1 = f1.apply(&e)?;
        let chained = f2.apply(&y1)?;
        let direct = fc.apply(&e)?;
        r.homomorphism = r
            .homomorphism
            .max(hom)
            .max(max_abs_diff(chained.data(), direct.data()));

        finv.write_dense(&mut dense2);
        dense_matmul_into(&dense2, &dense1, d, &mut prod);
        let inv = identity_residual(&prod, d);
        let back = finv.apply(&y1)?;
        r.inverse = r.inverse.max(inv).max(max_abs_diff(back.data(), v));

        r.identity = r.identity.max(max_abs_diff(id_op.apply(&e)?.data(), v));

        let n0 = norm(v);
        if n0 > 0.0 {
            r.norm = r.norm.max((norm(y1.data()) - n0).abs() / n0);
        }

        let s0 = invariant_signature(family, &e)?;
        let s1 = invariant_signature(family, &y1)?;
        r.signature = r.signature.max(max_abs_diff(s0.data(), s1.data()));
    }
    Ok(r)
}

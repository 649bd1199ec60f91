//! The feature transform layer: parameter domains, block-diagonal rotation
//! operators, invariant signatures and an algebraic audit.

mod audit;
mod family;
mod operator;
mod params;
mod rotation;
mod signature;

pub use audit::{
    audit_homomorphism, audit_pairs, audit_with, sample_composable_pair, AuditReport, Builder,
    EXACT_TOLERANCE, SIGNATURE_TOLERANCE,
};
pub use family::{DofDomain, DofSpec, TransformFamily};
pub use operator::{
    apply_per_row, build_block_transform, dense_matmul, dense_matmul_into, BlockTransform, DofBlock,
};
pub use params::{compose, dof_matrix, invert, DofValue, TransformParams};
pub use rotation::{
    angle_to_interval, euler_from_rotation, map_interval_to_angle, mat3_mul, rotation_2d,
    rotation_3d, rotation_3d_with_roll,
};
pub use signature::{invariant_signature, signature_rows, InvariantSignature};

use ftl_tensor::Tensor;

use super::family::TransformFamily;
use super::params::{dof_matrix, TransformParams};
use crate::error::{Error, Result};

/// One tied group of identical blocks on the feature axis.
#[derive(Clone, Debug, PartialEq)]
pub struct DofBlock {
    /// Row-major `k × k`.
    pub matrix: Vec<f64>,
    pub block_dim: usize,
    pub repetitions: usize,
    pub offset: usize,
}

impl DofBlock {
    pub fn width(&self) -> usize {
        self.block_dim * self.repetitions
    }

    fn transposed(&self) -> DofBlock {
        let k = self.block_dim;
        let mut t = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                t[j * k + i] = self.matrix[i * k + j];
            }
        }
        DofBlock {
            matrix: t,
            ..self.clone()
        }
    }
}

/// Block-diagonal `F_θ`, stored as one small matrix per dof.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTransform {
    blocks: Vec<DofBlock>,
    feature_dim: usize,
}

/// Build `F_θ` for a family. Every block of a dof is the same rotation.
pub fn build_block_transform(
    family: &TransformFamily,
    params: &TransformParams,
) -> Result<BlockTransform> {
    let mut blocks = Vec::with_capacity(family.dofs().len());
    for (d, offset) in family.dofs().iter().zip(family.offsets()) {
        blocks.push(DofBlock {
            matrix: dof_matrix(d, params)?,
            block_dim: d.block_dim,
            repetitions: d.repetitions,
            offset,
        });
    }
    Ok(BlockTransform {
        blocks,
        feature_dim: family.feature_dim(),
    })
}

impl BlockTransform {
    /// Assemble from explicit matrices, one per dof. Nothing checks
    /// orthogonality, which is what audit negative controls rely on.
    pub fn from_matrices(
        family: &TransformFamily,
        matrices: Vec<Vec<f64>>,
    ) -> Result<BlockTransform> {
        if matrices.len() != family.dofs().len() {
            return Err(Error::Dimension {
                context: "block matrices",
                expected: family.dofs().len(),
                got: matrices.len(),
            });
        }
        let mut blocks = Vec::with_capacity(matrices.len());
        for ((d, offset), m) in family.dofs().iter().zip(family.offsets()).zip(matrices) {
            if m.len() != d.block_dim * d.block_dim {
                return Err(Error::Dimension {
                    context: "block matrix",
                    expected: d.block_dim * d.block_dim,
                    got: m.len(),
                });
            }
            blocks.push(DofBlock {
                matrix: m,
                block_dim: d.block_dim,
                repetitions: d.repetitions,
                offset,
            });
        }
        Ok(BlockTransform {
            blocks,
            feature_dim: family.feature_dim(),
        })
    }

    pub fn blocks(&self) -> &[DofBlock] {
        &self.blocks
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// `F_θᵀ`, which is `F_θ⁻¹` for rotation blocks.
    pub fn transpose(&self) -> BlockTransform {
        BlockTransform {
            blocks: self.blocks.iter().map(DofBlock::transposed).collect(),
            feature_dim: self.feature_dim,
        }
    }

    /// `y = F_θ e` row by row for `e: [N, feature_dim]`, differentiable in `e`.
    ///
    /// Each dof's slice is viewed as `[N·r, k]` and multiplied by the block's
    /// transpose on the right, which rotates every subvector at once.
    pub fn apply(&self, e: &Tensor) -> Result<Tensor> {
        let s = e.shape();
        if s.len() != 2 || s[1] != self.feature_dim {
            return Err(Error::Dimension {
                context: "feature transform input width",
                expected: self.feature_dim,
                got: *s.last().unwrap_or(&0),
            });
        }
        let n = s[0];
        let mut parts = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let k = b.block_dim;
            let rt = Tensor::new(b.transposed().matrix, &[k, k])?;
            let seg = e
                .narrow(b.offset, b.width())?
                .reshape(&[n * b.repetitions, k])?;
            parts.push(seg.matmul(&rt)?.reshape(&[n, b.width()])?);
        }
        Ok(Tensor::concat(&parts)?)
    }

    /// Plain-slice version of [`apply`](Self::apply) for one vector.
    pub fn apply_vec(&self, e: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.feature_dim {
            return Err(Error::Dimension {
                context: "feature transform input width",
                expected: self.feature_dim,
                got: e.len(),
            });
        }
        let mut out = vec![0.0; e.len()];
        for b in &self.blocks {
            let k = b.block_dim;
            for r in 0..b.repetitions {
                let base = b.offset + r * k;
                for i in 0..k {
                    out[base + i] = (0..k).map(|j| b.matrix[i * k + j] * e[base + j]).sum();
                }
            }
        }
        Ok(out)
    }

    /// Row-major `D × D` matrix. Test and audit use only.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut m = Vec::new();
        self.write_dense(&mut m);
        m
    }

    /// [`to_dense`](Self::to_dense) into a reusable buffer.
    pub fn write_dense(&self, m: &mut Vec<f64>) {
        let d = self.feature_dim;
        m.clear();
        m.resize(d * d, 0.0);
        for b in &self.blocks {
            let k = b.block_dim;
            for r in 0..b.repetitions {
                let base = b.offset + r * k;
                for i in 0..k {
                    for j in 0..k {
                        m[(base + i) * d + base + j] = b.matrix[i * k + j];
                    }
                }
            }
        }
    }
}

/// Row `n` of `e` transformed by `ops[n]`, differentiable in `e`.
///
/// Each dof slice, viewed as `[N·r, k]`, becomes `Σ_l C_l ⊙ (x · E_l)` where
/// `E_l` copies column `l` into every column and `C_l` holds entry `(j, l)` of
/// the row's block at column `j`.
pub fn apply_per_row(ops: &[BlockTransform], e: &Tensor) -> Result<Tensor> {
    let first = ops
        .first()
        .ok_or_else(|| Error::Parameter("no operators given".into()))?;
    let s = e.shape();
    if s.len() != 2 || s[0] != ops.len() || s[1] != first.feature_dim {
        return Err(Error::Dimension {
            context: "per-row feature transform input",
            expected: first.feature_dim,
            got: *s.last().unwrap_or(&0),
        });
    }
    let n = s[0];
    let mut parts = Vec::with_capacity(first.blocks.len());
    for (bi, b) in first.blocks.iter().enumerate() {
        let (k, r) = (b.block_dim, b.repetitions);
        for op in ops {
            let ob = op.blocks.get(bi);
            if op.feature_dim != first.feature_dim
                || ob.map(|o| (o.block_dim, o.repetitions, o.offset)) != Some((k, r, b.offset))
            {
                return Err(Error::Parameter(
                    "per-row operators must share one family layout".into(),
                ));
            }
        }
        let seg = e.narrow(b.offset, b.width())?.reshape(&[n * r, k])?;
        let mut acc: Option<Tensor> = None;
        for l in 0..k {
            let mut pick = vec![0.0; k * k];
            pick[l * k..(l + 1) * k].iter_mut().for_each(|v| *v = 1.0);
            let col = seg.matmul(&Tensor::new(pick, &[k, k])?)?;
            let mut coef = Vec::with_capacity(n * r * k);
            for op in ops {
                let m = &op.blocks[bi].matrix;
                for _ in 0..r {
                    coef.extend((0..k).map(|j| m[j * k + l]));
                }
            }
            let term = col.mul(&Tensor::new(coef, &[n * r, k])?)?;
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        parts.push(acc.expect("k >= 1").reshape(&[n, b.width()])?);
    }
    Ok(Tensor::concat(&parts)?)
}

/// `a · b` for square row-major matrices, skipping zero entries of `a`.
pub fn dense_matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut c = Vec::new();
    dense_matmul_into(a, b, d, &mut c);
    c
}

/// [`dense_matmul`] into a reusable buffer.
pub fn dense_matmul_into(a: &[f64], b: &[f64], d: usize, c: &mut Vec<f64>) {
    c.clear();
    c.resize(d * d, 0.0);
    for i in 0..d {
        let row = &mut c[i * d..(i + 1) * d];
        for p in 0..d {
            let aip = a[i * d + p];
            if aip == 0.0 {
                continue;
            }
            for (cj, bj) in row.iter_mut().zip(&b[p * d..(p + 1) * d]) {
                *cj += aip * bj;
            }
        }
    }
}

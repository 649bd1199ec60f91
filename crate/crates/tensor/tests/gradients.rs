//! Analytic gradients against central finite differences (h = 1e-6).

use ftl_tensor::gradcheck::{check, DEFAULT_STEP};
use ftl_tensor::{BatchNormMode, Result, RunningStats, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Reduce any output to a scalar with fixed random weights so every output
/// entry's Jacobian row participates.
fn project(t: &Tensor, seed: u64) -> Result<Tensor> {
    let w = Tensor::new(uniform(seed ^ 0xabc, t.numel(), -1.0, 1.0), t.shape())?;
    Ok(t.mul(&w)?.sum())
}

fn assert_grad<F>(name: &str, f: F, inputs: Vec<Vec<f64>>, shapes: Vec<Vec<usize>>, tol: f64)
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let report = check(f, &inputs, &shapes, DEFAULT_STEP).unwrap();
    let err = report.max_relative_error();
    assert!(err <= tol, "{name}: relative error {err:e} > {tol:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn elementwise_binary(seed in any::<u64>()) {
        let a = uniform(seed, 6, -2.0, 2.0);
        let b = uniform(seed + 1, 6, -2.0, 2.0);
        let shapes = vec![vec![2, 3], vec![2, 3]];
        assert_grad("add", |t| project(&t[0].add(&t[1])?, seed), vec![a.clone(), b.clone()], shapes.clone(), TOL);
        assert_grad("sub", |t| project(&t[0].sub(&t[1])?, seed), vec![a.clone(), b.clone()], shapes.clone(), TOL);
        assert_grad("mul", |t| project(&t[0].mul(&t[1])?, seed), vec![a.clone(), b.clone()], shapes.clone(), TOL);
        let denom = uniform(seed + 2, 6, 0.5, 2.0);
        assert_grad("div", |t| project(&t[0].div(&t[1])?, seed), vec![a, denom], shapes, TOL);
    }

    #[test]
    fn elementwise_unary(seed in any::<u64>()) {
        let a = uniform(seed, 8, -2.0, 2.0);
        let pos = uniform(seed + 3, 8, 0.2, 2.0);
        let s = vec![vec![8]];
        assert_grad("add_scalar", |t| project(&t[0].add_scalar(0.7), seed), vec![a.clone()], s.clone(), TOL);
        assert_grad("mul_scalar", |t| project(&t[0].mul_scalar(-1.3), seed), vec![a.clone()], s.clone(), TOL);
        assert_grad("abs", |t| project(&t[0].abs(), seed), vec![a.clone()], s.clone(), TOL);
        assert_grad("square", |t| project(&t[0].square(), seed), vec![a.clone()], s.clone(), TOL);
        assert_grad("leaky_relu", |t| project(&t[0].leaky_relu(0.1), seed), vec![a.clone()], s.clone(), TOL);
        assert_grad("sigmoid", |t| project(&t[0].sigmoid(), seed), vec![a.clone()], s.clone(), TOL);
        assert_grad("sum", |t| Ok(t[0].sum()), vec![a.clone()], s.clone(), TOL);
        assert_grad("mean", |t| Ok(t[0].mean().mul_scalar(3.0)), vec![a], s.clone(), TOL);
        assert_grad("sqrt", |t| project(&t[0].sqrt(), seed), vec![pos.clone()], s.clone(), TOL);
        assert_grad("ln", |t| project(&t[0].ln(), seed), vec![pos], s, TOL);
    }

    #[test]
    fn matmul_and_rows(seed in any::<u64>()) {
        let a = uniform(seed, 12, -2.0, 2.0);
        let b = uniform(seed + 1, 8, -2.0, 2.0);
        assert_grad("matmul", |t| project(&t[0].matmul(&t[1])?, seed), vec![a.clone(), b], vec![vec![3, 4], vec![4, 2]], TOL);
        let bias = uniform(seed + 2, 4, -2.0, 2.0);
        assert_grad("add_row", |t| project(&t[0].add_row(&t[1])?, seed), vec![a.clone(), bias], vec![vec![3, 4], vec![4]], TOL);
        assert_grad("reshape", |t| project(&t[0].reshape(&[2, 6])?, seed), vec![a.clone()], vec![vec![3, 4]], TOL);
        assert_grad("narrow", |t| project(&t[0].narrow(1, 2)?, seed), vec![a.clone()], vec![vec![3, 4]], TOL);
        let c = uniform(seed + 4, 6, -2.0, 2.0);
        assert_grad(
            "concat",
            |t| project(&Tensor::concat(&[t[0].clone(), t[1].clone()])?, seed),
            vec![a, c],
            vec![vec![3, 4], vec![3, 2]],
            TOL,
        );
    }

    #[test]
    fn composed_matmul_leaky_sum(seed in any::<u64>()) {
        let x = uniform(seed, 10, -2.0, 2.0);
        let w = uniform(seed + 1, 15, -2.0, 2.0);
        assert_grad(
            "matmul→leaky_relu→sum",
            |t| Ok(t[0].matmul(&t[1])?.leaky_relu(0.1).sum()),
            vec![x, w],
            vec![vec![2, 5], vec![5, 3]],
            TOL,
        );
    }

    #[test]
    fn batchnorm_both_modes(seed in any::<u64>()) {
        let x = uniform(seed, 15, -2.0, 2.0);
        let g = uniform(seed + 1, 3, -2.0, 2.0);
        let b = uniform(seed + 2, 3, -2.0, 2.0);
        let shapes = vec![vec![5, 3], vec![3], vec![3]];
        assert_grad(
            "batchnorm/train",
            |t| {
                let mut rs = RunningStats::new(3);
                project(&t[0].batchnorm(&t[1], &t[2], &mut rs, BatchNormMode::Train)?, seed)
            },
            vec![x.clone(), g.clone(), b.clone()],
            shapes.clone(),
            TOL,
        );
        assert_grad(
            "batchnorm/eval",
            |t| {
                let mut rs = RunningStats { mean: vec![0.3, -0.2, 1.0], var: vec![0.5, 2.0, 1.0] };
                project(&t[0].batchnorm(&t[1], &t[2], &mut rs, BatchNormMode::Eval)?, seed)
            },
            vec![x, g.clone(), b.clone()],
            shapes,
            TOL,
        );
        let x4 = uniform(seed + 5, 2 * 3 * 2 * 2, -2.0, 2.0);
        assert_grad(
            "batchnorm/spatial",
            |t| {
                let mut rs = RunningStats::new(3);
                project(&t[0].batchnorm(&t[1], &t[2], &mut rs, BatchNormMode::Train)?, seed)
            },
            vec![x4, g, b],
            vec![vec![2, 3, 2, 2], vec![3], vec![3]],
            TOL,
        );
    }

    #[test]
    fn conv_and_upsample(seed in any::<u64>()) {
        let x = uniform(seed, 50, -2.0, 2.0);
        let k = uniform(seed + 1, 54, -2.0, 2.0);
        assert_grad(
            "conv2d",
            |t| project(&t[0].conv2d(&t[1], 2, 1)?, seed),
            vec![x.clone(), k],
            vec![vec![1, 2, 5, 5], vec![3, 2, 3, 3]],
            TOL,
        );
        let bias = uniform(seed + 2, 2, -2.0, 2.0);
        assert_grad(
            "add_channel",
            |t| project(&t[0].add_channel(&t[1])?, seed),
            vec![x.clone(), bias],
            vec![vec![1, 2, 5, 5], vec![2]],
            TOL,
        );
        assert_grad(
            "upsample_nearest",
            |t| project(&t[0].upsample_nearest(2)?, seed),
            vec![x],
            vec![vec![1, 2, 5, 5]],
            TOL,
        );
    }

    #[test]
    fn fused_losses(seed in any::<u64>()) {
        let s = uniform(seed, 12, -2.0, 2.0);
        assert_grad(
            "softmax_cross_entropy",
            |t| t[0].softmax_cross_entropy(&[1, 0, 3]),
            vec![s],
            vec![vec![3, 4]],
            TOL,
        );
        let x = uniform(seed + 1, 16, -2.0, 2.0);
        assert_grad("gram_upper", |t| project(&t[0].gram_upper(2, 3, 2)?, seed), vec![x], vec![vec![2, 8]], TOL);
        let o = uniform(seed + 2, 6, 0.1, 0.9);
        let a = vec![0.0, -1.0, 2.0, -0.5, 0.0, 1.0];
        let b = vec![1.0, 0.0, -2.0, 0.3, 0.0, -1.0];
        assert_grad("weighted_log_pair", |t| t[0].weighted_log_pair(&a, &b), vec![o], vec![vec![6]], TOL);
    }
}

use ftl_tensor::{BatchNormMode, RunningStats, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

#[allow(clippy::too_many_arguments)]
fn naive_conv(
    x: &[f64],
    w: &[f64],
    (n, c, h, wd): (usize, usize, usize, usize),
    (k, kh, kw): (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * k * oh * ow];
    for b in 0..n {
        for o in 0..k {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for ch in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (y * stride + i) as isize - pad as isize;
                                let ix = (xx * stride + j) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x[((b * c + ch) * h + iy as usize) * wd + ix as usize]
                                    * w[((o * c + ch) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((b * k + o) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn matmul_identity_and_zero() {
    let eye = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    let v = Tensor::new(vec![3.0, 4.0], &[2, 1]).unwrap();
    assert_eq!(eye.matmul(&v).unwrap().data(), &[3.0, 4.0]);

    let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
    let z = Tensor::zeros(&[2, 1]).unwrap();
    assert_eq!(a.matmul(&z).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (a, b) = (random(&mut rng, 12, 10.0), random(&mut rng, 8, 10.0));
        let got = Tensor::new(a.clone(), &[3, 4])
            .unwrap()
            .matmul(&Tensor::new(b.clone(), &[4, 2]).unwrap())
            .unwrap();
        let want = naive_matmul(&a, &b, 3, 4, 2);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
    }
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let a = Tensor::zeros(&[2, 3]).unwrap();
    let b = Tensor::zeros(&[2, 3]).unwrap();
    let err = a.matmul(&b).unwrap_err();
    assert_eq!(
        err,
        TensorError::Dimension {
            op: "matmul",
            lhs: vec![2, 3],
            rhs: vec![2, 3]
        }
    );
    assert!(err.to_string().contains("[2, 3] vs [2, 3]"));
}

#[test]
fn conv2d_examples() {
    let x = Tensor::ones(&[1, 1, 3, 3]).unwrap();
    let k = Tensor::ones(&[1, 1, 3, 3]).unwrap();
    let y = x.conv2d(&k, 1, 0).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.item(), 9.0);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::new(random(&mut rng, 50, 2.0), &[1, 2, 5, 5]).unwrap();
    let zero = Tensor::zeros(&[3, 2, 3, 3]).unwrap();
    assert!(x
        .conv2d(&zero, 2, 1)
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn conv2d_matches_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for &(stride, pad) in &[(2, 1), (1, 0), (1, 2), (3, 1)] {
        let xs = random(&mut rng, 50, 10.0);
        let ws = random(&mut rng, 54, 10.0);
        let got = Tensor::new(xs.clone(), &[1, 2, 5, 5])
            .unwrap()
            .conv2d(
                &Tensor::new(ws.clone(), &[3, 2, 3, 3]).unwrap(),
                stride,
                pad,
            )
            .unwrap();
        let want = naive_conv(&xs, &ws, (1, 2, 5, 5), (3, 3, 3), stride, pad);
        assert_eq!(got.numel(), want.len());
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn conv2d_rejects_oversized_kernel() {
    let x = Tensor::zeros(&[1, 1, 3, 3]).unwrap();
    let k = Tensor::zeros(&[1, 1, 5, 5]).unwrap();
    assert!(matches!(
        x.conv2d(&k, 1, 0),
        Err(TensorError::Dimension { .. })
    ));
    assert!(x.conv2d(&k, 1, 1).is_ok());
}

#[test]
fn upsample_examples() {
    let x = Tensor::param(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
    assert_eq!(x.upsample_nearest(1).unwrap().data(), x.data());
    let y = x.upsample_nearest(2).unwrap();
    assert_eq!(
        y.data(),
        &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
    );
    y.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![4.0; 4]);
    assert!(matches!(
        x.upsample_nearest(0),
        Err(TensorError::Parameter { .. })
    ));
}

#[test]
fn leaky_relu_examples() {
    let x = Tensor::param(vec![-1.0, 2.0, 0.0], &[3]).unwrap();
    let y = x.leaky_relu(0.1);
    assert_eq!(y.data(), &[-0.1, 2.0, 0.0]);
    y.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.1, 1.0, 1.0]);
}

#[test]
fn batchnorm_constant_columns_give_beta() {
    let x = Tensor::new(vec![3.0, -1.0, 3.0, -1.0, 3.0, -1.0], &[3, 2]).unwrap();
    let gamma = Tensor::new(vec![2.0, 0.5], &[2]).unwrap();
    let beta = Tensor::new(vec![0.25, -4.0], &[2]).unwrap();
    let mut stats = RunningStats::new(2);
    let y = x
        .batchnorm(&gamma, &beta, &mut stats, BatchNormMode::Train)
        .unwrap();
    for row in y.data().chunks(2) {
        assert!((row[0] - 0.25).abs() < 1e-12);
        assert!((row[1] + 4.0).abs() < 1e-12);
    }
}

#[test]
fn batchnorm_normalizes_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::new(random(&mut rng, 40, 5.0), &[10, 4]).unwrap();
    let mut stats = RunningStats::new(4);
    let y = x
        .batchnorm(
            &Tensor::ones(&[4]).unwrap(),
            &Tensor::zeros(&[4]).unwrap(),
            &mut stats,
            BatchNormMode::Train,
        )
        .unwrap();
    for c in 0..4 {
        let col: Vec<f64> = y.data().iter().skip(c).step_by(4).copied().collect();
        let mean = col.iter().sum::<f64>() / 10.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }
    // Running statistics moved 10% of the way towards the batch statistics.
    assert!(stats.mean.iter().all(|m| m.abs() < 5.0));
    assert!(stats.var.iter().any(|&v| v != 1.0));
}

#[test]
fn batchnorm_eval_uses_running_stats() {
    let x = Tensor::new(vec![1.0, 2.0], &[1, 2]).unwrap();
    let mut stats = RunningStats {
        mean: vec![1.0, 0.0],
        var: vec![4.0 - 1e-5, 1.0 - 1e-5],
    };
    let y = x
        .batchnorm(
            &Tensor::ones(&[2]).unwrap(),
            &Tensor::zeros(&[2]).unwrap(),
            &mut stats,
            BatchNormMode::Eval,
        )
        .unwrap();
    assert!((y.data()[0]).abs() < 1e-12);
    assert!((y.data()[1] - 2.0).abs() < 1e-12);
}

#[test]
fn batchnorm_single_sample_train_is_degenerate() {
    let x = Tensor::zeros(&[1, 3]).unwrap();
    let mut stats = RunningStats::new(3);
    let err = x
        .batchnorm(
            &Tensor::ones(&[3]).unwrap(),
            &Tensor::zeros(&[3]).unwrap(),
            &mut stats,
            BatchNormMode::Train,
        )
        .unwrap_err();
    assert_eq!(err, TensorError::DegenerateBatch(1));
}

#[test]
fn backward_examples() {
    let x = Tensor::param(vec![1.0, -2.0, 3.5, 0.0, 7.0, 1.0], &[2, 3]).unwrap();
    x.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);

    let x = Tensor::param(vec![1.0, -2.0, 3.5], &[3]).unwrap();
    x.square().sum().mul_scalar(0.5).backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0, -2.0, 3.5]);
}

#[test]
fn backward_rejects_non_scalar() {
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    assert!(matches!(
        x.mul_scalar(2.0).backward(),
        Err(TensorError::Contract(_))
    ));
}

#[test]
fn backward_accumulates_without_reset() {
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    x.sum().backward().unwrap();
    x.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn backward_is_deterministic_across_resets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = Tensor::param(random(&mut rng, 12, 2.0), &[4, 3]).unwrap();
    let x = Tensor::new(random(&mut rng, 8, 2.0), &[2, 4]).unwrap();
    let run = || {
        w.zero_grad();
        x.matmul(&w)
            .unwrap()
            .leaky_relu(0.1)
            .square()
            .sum()
            .backward()
            .unwrap();
        w.grad().unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
}

#[test]
fn intermediate_tensors_receive_grads() {
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    let y = x.mul_scalar(3.0);
    y.sum().backward().unwrap();
    assert_eq!(y.grad().unwrap(), vec![1.0, 1.0]);
    assert_eq!(x.grad().unwrap(), vec![3.0, 3.0]);
}

#[test]
fn softmax_cross_entropy_uniform_scores() {
    let s = Tensor::zeros(&[3, 5]).unwrap();
    let l = s.softmax_cross_entropy(&[0, 4, 2]).unwrap();
    assert!((l.item() - 5f64.ln()).abs() < 1e-15);
    assert!(matches!(
        s.softmax_cross_entropy(&[0, 5, 1]),
        Err(TensorError::Parameter { .. })
    ));
}

#[test]
fn gram_upper_ordering() {
    let x = Tensor::new(vec![1.0, 0.0, 0.0, 1.0, 3.0, 4.0], &[1, 6]).unwrap();
    let g = x.gram_upper(0, 3, 2).unwrap();
    // (0,0) (0,1) (0,2) (1,1) (1,2) (2,2)
    assert_eq!(g.data(), &[1.0, 0.0, 3.0, 1.0, 4.0, 25.0]);
}

#[test]
fn narrow_and_concat_round_trip() {
    let x = Tensor::new((0..12).map(f64::from).collect(), &[2, 6]).unwrap();
    let a = x.narrow(0, 2).unwrap();
    let b = x.narrow(2, 4).unwrap();
    assert_eq!(a.data(), &[0.0, 1.0, 6.0, 7.0]);
    let back = Tensor::concat(&[a, b]).unwrap();
    assert_eq!(back.data(), x.data());
    assert!(x.narrow(5, 2).is_err());
}

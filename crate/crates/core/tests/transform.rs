use std::f64::consts::{PI, TAU};
use std::time::Instant;

use ftl_core::transform::*;
use ftl_core::Error;
use ftl_tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_codes(r: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    Tensor::new(
        (0..n * d).map(|_| r.gen_range(-2.0..2.0)).collect(),
        &[n, d],
    )
    .unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn mat_mul(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            for p in 0..k {
                c[i * k + j] += a[i * k + p] * b[p * k + j];
            }
        }
    }
    c
}

fn transpose(a: &[f64], k: usize) -> Vec<f64> {
    (0..k * k).map(|idx| a[(idx % k) * k + idx / k]).collect()
}

fn det3(m: &[f64; 9]) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

#[test]
fn rotation_2d_angle_addition() {
    let mut r = rng(1);
    for _ in 0..100 {
        let (a, b) = (r.gen_range(-10.0..10.0), r.gen_range(-10.0..10.0));
        let prod = mat_mul(&rotation_2d(a).unwrap(), &rotation_2d(b).unwrap(), 2);
        assert!(max_diff(&prod, &rotation_2d(a + b).unwrap()) <= 1e-12);
    }
}

#[test]
fn rotation_3d_is_special_orthogonal() {
    let mut r = rng(2);
    let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    for _ in 0..100 {
        let m = rotation_3d(r.gen_range(-PI..PI), r.gen_range(-PI..PI)).unwrap();
        assert!(max_diff(&mat_mul(&transpose(&m, 3), &m, 3), &eye) <= 1e-12);
        assert!((det3(&m) - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn interval_map_is_monotone_and_bijective() {
    let (lo, hi) = (0.7, 1.3);
    let mut prev = -1.0;
    for i in 0..=1000 {
        let v = lo + (hi - lo) * i as f64 / 1000.0;
        let a = map_interval_to_angle(v, lo, hi).unwrap();
        assert!(a > prev);
        assert!((0.0..=PI).contains(&a));
        assert!((angle_to_interval(a, lo, hi).unwrap() - v).abs() < 1e-14);
        prev = a;
    }
    assert!(matches!(
        map_interval_to_angle(0.69, lo, hi),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn identity_params_give_identity_operator() {
    for f in [
        TransformFamily::mnist(),
        TransformFamily::desk(),
        TransformFamily::face(),
    ] {
        let op = build_block_transform(&f, &TransformParams::identity(&f)).unwrap();
        let e = random_codes(&mut rng(3), 4, f.feature_dim());
        assert_eq!(op.apply(&e).unwrap().data(), e.data());
    }
}

#[test]
fn mnist_operator_layout() {
    let f = TransformFamily::mnist();
    let mut r = rng(4);
    let op = build_block_transform(&f, &TransformParams::random(&f, &mut r)).unwrap();
    assert_eq!(op.feature_dim(), 510);
    assert_eq!(op.blocks().len(), 3);
    let total: usize = op.blocks().iter().map(|b| b.repetitions).sum();
    assert_eq!(total, 255);
    for b in op.blocks() {
        assert_eq!((b.block_dim, b.repetitions), (2, 85));
    }
    // Every 2×2 diagonal block of a dof is the same matrix.
    let dense = op.to_dense();
    for (b, off) in op.blocks().iter().zip(f.offsets()) {
        for rep in 0..85 {
            let base = off + rep * 2;
            let blk = [
                dense[base * 510 + base],
                dense[base * 510 + base + 1],
                dense[(base + 1) * 510 + base],
                dense[(base + 1) * 510 + base + 1],
            ];
            assert_eq!(blk.to_vec(), b.matrix);
        }
    }
}

#[test]
fn face_family_is_pair_of_sphere_rotations() {
    let f = TransformFamily::face();
    let p = TransformParams::new()
        .with("rotation", DofValue::sphere(0.4, -0.2))
        .with("lighting", DofValue::sphere(-1.1, 0.6));
    let dense = build_block_transform(&f, &p).unwrap().to_dense();
    let r1 = rotation_3d(0.4, -0.2).unwrap();
    let r2 = rotation_3d(-1.1, 0.6).unwrap();
    let mut expected = vec![0.0; 36];
    for i in 0..3 {
        for j in 0..3 {
            expected[i * 6 + j] = r1[i * 3 + j];
            expected[(i + 3) * 6 + j + 3] = r2[i * 3 + j];
        }
    }
    assert_eq!(dense, expected);
}

#[test]
fn sphere_composition_matches_matrix_product() {
    let f = TransformFamily::face();
    let mut r = rng(5);
    for _ in 0..100 {
        let a = TransformParams::random(&f, &mut r);
        let b = TransformParams::random(&f, &mut r);
        let c = compose(&f, &b, &a).unwrap();
        for d in f.dofs() {
            let prod = mat_mul(&dof_matrix(d, &b).unwrap(), &dof_matrix(d, &a).unwrap(), 3);
            assert!(max_diff(&dof_matrix(d, &c).unwrap(), &prod) <= 1e-12);
        }
    }
}

#[test]
fn invert_round_trip_on_codes() {
    let mut r = rng(6);
    for f in [
        TransformFamily::face(),
        TransformFamily::new(vec![DofSpec::new("rot", DofDomain::Circle, 7)]).unwrap(),
    ] {
        for _ in 0..50 {
            let p = TransformParams::random(&f, &mut r);
            let e = random_codes(&mut r, 3, f.feature_dim());
            let y = build_block_transform(&f, &p).unwrap().apply(&e).unwrap();
            let back = build_block_transform(&f, &invert(&f, &p).unwrap())
                .unwrap()
                .apply(&y)
                .unwrap();
            assert!(max_diff(back.data(), e.data()) <= 1e-12);
        }
    }
}

#[test]
fn transpose_inverts_every_family() {
    let mut r = rng(7);
    for f in [
        TransformFamily::mnist(),
        TransformFamily::desk(),
        TransformFamily::face(),
    ] {
        let p = TransformParams::random(&f, &mut r);
        let op = build_block_transform(&f, &p).unwrap();
        let e = random_codes(&mut r, 2, f.feature_dim());
        let back = op.transpose().apply(&op.apply(&e).unwrap()).unwrap();
        assert!(max_diff(back.data(), e.data()) <= 1e-12);
    }
}

#[test]
fn signature_invariance_random_pairs() {
    let mut r = rng(8);
    let f = TransformFamily::desk();
    for _ in 0..100 {
        let p = TransformParams::random(&f, &mut r);
        let e = random_codes(&mut r, 1, f.feature_dim());
        let y = build_block_transform(&f, &p).unwrap().apply(&e).unwrap();
        let a = invariant_signature(&f, &e).unwrap();
        let b = invariant_signature(&f, &y).unwrap();
        assert_eq!(a.shape(), &[1, f.signature_len()]);
        assert!(max_diff(a.data(), b.data()) <= 1e-9);
    }
}

#[test]
fn family_json_round_trip_is_lossless() {
    for f in [
        TransformFamily::mnist(),
        TransformFamily::face(),
        TransformFamily::planar(2, 0.123456789012345, 1.9).unwrap(),
    ] {
        let back = TransformFamily::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json(), f.to_json());
    }
}

#[test]
fn audit_identity_pair_is_exact() {
    for f in [TransformFamily::mnist(), TransformFamily::face()] {
        let id = TransformParams::identity(&f);
        let v = vec![(0..f.feature_dim())
            .map(|i| (i as f64 * 0.37).sin())
            .collect()];
        let report = audit_pairs(&f, &[(id.clone(), id)], &v, &build_block_transform).unwrap();
        assert_eq!(
            (
                report.homomorphism,
                report.inverse,
                report.identity,
                report.norm,
                report.signature
            ),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }
}

#[test]
fn audit_mnist_thousand_trials() {
    let start = Instant::now();
    let report = audit_homomorphism(&TransformFamily::mnist(), 1000, 2024).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(report.passed(), "{report:?}");
    assert!(
        report.homomorphism <= 1e-12
            && report.inverse <= 1e-12
            && report.identity <= 1e-12
            && report.norm <= 1e-12
    );
    assert!(report.signature <= 1e-9);
    assert!(elapsed < 30.0, "audit took {elapsed:.1}s");
    assert_eq!(
        report,
        audit_homomorphism(&TransformFamily::mnist(), 1000, 2024).unwrap()
    );
}

#[test]
fn audit_flags_corrupted_block() {
    let f = TransformFamily::desk();
    let corrupt =
        |fam: &TransformFamily, p: &TransformParams| -> ftl_core::Result<BlockTransform> {
            let op = build_block_transform(fam, p)?;
            let mut m: Vec<Vec<f64>> = op.blocks().iter().map(|b| b.matrix.clone()).collect();
            m[1].iter_mut().for_each(|x| *x *= 1.01);
            BlockTransform::from_matrices(fam, m)
        };
    let report = audit_with(&f, 20, 9, &corrupt).unwrap();
    assert!(report.norm > 1e-6, "{report:?}");
    assert!(!report.passed());
    assert!(report.failures().contains(&"norm"));
}

#[test]
fn audit_rejects_zero_trials() {
    assert!(matches!(
        audit_homomorphism(&TransformFamily::tiny(), 0, 1),
        Err(Error::Parameter(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homomorphism_matches_dense_product(seed in any::<u64>()) {
        let mut r = rng(seed);
        for f in [TransformFamily::desk(), TransformFamily::face()] {
            let (a, b) = sample_composable_pair(&f, &mut r).unwrap();
            let d = f.feature_dim();
            let fa = build_block_transform(&f, &a).unwrap();
            let fb = build_block_transform(&f, &b).unwrap();
            let fc = build_block_transform(&f, &compose(&f, &b, &a).unwrap()).unwrap();
            prop_assert!(max_diff(&fc.to_dense(), &dense_matmul(&fb.to_dense(), &fa.to_dense(), d)) <= 1e-12);
            let e = random_codes(&mut r, 2, d);
            let chained = fb.apply(&fa.apply(&e).unwrap()).unwrap();
            prop_assert!(max_diff(chained.data(), fc.apply(&e).unwrap().data()) <= 1e-12);
        }
    }

    #[test]
    fn norm_is_preserved(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = TransformFamily::mnist();
        let p = TransformParams::random(&f, &mut r);
        let e = random_codes(&mut r, 1, 510);
        let y = build_block_transform(&f, &p).unwrap().apply(&e).unwrap();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n(y.data()) - n(e.data())).abs() / n(e.data()) <= 1e-12);
    }

    #[test]
    fn apply_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let f = TransformFamily::desk();
        let op = build_block_transform(&f, &TransformParams::random(&f, &mut r)).unwrap();
        let e1 = random_codes(&mut r, 2, 30);
        let e2 = random_codes(&mut r, 2, 30);
        let mixed = e1.mul_scalar(a).add(&e2.mul_scalar(b)).unwrap();
        let lhs = op.apply(&mixed).unwrap();
        let rhs = op.apply(&e1).unwrap().mul_scalar(a).add(&op.apply(&e2).unwrap().mul_scalar(b)).unwrap();
        prop_assert!(max_diff(lhs.data(), rhs.data()) <= 1e-12);
    }

    #[test]
    fn circle_inverse_composes_to_identity(angle in 0.0f64..TAU) {
        let f = TransformFamily::new(vec![DofSpec::new("rot", DofDomain::Circle, 3)]).unwrap();
        let p = TransformParams::new().scalar("rot", angle);
        let c = compose(&f, &invert(&f, &p).unwrap(), &p).unwrap();
        let m = build_block_transform(&f, &c).unwrap().to_dense();
        let eye: Vec<f64> = (0..36).map(|i| if i / 6 == i % 6 { 1.0 } else { 0.0 }).collect();
        prop_assert!(max_diff(&m, &eye) <= 1e-12);
    }

    #[test]
    fn apply_gradient_is_transpose(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = TransformFamily::face();
        let op = build_block_transform(&f, &TransformParams::random(&f, &mut r)).unwrap();
        let report = ftl_tensor::gradcheck::check(
            |t| Ok(op.apply(&t[0]).map_err(|e| match e { Error::Tensor(t) => t, other => panic!("{other}") })?.square().sum()),
            &[(0..12).map(|_| r.gen_range(-2.0..2.0)).collect()],
            &[vec![2, 6]],
            ftl_tensor::gradcheck::DEFAULT_STEP,
        ).unwrap();
        prop_assert!(report.max_relative_error() <= 1e-5);
    }
}

use ftl_core::objectives::*;
use ftl_core::transform::{
    build_block_transform, DofDomain, DofSpec, TransformFamily, TransformParams,
};
use ftl_core::Error;
use ftl_tensor::gradcheck::{check, DEFAULT_STEP};
use ftl_tensor::{Tensor, TensorError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

fn t(data: Vec<f64>, shape: &[usize]) -> Tensor {
    Tensor::new(data, shape).unwrap()
}

fn lift<T>(r: ftl_core::Result<T>) -> ftl_tensor::Result<T> {
    r.map_err(|e| match e {
        Error::Tensor(t) => t,
        other => TensorError::Contract(other.to_string()),
    })
}

fn grad_err<F>(f: F, inputs: Vec<Vec<f64>>, shapes: Vec<Vec<usize>>) -> f64
where
    F: Fn(&[Tensor]) -> ftl_tensor::Result<Tensor>,
{
    check(f, &inputs, &shapes, DEFAULT_STEP)
        .unwrap()
        .max_relative_error()
}

#[test]
fn l1_examples() {
    let x = t(uniform(1, 20, 0.0, 1.0), &[4, 5]);
    assert_eq!(l1_loss(&x, &x).unwrap().item(), 0.0);
    let z = Tensor::zeros(&[3, 3]).unwrap();
    let o = Tensor::ones(&[3, 3]).unwrap();
    assert_eq!(l1_loss(&z, &o).unwrap().item(), 1.0);
    let y = t(uniform(2, 20, 0.0, 1.0), &[4, 5]);
    let oracle: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 20.0;
    assert!((l1_loss(&x, &y).unwrap().item() - oracle).abs() <= 1e-12);
    assert!(l1_loss(&x, &z).is_err());
}

#[test]
fn ssim_self_similarity_is_exactly_one() {
    let x = t(uniform(3, 2 * 16 * 16, 0.0, 1.0), &[2, 16, 16]);
    assert_eq!(ssim(&x, &x, &SsimConfig::default()).unwrap().item(), 1.0);
}

#[test]
fn ssim_constant_images_closed_form() {
    let cfg = SsimConfig::default();
    let c1 = cfg.c1();
    let z = Tensor::zeros(&[1, 16, 16]).unwrap();
    let o = Tensor::ones(&[1, 16, 16]).unwrap();
    let v = ssim(&z, &o, &cfg).unwrap().item();
    assert!((v - c1 / (1.0 + c1)).abs() <= 1e-12, "{v}");
}

#[test]
fn ssim_rejects_small_images() {
    let x = Tensor::zeros(&[1, 10, 16]).unwrap();
    assert!(matches!(
        ssim(&x, &x, &SsimConfig::default()),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn ssim_gradient() {
    let cfg = SsimConfig::default();
    let x = uniform(4, 2 * 13 * 12, 0.0, 1.0);
    let y = uniform(5, 2 * 13 * 12, 0.0, 1.0);
    let s = vec![vec![2, 13, 12], vec![2, 13, 12]];
    let err = grad_err(|v| lift(ssim(&v[0], &v[1], &cfg)), vec![x, y], s);
    assert!(err <= 1e-4, "{err:e}");
}

#[test]
fn face_loss_examples() {
    let x = t(uniform(6, 2 * 12 * 12, 0.0, 1.0), &[2, 12, 12]);
    let y = t(uniform(7, 2 * 12 * 12, 0.0, 1.0), &[2, 12, 12]);
    for alpha in [0.0, 0.3, FACE_ALPHA, 1.0] {
        assert_eq!(face_loss(&x, &x, alpha).unwrap().item(), 0.0);
    }
    assert_eq!(
        face_loss(&x, &y, 0.0).unwrap().item().to_bits(),
        l1_loss(&x, &y).unwrap().item().to_bits()
    );
    let s = ssim(&x, &y, &SsimConfig::default()).unwrap().item();
    let l1 = l1_loss(&x, &y).unwrap().item();
    let hand = 0.85 * (1.0 - s) / 2.0 + 0.15 * l1;
    assert!((face_loss(&x, &y, 0.85).unwrap().item() - hand).abs() <= 1e-12);
    assert!(face_loss(&x, &y, 1.2).is_err());
    assert!(face_loss(&x, &y, -0.1).is_err());
}

#[test]
fn face_loss_gradient() {
    let x = uniform(8, 12 * 12, 0.0, 1.0);
    let y = uniform(9, 12 * 12, 0.0, 1.0);
    let s = vec![vec![1, 12, 12], vec![1, 12, 12]];
    let err = grad_err(|v| lift(face_loss(&v[0], &v[1], FACE_ALPHA)), vec![x, y], s);
    assert!(err <= 1e-4, "{err:e}");
}

#[test]
fn balanced_bce_symmetric_minimum() {
    let cfg = BalancedBceConfig::plain(0.5);
    let target = t(vec![0.0, 1.0, 1.0, 0.0], &[4]);
    assert_eq!(balanced_bce(&target, &target, &cfg).unwrap().item(), 0.0);
    let off = t(vec![0.2, 0.7, 0.9, 0.4], &[4]);
    assert!(balanced_bce(&off, &target, &cfg).unwrap().item() > 0.0);
}

#[test]
fn balanced_bce_single_voxel_with_rescaling() {
    let cfg = BalancedBceConfig::default();
    let g = cfg.gamma;
    let v = balanced_bce(&t(vec![1.0], &[1]), &t(vec![1.0], &[1]), &cfg)
        .unwrap()
        .item();
    // t' = 2 keeps the (1 − t') term alive with weight −1.
    let formula = -g * 2.0 * 0.9999f64.ln() + (1.0 - g) * (1.0f64 - 0.9999).ln();
    assert!((v - formula).abs() <= 1e-12, "{v} vs {formula}");
    assert!(v.is_finite());
}

#[test]
fn balanced_bce_monotone_over_clamp_range() {
    let cfg = BalancedBceConfig::default();
    let one = t(vec![1.0], &[1]);
    let zero = t(vec![0.0], &[1]);
    let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=200 {
        let o = t(vec![i as f64 / 200.0], &[1]);
        let pos = balanced_bce(&o, &one, &cfg).unwrap().item();
        let neg = balanced_bce(&o, &zero, &cfg).unwrap().item();
        assert!(pos.is_finite() && neg.is_finite());
        assert!(pos < prev.0 && neg > prev.1);
        prev = (pos, neg);
    }
}

#[test]
fn balanced_bce_errors() {
    let cfg = BalancedBceConfig::default();
    let o = t(vec![0.5, 0.5], &[2]);
    assert!(matches!(
        balanced_bce(&o, &t(vec![0.5, 1.0], &[2]), &cfg),
        Err(Error::Parameter(_))
    ));
    assert!(balanced_bce(&t(vec![1.5, 0.5], &[2]), &t(vec![1.0, 0.0], &[2]), &cfg).is_err());
}

#[test]
fn balanced_bce_gradient() {
    let cfg = BalancedBceConfig::default();
    let target = t(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[6]);
    let err = grad_err(
        |v| lift(balanced_bce(&v[0], &target, &cfg)),
        vec![uniform(10, 6, 0.05, 0.95)],
        vec![vec![6]],
    );
    assert!(err <= 1e-5, "{err:e}");
}

#[test]
fn regularizer_examples() {
    let f = TransformFamily::new(vec![DofSpec::new("rot", DofDomain::Circle, 1)]).unwrap();
    let a = t(vec![1.0, 0.0], &[1, 2]);
    let b = t(vec![2.0, 0.0], &[1, 2]);
    assert_eq!(invariance_regularizer(&f, &a, &b).unwrap().item(), 9.0);
    assert_eq!(invariance_regularizer(&f, &b, &a).unwrap().item(), 9.0);

    let desk = TransformFamily::desk();
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let e = t(uniform(12, 3 * 30, -2.0, 2.0), &[3, 30]);
    let y = build_block_transform(&desk, &TransformParams::random(&desk, &mut r))
        .unwrap()
        .apply(&e)
        .unwrap();
    assert!(invariance_regularizer(&desk, &e, &y).unwrap().item() <= 1e-9);
    assert!(invariance_regularizer(&desk, &e, &a).is_err());
}

#[test]
fn regularizer_gradient() {
    let f = TransformFamily::desk();
    let err = grad_err(
        |v| lift(invariance_regularizer(&f, &v[0], &v[1])),
        vec![uniform(13, 60, -2.0, 2.0), uniform(14, 60, -2.0, 2.0)],
        vec![vec![2, 30], vec![2, 30]],
    );
    assert!(err <= 1e-5, "{err:e}");
}

#[test]
fn combined_loss_examples() {
    let recon = Tensor::scalar(0.37);
    let scores = t(uniform(15, 12, -1.0, 1.0), &[3, 4]);
    let labels = [0, 3, 2];
    assert_eq!(
        combined_classification_loss(&recon, &scores, &labels, 0.0)
            .unwrap()
            .item(),
        0.37
    );
    let uniform_scores = Tensor::zeros(&[3, 4]).unwrap();
    let v = combined_classification_loss(&Tensor::scalar(0.0), &uniform_scores, &labels, 1.0)
        .unwrap()
        .item();
    assert!((v - 4f64.ln()).abs() <= 1e-12);
    // Hand-evaluated cross-entropy.
    let mut xent = 0.0;
    for (row, &l) in scores.data().chunks(4).zip(&labels) {
        let z: f64 = row.iter().map(|s| s.exp()).sum();
        xent += z.ln() - row[l];
    }
    xent /= 3.0;
    let total = combined_classification_loss(&recon, &scores, &labels, CLASSIFICATION_WEIGHT)
        .unwrap()
        .item();
    assert!((total - (0.37 + 10.0 * xent)).abs() <= 1e-12);
    assert!(combined_classification_loss(&recon, &scores, &[0, 4, 1], 10.0).is_err());
}

#[test]
fn l1_gradient() {
    let err = grad_err(
        |v| lift(l1_loss(&v[0], &v[1])),
        vec![uniform(16, 12, -2.0, 2.0), uniform(17, 12, -2.0, 2.0)],
        vec![vec![3, 4], vec![3, 4]],
    );
    assert!(err <= 1e-5, "{err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ssim_is_symmetric_and_bounded(seed in any::<u64>()) {
        let cfg = SsimConfig::default();
        let x = t(uniform(seed, 2 * 14 * 14, 0.0, 1.0), &[2, 14, 14]);
        let y = t(uniform(seed ^ 1, 2 * 14 * 14, 0.0, 1.0), &[2, 14, 14]);
        let a = ssim(&x, &y, &cfg).unwrap().item();
        let b = ssim(&y, &x, &cfg).unwrap().item();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn losses_are_nonnegative(seed in any::<u64>()) {
        let x = t(uniform(seed, 12 * 12, 0.0, 1.0), &[1, 12, 12]);
        let y = t(uniform(seed ^ 2, 12 * 12, 0.0, 1.0), &[1, 12, 12]);
        prop_assert!(l1_loss(&x, &y).unwrap().item() >= 0.0);
        prop_assert!(face_loss(&x, &y, FACE_ALPHA).unwrap().item() >= 0.0);
        let target: Vec<f64> = uniform(seed ^ 3, 144, 0.0, 1.0).iter().map(|v| (*v > 0.7) as u8 as f64).collect();
        let bce = balanced_bce(&x, &t(target, &[1, 12, 12]), &BalancedBceConfig::plain(0.98)).unwrap().item();
        prop_assert!(bce >= 0.0 && bce.is_finite());
        let f = TransformFamily::tiny();
        let e1 = t(uniform(seed ^ 4, 12, -2.0, 2.0), &[2, 6]);
        let e2 = t(uniform(seed ^ 5, 12, -2.0, 2.0), &[2, 6]);
        prop_assert!(invariance_regularizer(&f, &e1, &e2).unwrap().item() >= 0.0);
    }

    #[test]
    fn face_loss_is_affine_in_alpha(seed in any::<u64>(), a in 0.0f64..1.0) {
        let x = t(uniform(seed, 12 * 12, 0.0, 1.0), &[1, 12, 12]);
        let y = t(uniform(seed ^ 6, 12 * 12, 0.0, 1.0), &[1, 12, 12]);
        let f0 = face_loss(&x, &y, 0.0).unwrap().item();
        let f1 = face_loss(&x, &y, 1.0).unwrap().item();
        let fa = face_loss(&x, &y, a).unwrap().item();
        prop_assert!((fa - ((1.0 - a) * f0 + a * f1)).abs() <= 1e-12);
    }

    #[test]
    fn balanced_bce_is_finite_everywhere(o in proptest::collection::vec(0.0f64..=1.0, 1..20), seed in any::<u64>()) {
        let n = o.len();
        let target: Vec<f64> = uniform(seed, n, 0.0, 1.0).iter().map(|v| (*v > 0.5) as u8 as f64).collect();
        let v = balanced_bce(&t(o, &[n]), &t(target, &[n]), &BalancedBceConfig::default()).unwrap().item();
        prop_assert!(v.is_finite());
    }
}

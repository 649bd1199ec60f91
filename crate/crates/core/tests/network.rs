use ftl_core::network::*;
use ftl_core::transform::{
    apply_per_row, build_block_transform, compose, invariant_signature, sample_composable_pair,
    signature_rows, TransformFamily, TransformParams,
};
use ftl_core::Error;
use ftl_tensor::gradcheck::{check, DEFAULT_STEP};
use ftl_tensor::{BatchNormMode, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn images(seed: u64, n: usize, shape: &[usize]) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let per: usize = shape.iter().product();
    let mut s = vec![n];
    s.extend(shape);
    Tensor::new((0..n * per).map(|_| r.gen_range(0.0..1.0)).collect(), &s).unwrap()
}

fn lift<T>(r: ftl_core::Result<T>) -> ftl_tensor::Result<T> {
    r.map_err(|e| match e {
        Error::Tensor(t) => t,
        other => TensorError::Contract(other.to_string()),
    })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn zero_final_layer_gives_zero_code() {
    let mut m = Model::new(EncoderDecoderConfig::tiny(), 1).unwrap();
    for name in ["encoder.1.weight", "encoder.1.bias"] {
        m.params_mut()
            .get_mut(name)
            .unwrap()
            .data
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    let code = m.encode(&Tensor::zeros(&[3, 8, 8]).unwrap()).unwrap();
    assert!(code.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identical_images_identical_codes() {
    let m = Model::new(EncoderDecoderConfig::desk_conv(), 2).unwrap();
    let one = images(3, 1, &[16, 16]);
    let two = Tensor::new([one.data(), one.data()].concat(), &[2, 16, 16]).unwrap();
    let code = m.encode(&two).unwrap();
    assert_eq!(code.shape(), &[2, 30]);
    assert_eq!(&code.data()[..30], &code.data()[30..]);
}

#[test]
fn mnist_preset_shapes() {
    let m = Model::new(EncoderDecoderConfig::mnist_mlp(), 4).unwrap();
    let x = images(5, 2, &[28, 28]);
    let code = m.encode(&x).unwrap();
    assert_eq!(code.shape(), &[2, 510]);
    let out = m.decode(&code).unwrap();
    assert_eq!(out.shape(), &[2, 28, 28]);
    assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(m.decode(&code).unwrap().data(), out.data());
}

#[test]
fn mnist_checkpoint_declares_expected_arrays() {
    let m = Model::new(EncoderDecoderConfig::mnist_mlp(), 6).unwrap();
    let dense = |i: usize, o: usize| i * o + o;
    let expected = dense(784, 510)
        + 2 * 510
        + dense(510, 510)
        + 2 * 510
        + dense(510, 510)
        + dense(510, 510)
        + 2 * 510
        + dense(510, 510)
        + 2 * 510
        + dense(510, 784);
    assert_eq!(m.params().total(), expected);
    let names: Vec<&str> = m.params().arrays.iter().map(|a| a.name.as_str()).collect();
    let mut want = Vec::new();
    for side in ["encoder", "decoder"] {
        for i in 0..3 {
            want.push(format!("{side}.{i}.weight"));
            want.push(format!("{side}.{i}.bias"));
            if i < 2 {
                want.push(format!("{side}.{i}.bn_gamma"));
                want.push(format!("{side}.{i}.bn_beta"));
            }
        }
    }
    assert_eq!(names, want);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mnist.ckpt");
    save_checkpoint(&m, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.params().total(), expected);
    assert_eq!(loaded.stats().len(), 4);
    let bytes = std::fs::metadata(&path).unwrap().len() as usize;
    assert!(bytes > (expected + 4 * 2 * 510) * 8);
}

#[test]
fn identity_transform_is_plain_reconstruction() {
    for cfg in [
        EncoderDecoderConfig::tiny(),
        EncoderDecoderConfig::desk_mlp(),
        EncoderDecoderConfig::desk_conv(),
    ] {
        let m = Model::new(cfg, 7).unwrap();
        let x = images(8, 3, &m.config().input_shape.clone());
        let id = TransformParams::identity(m.family());
        assert_eq!(
            m.forward_transformed(&x, &id).unwrap().data(),
            m.reconstruct(&x).unwrap().data()
        );
        let rows = vec![id.clone(); 3];
        assert_eq!(
            m.forward_transformed_rows(&x, &rows).unwrap().data(),
            m.reconstruct(&x).unwrap().data()
        );
    }
}

#[test]
fn forward_respects_composition() {
    let m = Model::new(EncoderDecoderConfig::desk_mlp(), 9).unwrap();
    let f = m.family().clone();
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let x = images(11, 4, &[16, 16]);
    for _ in 0..5 {
        let (a, b) = sample_composable_pair(&f, &mut r).unwrap();
        let fa = build_block_transform(&f, &a).unwrap();
        let fb = build_block_transform(&f, &b).unwrap();
        let code = m.encode(&x).unwrap();
        let both = m
            .decode(&fb.apply(&fa.apply(&code).unwrap()).unwrap())
            .unwrap();
        let composed = m
            .forward_transformed(&x, &compose(&f, &b, &a).unwrap())
            .unwrap();
        assert!(max_diff(both.data(), composed.data()) <= 1e-12);
    }
}

#[test]
fn untrained_codes_keep_their_norm() {
    let m = Model::new(EncoderDecoderConfig::desk_mlp(), 12).unwrap();
    let f = m.family().clone();
    let mut r = ChaCha8Rng::seed_from_u64(13);
    let code = m.encode(&images(14, 5, &[16, 16])).unwrap();
    let y = build_block_transform(&f, &TransformParams::random(&f, &mut r))
        .unwrap()
        .apply(&code)
        .unwrap();
    for (a, b) in code.data().chunks(30).zip(y.data().chunks(30)) {
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((na - nb).abs() <= 1e-12 * na.max(1.0));
    }
}

#[test]
fn per_row_transform_matches_shared_transform() {
    let f = TransformFamily::face();
    let mut r = ChaCha8Rng::seed_from_u64(15);
    let e = images(16, 3, &[6]);
    let params: Vec<TransformParams> = (0..3)
        .map(|_| TransformParams::random(&f, &mut r))
        .collect();
    let ops: Vec<_> = params
        .iter()
        .map(|p| build_block_transform(&f, p).unwrap())
        .collect();
    let y = apply_per_row(&ops, &e).unwrap();
    for (i, op) in ops.iter().enumerate() {
        let row = Tensor::new(e.data()[i * 6..(i + 1) * 6].to_vec(), &[1, 6]).unwrap();
        assert!(
            max_diff(
                &y.data()[i * 6..(i + 1) * 6],
                op.apply(&row).unwrap().data()
            ) <= 1e-15
        );
    }
    let report = check(
        |t| Ok(lift(apply_per_row(&ops, &t[0]))?.square().sum()),
        &[e.to_vec()],
        &[vec![3, 6]],
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(report.max_relative_error() <= 1e-5);
}

#[test]
fn full_pipeline_gradient_check() {
    let model = Model::new(EncoderDecoderConfig::tiny(), 17).unwrap();
    let f = model.family().clone();
    let mut r = ChaCha8Rng::seed_from_u64(18);
    let params: Vec<TransformParams> = (0..3)
        .map(|_| TransformParams::random(&f, &mut r))
        .collect();
    let x = images(19, 3, &[8, 8]);
    let target = images(20, 3, &[8, 8]);
    let mut inputs: Vec<Vec<f64>> = model
        .params()
        .arrays
        .iter()
        .map(|a| a.data.clone())
        .collect();
    let mut shapes: Vec<Vec<usize>> = model
        .params()
        .arrays
        .iter()
        .map(|a| a.shape.clone())
        .collect();
    inputs.push(x.to_vec());
    shapes.push(vec![3, 8, 8]);
    let np = model.params().len();
    let loss = |t: &[Tensor]| -> ftl_tensor::Result<Tensor> {
        let mut m = model.clone();
        let code = lift(m.encode_with(&t[..np], &t[np], BatchNormMode::Train))?;
        let moved = lift(m.transform_rows(&code, &params))?;
        let out = lift(m.decode_with(&t[..np], &moved, BatchNormMode::Train))?;
        Ok(out.sub(&target)?.square().mean())
    };
    let report = check(loss, &inputs, &shapes, DEFAULT_STEP).unwrap();
    // Biases feeding a train-mode batch norm have an exactly zero gradient, so
    // the error is measured over the whole gradient vector.
    let analytic: Vec<f64> = report.analytic.concat();
    let numeric: Vec<f64> = report.numeric.concat();
    let err = ftl_tensor::gradcheck::relative_error(&analytic, &numeric);
    assert!(report.analytic[1].iter().all(|v| v.abs() < 1e-15));
    assert!(err <= 1e-5, "pipeline relative error {err:e}");
}

#[test]
fn head_examples() {
    let f = TransformFamily::mnist();
    assert_eq!(f.signature_len(), 10965);
    let cfg = HeadConfig {
        input_dim: f.signature_len(),
        hidden: 64,
        classes: 10,
    };
    let zero = ClassifierHead::zeroed(cfg).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let e = Tensor::new(
        (0..510).map(|_| r.gen_range(-1.0..1.0)).collect(),
        &[1, 510],
    )
    .unwrap();
    let sig = signature_rows(&invariant_signature(&f, &e).unwrap()).remove(0);
    let scores = classify_invariants(&zero, &sig).unwrap();
    assert!(scores.iter().all(|&s| s == scores[0]));
    assert!(classify_invariants(
        &zero,
        &ftl_core::transform::InvariantSignature {
            entries: vec![0.0; 5]
        }
    )
    .is_err());
}

#[test]
fn head_scores_are_invariant_to_feature_transforms() {
    let m = Model::new(EncoderDecoderConfig::desk_mlp(), 22).unwrap();
    let f = m.family().clone();
    let head = ClassifierHead::new(
        HeadConfig {
            input_dim: f.signature_len(),
            hidden: 32,
            classes: 10,
        },
        23,
    )
    .unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(24);
    let code = m.encode(&images(25, 4, &[16, 16])).unwrap();
    let base = head
        .scores(&invariant_signature(&f, &code).unwrap())
        .unwrap();
    for _ in 0..10 {
        let moved = build_block_transform(&f, &TransformParams::random(&f, &mut r))
            .unwrap()
            .apply(&code)
            .unwrap();
        let s = head
            .scores(&invariant_signature(&f, &moved).unwrap())
            .unwrap();
        assert!(max_diff(s.data(), base.data()) <= 1e-6);
    }
}

fn sample_checkpoint() -> Checkpoint {
    let model = Model::new(EncoderDecoderConfig::tiny(), 26).unwrap();
    let sizes = model.params().sizes();
    let mut ck = Checkpoint::new(model, 26);
    let mut head = ClassifierHead::new(
        HeadConfig {
            input_dim: 3,
            hidden: 4,
            classes: 2,
        },
        27,
    )
    .unwrap();
    head.fit_normalizer(&Tensor::new(vec![1.0, 2.0, 3.0, 2.0, 0.0, 5.0], &[2, 3]).unwrap())
        .unwrap();
    ck.head = Some(head);
    let mut adam = ftl_tensor::Adam::new(Default::default(), &sizes);
    adam.step_count = 3;
    adam.first_moment[0][0] = 0.25;
    ck.optimizer = Some(adam);
    ck.step = 3;
    ck
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let ck = sample_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    ck.save(&p1).unwrap();
    let back = Checkpoint::load(&p1).unwrap();
    assert_eq!(back, ck);
    back.save(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    let x = images(28, 2, &[8, 8]);
    assert_eq!(
        back.model.encode(&x).unwrap().data(),
        ck.model.encode(&x).unwrap().data()
    );
}

#[test]
fn checkpoint_with_linear_head_round_trips() {
    let mut ck = sample_checkpoint();
    let cfg = HeadConfig {
        input_dim: 3,
        hidden: 0,
        classes: 4,
    };
    let head = ClassifierHead::new(cfg, 29).unwrap();
    assert_eq!(head.params().len(), ClassifierHead::array_count(cfg));
    ck.head = Some(head);
    let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back, ck);
}

#[test]
fn checkpoint_corruption_is_reported() {
    let bytes = sample_checkpoint().to_bytes().unwrap();
    for cut in [0, 10, 30, bytes.len() - 1] {
        assert!(
            matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::Corrupt(_))
            ),
            "cut {cut}"
        );
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        Checkpoint::from_bytes(&bad),
        Err(Error::Format(_))
    ));
    let mut bad = bytes.clone();
    bad[8] = 9;
    assert!(matches!(
        Checkpoint::from_bytes(&bad),
        Err(Error::Format(_))
    ));
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0; 8]);
    assert!(matches!(
        Checkpoint::from_bytes(&extra),
        Err(Error::Corrupt(_))
    ));
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        Checkpoint::load(dir.path().join("missing")),
        Err(Error::Io { .. })
    ));
}

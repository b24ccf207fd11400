use super::*;
use crate::embedding::EmbeddingSpec;
use crate::tensor::cost;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

/// Reference value of `log ||P phi||^2` through the fully materialized
/// operator matrix. Only valid for small shapes.
pub(crate) fn dense_decision_log(model: &MpoModel, state: &ProductState) -> f64 {
    let p_dense = model.materialize_dense().unwrap();
    let phi = state.to_dense_vector();
    let cols = p_dense.shape()[1];
    assert_eq!(cols, phi.len());
    let mut norm_sq = 0.0;
    for row in p_dense.data().chunks_exact(cols) {
        let y: f64 = row.iter().zip(&phi).map(|(a, b)| a * b).sum();
        norm_sq += y * y;
    }
    norm_sq.ln()
}

pub(crate) fn dense_fnorm_log(model: &MpoModel) -> f64 {
    let p_dense = model.materialize_dense().unwrap();
    p_dense.data().iter().map(|v| v * v).sum::<f64>().ln()
}

fn identity_core_model() -> MpoModel {
    let shape = MpoShape::new(1, 2, 1, 1).unwrap();
    let core = DenseTensor::from_fn(&[1, 1, 2, 2], |idx| if idx[2] == idx[3] { 1.0 } else { 0.0 });
    MpoModel::from_cores(shape, vec![core]).unwrap()
}

fn assert_rel_close(a: f64, b: f64, rel: f64) {
    let scale = a.abs().max(b.abs()).max(1e-300);
    assert!((a - b).abs() <= rel * scale, "{a} vs {b} (rel {rel})");
}

#[test]
fn boundary_bonds_have_size_one() {
    let shape = MpoShape::new(2, 2, 1, 1).unwrap();
    assert_eq!(shape.core_shape(0), vec![1, 1, 2, 2]);
    assert_eq!(shape.core_shape(1), vec![1, 1, 2, 2]);

    let wide = MpoShape::new(5, 3, 4, 2).unwrap();
    assert_eq!(wide.core_shape(0), vec![1, 4, 3, 3]);
    assert_eq!(wide.core_shape(1), vec![4, 4, 3]);
    assert_eq!(wide.core_shape(2), vec![4, 4, 3, 3]);
    assert_eq!(wide.core_shape(4), vec![4, 1, 3, 3]);
}

#[test]
fn image_scale_shape_has_25_output_sites() {
    let shape = MpoShape::new(196, 2, 5, 8).unwrap();
    assert_eq!(shape.num_outputs(), 25);
}

#[test]
fn same_seed_gives_bitwise_identical_models() {
    let shape = MpoShape::new(6, 2, 3, 2).unwrap();
    let a = MpoModel::random(shape, 0.5, 1234);
    let b = MpoModel::random(shape, 0.5, 1234);
    for (ca, cb) in a.cores().iter().zip(b.cores()) {
        assert_eq!(ca.data(), cb.data());
    }
    let c = MpoModel::random(shape, 0.5, 1235);
    assert_ne!(a.cores()[0].data(), c.cores()[0].data());
}

#[test]
fn identity_core_scores_every_input_at_zero() {
    let model = identity_core_model();
    let spec = EmbeddingSpec::trigonometric(2).unwrap();
    for x in [-1.3, 0.0, 0.4, 1.0, 7.7] {
        let state = spec.embed_sample(&[x]).unwrap();
        let d = model.decision_log(&state).unwrap();
        assert!(!d.is_zero());
        assert!(d.log().abs() < 1e-12, "decision_log({x}) = {}", d.log());
    }
}

#[test]
fn decision_matches_dense_oracle_on_small_model() {
    let shape = MpoShape::new(3, 2, 2, 1).unwrap();
    let model = MpoModel::random(shape, 0.7, 99);
    let spec = EmbeddingSpec::trigonometric(2).unwrap();
    let state = spec.embed_sample(&[0.25, 0.66, 0.9]).unwrap();
    let fast = model.decision_log(&state).unwrap();
    assert_rel_close(fast.log(), dense_decision_log(&model, &state), 1e-10);
}

#[test]
fn scaling_cores_shifts_decision_by_2n_log_c() {
    let shape = MpoShape::new(4, 2, 2, 2).unwrap();
    let model = MpoModel::random(shape, 0.6, 5);
    let spec = EmbeddingSpec::trigonometric(2).unwrap();
    let state = spec.embed_sample(&[0.1, 0.5, 0.8, 0.3]).unwrap();
    let base = model.decision_log(&state).unwrap().log();

    let c = 1.7f64;
    let mut scaled = model.clone();
    for core in scaled.cores_mut() {
        for v in core.data_mut() {
            *v *= c;
        }
    }
    let shifted = scaled.decision_log(&state).unwrap().log();
    let expect = base + 2.0 * 4.0 * c.ln();
    assert!((shifted - expect).abs() < 1e-9, "{shifted} vs {expect}");
}

#[test]
fn fnorm_of_identity_core_is_ln_two() {
    let model = identity_core_model();
    let f = model.fnorm_log().unwrap();
    assert!(!f.is_zero());
    assert_rel_close(f.log(), 2.0f64.ln(), 1e-12);
}

#[test]
fn fnorm_matches_dense_oracle_on_small_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10 {
        let n = rng.random_range(2..=6);
        let s = rng.random_range(1..=3);
        let b = rng.random_range(1..=3);
        let shape = MpoShape::new(n, 2, b, s).unwrap();
        let model = MpoModel::random(shape, 0.8, rng.random());
        let f = model.fnorm_log().unwrap();
        assert_rel_close(f.log(), dense_fnorm_log(&model), 1e-10);
    }
}

#[test]
fn fnorm_equals_total_normality_over_binary_inputs() {
    // With the k = 1 trigonometric embedding the binary inputs embed as the
    // standard basis, so the squared F-norm is the sum of the decision
    // values over all of {0,1}^N.
    let spec = EmbeddingSpec::trigonometric(2).unwrap();
    for (n, s) in [(2, 1), (4, 2), (6, 3), (5, 2)] {
        let shape = MpoShape::new(n, 2, 3, s).unwrap();
        let model = MpoModel::random(shape, 0.6, n as u64 * 31 + s as u64);
        let logs: Vec<f64> = (0..1usize << n)
            .map(|bits| {
                let x: Vec<f64> = (0..n).map(|i| ((bits >> i) & 1) as f64).collect();
                let state = spec.embed_sample(&x).unwrap();
                model.decision_log(&state).unwrap().log()
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let f = model.fnorm_log().unwrap().log();
        assert_rel_close((f - lse).exp(), 1.0, 1e-9);
    }
}

#[test]
fn materialized_identity_core_is_identity_matrix() {
    let model = identity_core_model();
    let dense = model.materialize_dense().unwrap();
    assert_eq!(dense.shape(), &[2, 2]);
    assert_eq!(dense.data(), DenseTensor::identity(2).data());
}

#[test]
fn materialized_two_site_model_is_kronecker_structured() {
    let shape = MpoShape::new(2, 2, 1, 1).unwrap();
    let model = MpoModel::random(shape, 0.9, 77);
    let dense = model.materialize_dense().unwrap();
    assert_eq!(dense.shape(), &[4, 4]);
    let a = model.core(0);
    let b = model.core(1);
    for o0 in 0..2 {
        for o1 in 0..2 {
            for i0 in 0..2 {
                for i1 in 0..2 {
                    let expect = a.get(&[0, 0, i0, o0]) * b.get(&[0, 0, i1, o1]);
                    let got = dense.get(&[o0 * 2 + o1, i0 * 2 + i1]);
                    assert!((got - expect).abs() < 1e-15);
                }
            }
        }
    }
}

#[test]
fn materialize_guard_rejects_large_models() {
    let shape = MpoShape::new(40, 3, 2, 4).unwrap();
    let model = MpoModel::random(shape, 0.5, 1);
    assert!(matches!(
        model.materialize_dense(),
        Err(MpoError::TooLargeToMaterialize { .. })
    ));
}

#[test]
fn both_contraction_orders_agree() {
    let spec = EmbeddingSpec::trigonometric(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let n = rng.random_range(2..=9);
        let s = rng.random_range(1..=4);
        let b = rng.random_range(1..=4);
        let shape = MpoShape::new(n, 2, b, s).unwrap();
        let model = MpoModel::random(shape, 0.7, rng.random());
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let state = spec.embed_sample(&x).unwrap();
        let rtl = model.decision_log(&state).unwrap().log();
        let ltr = model.decision_log_ltr(&state).unwrap().log();
        assert_rel_close(rtl, ltr, 1e-10);
    }
}

#[test]
fn image_scale_model_stays_finite_under_default_init() {
    let shape = MpoShape::new(196, 2, 5, 8).unwrap();
    let model = MpoModel::random(shape, 0.5, 2024);
    let spec = EmbeddingSpec::trigonometric(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let x: Vec<f64> = (0..196).map(|_| rng.random_range(0.0..1.0)).collect();
        let state = spec.embed_sample(&x).unwrap();
        let d = model.decision_log(&state).unwrap();
        assert!(!d.is_zero());
        assert!(d.log().is_finite());
    }
    assert!(model.fnorm_log().unwrap().log().is_finite());
}

#[test]
fn all_zero_model_reports_zero_flags() {
    let shape = MpoShape::new(3, 2, 2, 1).unwrap();
    let cores = (0..3)
        .map(|i| DenseTensor::zeros(&shape.core_shape(i)))
        .collect();
    let model = MpoModel::from_cores(shape, cores).unwrap();
    let spec = EmbeddingSpec::trigonometric(2).unwrap();
    let state = spec.embed_sample(&[0.2, 0.4, 0.6]).unwrap();
    let d = model.decision_log(&state).unwrap();
    assert!(d.is_zero());
    assert_eq!(d.log(), f64::NEG_INFINITY);
    let f = model.fnorm_log().unwrap();
    assert!(f.is_zero());
}

#[test]
fn decision_cost_grows_linearly_in_sites() {
    let spec = EmbeddingSpec::trigonometric(2).unwrap();
    let count = |n: usize| {
        let shape = MpoShape::new(n, 2, 5, 8).unwrap();
        let model = MpoModel::random(shape, 0.5, 3);
        let x = vec![0.37; n];
        let state = spec.embed_sample(&x).unwrap();
        cost::reset();
        model.decision_log(&state).unwrap();
        cost::total()
    };
    // Large enough that the O(1) boundary sites stop influencing the ratio.
    let at_192 = count(192) as f64;
    let at_384 = count(384) as f64;
    let ratio = at_384 / at_192;
    assert!(
        (ratio - 2.0).abs() <= 0.1,
        "cost ratio {ratio} (192 sites: {at_192}, 384 sites: {at_384})"
    );
}

#[test]
fn model_file_roundtrips_bitwise() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("model.mpo");
    let shape = MpoShape::new(5, 4, 3, 2).unwrap();
    let model = MpoModel::random(shape, 0.5, 31);
    let spec = EmbeddingSpec::trigonometric(4).unwrap();
    save_model(&path, &model, &spec).unwrap();

    let (loaded, loaded_spec) = load_model(&path).unwrap();
    assert_eq!(loaded_spec, spec);
    assert_eq!(loaded.shape(), model.shape());
    for (a, b) in loaded.cores().iter().zip(model.cores()) {
        let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    // saving the loaded model reproduces the file byte for byte
    let path2 = dir.path().join("model2.mpo");
    save_model(&path2, &loaded, &loaded_spec).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn model_header_reports_fields() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("model.mpo");
    let shape = MpoShape::new(7, 2, 5, 3).unwrap();
    let model = MpoModel::random(shape, 0.5, 9);
    let spec = EmbeddingSpec::fourier(2).unwrap();
    save_model(&path, &model, &spec).unwrap();
    let header = read_model_header(&path).unwrap();
    assert_eq!(header.num_sites, 7);
    assert_eq!(header.physical_dim, 2);
    assert_eq!(header.bond_dim, 5);
    assert_eq!(header.spacing, 3);
    assert_eq!(header.embedding_kind, crate::embedding::EmbeddingKind::Fourier);
}

#[test]
fn scrambled_files_are_rejected() {
    let dir = tempdir().unwrap();
    let bad_magic = dir.path().join("bad.mpo");
    std::fs::write(&bad_magic, b"NOPExxxxxxxxxxxxxxxxxxxx").unwrap();
    assert!(matches!(
        read_model_header(&bad_magic),
        Err(ModelIoError::BadMagic { .. })
    ));

    let bad_version = dir.path().join("version.mpo");
    let mut bytes = b"MPOA".to_vec();
    bytes.extend(99u32.to_le_bytes());
    bytes.extend([0u8; 64]);
    std::fs::write(&bad_version, bytes).unwrap();
    assert!(matches!(
        read_model_header(&bad_version),
        Err(ModelIoError::UnsupportedVersion { found: 99, .. })
    ));
}

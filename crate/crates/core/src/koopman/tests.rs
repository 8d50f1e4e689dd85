use super::*;
use crate::diffcore::{init_mlp, Activation};
use crate::matfun::orthogonality_defect;

fn rotation_model(theta: f64, freq: f64) -> KoopmanModel {
    identity_model(SquareMatrix::rotation_2d(theta), freq).unwrap()
}

#[test]
fn encode_zero_initialized_is_zero() {
    let spec = MlpSpec::new(vec![3, 4, 2], Activation::SmoothRectifier);
    let mut zero = ParameterStore::new();
    zero.insert("w0", Mat::zeros(4, 3));
    zero.insert("b0", Mat::zeros(1, 4));
    zero.insert("w1", Mat::zeros(2, 4));
    zero.insert("b1", Mat::zeros(1, 2));
    let dec_spec = MlpSpec::new(vec![2, 4, 3], Activation::SmoothRectifier);
    let dec = init_mlp(&dec_spec, 3);
    let m = KoopmanModel::new(
        spec,
        zero,
        dec_spec,
        dec,
        SquareMatrix::identity(2),
        false,
        1.0,
    )
    .unwrap();
    let z = m.encode(&Mat::from_vec(1, 3, vec![1.0, -2.0, 0.5])).unwrap();
    assert_eq!(z.0.data(), &[0.0, 0.0]);
}

#[test]
fn encode_batches_rowwise() {
    let spec = MlpSpec::new(vec![2, 5, 3], Activation::SmoothRectifier);
    let enc = init_mlp(&spec, 11);
    let dec_spec = MlpSpec::new(vec![3, 5, 2], Activation::SmoothRectifier);
    let dec = init_mlp(&dec_spec, 12);
    let m = KoopmanModel::new(
        spec,
        enc,
        dec_spec,
        dec,
        SquareMatrix::identity(3),
        false,
        1.0,
    )
    .unwrap();
    let batch = Mat::from_rows(&[vec![0.1, 0.2], vec![-0.5, 0.4], vec![0.0, 1.0]]);
    let z = m.encode(&batch).unwrap();
    assert_eq!(z.n_items(), 3);
    for i in 0..3 {
        let single = m.encode(&Mat::row_vector(batch.row(i))).unwrap();
        assert_eq!(single.0.row(0), z.0.row(i));
    }
}

#[test]
fn identity_encoder_passes_through() {
    let m = rotation_model(0.0, 1.0);
    let x = Mat::from_vec(1, 2, vec![0.3, -0.9]);
    let z = m.encode(&x).unwrap();
    assert_eq!(z.0, x);
    let back = m.decode(&z).unwrap();
    assert_eq!(back, x);
}

#[test]
fn forecast_identity_k_is_constant() {
    let m = rotation_model(0.0, 1.0);
    let s = m.forecast_discrete(&[1.0, 2.0], 5).unwrap();
    for t in 0..6 {
        assert_eq!(s.row(t), &[1.0, 2.0]);
    }
}

#[test]
fn forecast_rotation_model_traces_circle() {
    let theta = 0.25;
    let m = rotation_model(theta, 1.0);
    let s = m.forecast_discrete(&[1.0, 0.0], 16).unwrap();
    for t in 0..=16 {
        let expect = [(t as f64 * theta).cos(), (t as f64 * theta).sin()];
        assert!((s.row(t)[0] - expect[0]).abs() < 1e-12);
        assert!((s.row(t)[1] - expect[1]).abs() < 1e-12);
    }
}

#[test]
fn forecast_matches_matrix_power_oracle() {
    // Latent dynamics z_{t+1} = A z_t with identity autoencoder: the
    // forecast must match direct matrix powers.
    let a = SquareMatrix::new(Mat::from_rows(&[vec![0.9, -0.2], vec![0.1, 0.95]])).unwrap();
    let m = identity_model(a.clone(), 1.0).unwrap();
    let x0 = [0.7, -0.4];
    let s = m.forecast_discrete(&x0, 20).unwrap();
    let mut pow = Mat::identity(2);
    for t in 0..=20 {
        let zt = matmul(&Mat::row_vector(&x0), &pow, false, true);
        for c in 0..2 {
            assert!((s.row(t)[c] - zt.row(0)[c]).abs() < 1e-6);
        }
        pow = a.as_mat().matmul(&pow);
    }
}

#[test]
fn continuous_agrees_with_discrete_on_integer_grid() {
    let m = rotation_model(0.3, 1.0);
    let discrete = m.forecast_discrete(&[1.0, 0.0], 10).unwrap();
    let times: Vec<f64> = (0..=10).map(|t| t as f64).collect();
    let continuous = m.forecast_continuous(&[1.0, 0.0], &times).unwrap();
    for t in 0..=10 {
        for c in 0..2 {
            assert!((discrete.row(t)[c] - continuous.row(t)[c]).abs() < 1e-8);
        }
    }
}

#[test]
fn continuous_half_step_is_half_rotation() {
    let theta = 0.5;
    let m = rotation_model(theta, 1.0);
    let s = m.forecast_continuous(&[1.0, 0.0], &[0.5]).unwrap();
    assert!((s.row(0)[0] - (theta / 2.0).cos()).abs() < 1e-12);
    assert!((s.row(0)[1] - (theta / 2.0).sin()).abs() < 1e-12);
}

#[test]
fn continuous_is_continuous_between_steps() {
    let m = rotation_model(0.8, 1.0);
    let coarse = m.forecast_discrete(&[1.0, 0.0], 4).unwrap();
    let mut max_coarse_jump = 0.0f64;
    for t in 0..4 {
        let d: f64 = coarse
            .row(t + 1)
            .iter()
            .zip(coarse.row(t))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_coarse_jump = max_coarse_jump.max(d);
    }
    let dense_times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
    let dense = m.forecast_continuous(&[1.0, 0.0], &dense_times).unwrap();
    let mut max_dense_jump = 0.0f64;
    for t in 0..40 {
        let d: f64 = dense
            .row(t + 1)
            .iter()
            .zip(dense.row(t))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_dense_jump = max_dense_jump.max(d);
    }
    assert!(max_dense_jump < max_coarse_jump);
}

#[test]
fn backward_rotation_is_forward_with_negative_angle() {
    let theta = 0.2;
    let m = rotation_model(theta, 1.0);
    let back = m.backward_predict(&[1.0, 0.0], 8).unwrap();
    // Chronological order: the last row is the end state.
    assert_eq!(back.len(), 9);
    for (j, t) in back.times().iter().enumerate() {
        assert!((t - (j as f64 - 8.0)).abs() < 1e-12);
    }
    for j in 0..9 {
        let tau = 8 - j;
        let expect = [
            (-(tau as f64) * theta).cos(),
            (-(tau as f64) * theta).sin(),
        ];
        assert!((back.row(j)[0] - expect[0]).abs() < 1e-12);
        assert!((back.row(j)[1] - expect[1]).abs() < 1e-12);
    }
}

#[test]
fn backward_identity_is_constant() {
    let m = rotation_model(0.0, 1.0);
    let back = m.backward_predict(&[0.5, -0.5], 5).unwrap();
    for t in 0..6 {
        assert_eq!(back.row(t), &[0.5, -0.5]);
    }
}

#[test]
fn forward_then_backward_roundtrips_on_linear_model() {
    let a = SquareMatrix::new(Mat::from_rows(&[vec![0.95, -0.3], vec![0.3, 0.95]])).unwrap();
    let m = identity_model(a, 1.0).unwrap();
    let x0 = [0.6, 0.1];
    let fwd = m.forecast_discrete(&x0, 30).unwrap();
    let back = m.backward_predict(fwd.row(30), 30).unwrap();
    for c in 0..2 {
        assert!((back.row(0)[c] - x0[c]).abs() < 1e-6);
    }
}

#[test]
fn retarget_same_frequency_is_identity() {
    let m = rotation_model(0.37, 10.0);
    let same = m.retarget_frequency(10.0).unwrap();
    let diff = same.k.as_mat().sub(m.k.as_mat()).frobenius_norm();
    assert!(diff < 1e-10, "diff = {diff}");
}

#[test]
fn retarget_rotation_scales_the_angle() {
    // rotation(theta) at 10 Hz retargeted to 50 Hz -> rotation(theta/5).
    let theta = 0.6;
    let m = rotation_model(theta, 10.0);
    let up = m.retarget_frequency(50.0).unwrap();
    let expect = SquareMatrix::rotation_2d(theta / 5.0);
    assert!(up.k.as_mat().sub(expect.as_mat()).frobenius_norm() < 1e-12);
    assert_eq!(up.native_frequency, 50.0);
}

#[test]
fn retarget_composition_roundtrip() {
    let m = rotation_model(0.45, 1.0);
    let back = m
        .retarget_frequency(2.0)
        .unwrap()
        .retarget_frequency(0.5)
        .unwrap()
        .retarget_frequency(1.0)
        .unwrap();
    let diff = back.k.as_mat().sub(m.k.as_mat()).frobenius_norm();
    assert!(diff < 1e-9, "diff = {diff}");
}

#[test]
fn divergence_guard_trips() {
    let k = SquareMatrix::new(Mat::from_rows(&[vec![20.0, 0.0], vec![0.0, 20.0]])).unwrap();
    let m = identity_model(k, 1.0).unwrap();
    let res = m.forecast_discrete(&[1.0, 1.0], 100);
    assert!(matches!(res, Err(KoopmanError::NonFinite)));
}

#[test]
fn singular_k_reports_ill_conditioned() {
    let k = SquareMatrix::new(Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-12]])).unwrap();
    let m = identity_model(k, 1.0).unwrap();
    assert!(matches!(
        m.backward_predict(&[1.0, 1.0], 3),
        Err(KoopmanError::IllConditioned { .. })
    ));
}

#[test]
fn latent_norm_drift_is_bounded_for_orthogonal_k() {
    // Executable form of the norm-preservation appendix argument:
    // orthogonal K keeps latent norms over many steps.
    let k = SquareMatrix::rotation_2d(2.0 * std::f64::consts::PI / 7.0);
    assert!(orthogonality_defect(&k).unwrap() <= 1e-16);
    let m = identity_model(k, 1.0).unwrap();
    let z0 = LatentState(Mat::from_vec(1, 2, vec![0.6, -0.8]));
    let norm0 = z0.0.frobenius_norm();
    let mut z = z0;
    for _ in 0..10_000 {
        z = m.step_latent(&z);
    }
    let drift = (z.0.frobenius_norm() - norm0).abs() / norm0;
    assert!(drift <= 1e-7, "drift = {drift}");
}

mod common;

use common::gradcheck::{self, TOLERANCE};

#[test]
fn layer_gradients_match_finite_differences() {
    for op in gradcheck::LAYER_OPS {
        let err = gradcheck::check_layer_op(op);
        assert!(err < TOLERANCE, "{op}: relative error {err:.3e}");
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let bce = gradcheck::check_weighted_bce();
    assert!(bce < TOLERANCE, "weighted_bce: {bce:.3e}");
    let l2 = gradcheck::check_buffer_l2();
    assert!(l2 < TOLERANCE, "buffer_l2: {l2:.3e}");
}

#[test]
fn toy_model_gradients_match_finite_differences() {
    let err = gradcheck::check_toy_model();
    assert!(err < TOLERANCE, "toy model: {err:.3e}");
}

#[test]
fn relative_error_is_scale_free() {
    assert_eq!(gradcheck::relative_error(&[0.0], &[0.0]), 0.0);
    let e = gradcheck::relative_error(&[1.0, 2.0], &[1.0, 2.001]);
    assert!((e - 0.001 / 5f64.sqrt()).abs() < 1e-6);
}

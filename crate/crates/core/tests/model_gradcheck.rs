//! Finite-difference check of the full transformer loss with respect to every
//! parameter of a one-layer model.

mod common;

use common::transformer::transformer_gradcheck;

#[test]
fn transformer_loss_gradients_f64() {
    let err = transformer_gradcheck::<f64>(1e-5, 1e-3);
    println!("f64 transformer max rel err {err:.3e}");
    assert!(err < 1e-5, "{err}");
}

#[test]
fn transformer_loss_gradients_f32() {
    let err = transformer_gradcheck::<f32>(1e-3, 1e-1);
    println!("f32 transformer max rel err {err:.3e}");
    assert!(err < 1e-2, "{err}");
}

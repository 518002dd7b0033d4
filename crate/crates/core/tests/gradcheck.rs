//! Finite-difference checks of every differentiable tensor op, in 32-bit
//! (h = 1e-3) and 64-bit (h = 1e-5) precision.

mod common;

use common::ops::cases;
use common::{gradcheck, random};
use stylemux::rng;
use stylemux::tensor::Tape;

#[test]
fn every_op_matches_finite_differences_f32() {
    for (name, inputs, build) in cases::<f32>() {
        let err = gradcheck(&inputs, 1e-3, 1e-1, build);
        println!("f32 {name:<32} max rel err {err:.3e}");
        assert!(err < 1e-2, "{name}: {err}");
    }
}

#[test]
fn every_op_matches_finite_differences_f64() {
    for (name, inputs, build) in cases::<f64>() {
        let err = gradcheck(&inputs, 1e-5, 1e-3, build);
        println!("f64 {name:<32} max rel err {err:.3e}");
        assert!(err < 1e-5, "{name}: {err}");
    }
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(random(&[4, 4], 1), true);
        let w = tape.leaf(random(&[4, 4], 2), true);
        let h = tape.matmul(x, w).unwrap();
        let h = tape.dropout(h, 0.2, true, &mut rng::seeded(5)).unwrap();
        let p = tape.softmax(h, 1).unwrap();
        let l = tape.cross_entropy(p, &[0, 1, 2, 3], None).unwrap();
        tape.backward(l).unwrap();
        (tape.grad(x).unwrap(), tape.grad(w).unwrap())
    };
    assert_eq!(run(), run());
}

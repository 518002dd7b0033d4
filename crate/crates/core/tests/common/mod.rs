//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

pub mod ops;
pub mod transformer;

use stylemux::rng;
use stylemux::tensor::{Real, Tape, Tensor, Var};
use stylemux::Result;

/// Relative error with a floor on the denominator so that gradients near zero
/// are compared on an absolute scale.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central finite-difference check of `build` with respect to every input.
///
/// Non-scalar outputs are reduced with a fixed random weighting so every
/// output element contributes a distinct coefficient. Returns the worst
/// relative error over all input elements.
pub fn gradcheck<T: Real>(
    inputs: &[Tensor<T>],
    h: f64,
    floor: f64,
    build: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
) -> f64 {
    let loss_of = |vals: &[Tensor<T>], track: bool| -> (Tape<T>, Vec<Var>, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), track)).collect();
        let out = build(&mut tape, &vars).expect("forward");
        let loss = if tape.value(out).len() == 1 {
            out
        } else {
            let mut r = rng::seeded(0xC0FFEE);
            let w = Tensor::uniform(tape.shape(out), -1.0, 1.0, &mut r);
            let w = tape.constant(w);
            let p = tape.mul(out, w).expect("weight");
            tape.sum(p)
        };
        (tape, vars, loss)
    };

    let (mut tape, vars, loss) = loss_of(inputs, true);
    tape.backward(loss).expect("backward");
    let mut worst = 0.0f64;
    for (i, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match tape.grad_data(*var) {
            Some(g) => g.iter().map(|x| x.to_f64().unwrap()).collect(),
            None => vec![0.0; inputs[i].len()],
        };
        for j in 0..inputs[i].len() {
            let x = inputs[i].data()[j];
            let (xp, xm) = (x + T::lit(h), x - T::lit(h));
            let eval = |moved: T| {
                let mut vals = inputs.to_vec();
                vals[i].data_mut()[j] = moved;
                let (t, _, l) = loss_of(&vals, false);
                t.value(l).item().to_f64().unwrap()
            };
            let step = (xp - xm).to_f64().unwrap();
            let numeric = (eval(xp) - eval(xm)) / step;
            worst = worst.max(rel_error(analytic[j], numeric, floor));
        }
    }
    worst
}

pub fn random<T: Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    Tensor::uniform(shape, -1.0, 1.0, &mut rng::seeded(seed))
}

//! Finite-difference check of a full transformer loss with respect to every
//! parameter of a one-layer, d = 4 model.

use super::rel_error;
use stylemux::corpus::{Batch, FactoredExample, LangId, StyleId};
use stylemux::model::{ModelConfig, Pass, Transformer};
use stylemux::rng;
use stylemux::tensor::{Real, Tape, Var};
use stylemux::text::{BOS, EOS};

fn example(src: &[u32], tgt: &[u32], lang: u16, style: u16) -> FactoredExample {
    FactoredExample {
        src_ids: src.to_vec(),
        factor_lang: vec![LangId(lang); src.len()],
        factor_style: vec![StyleId(style); src.len()],
        tgt_ids: std::iter::once(BOS).chain(tgt.iter().copied()).chain([EOS]).collect(),
    }
}

fn loss<T: Real>(model: &Transformer<T>, batch: &Batch) -> (Tape<T>, Var) {
    let mut tape = Tape::new();
    let (l, _) = model.forward_loss(&mut tape, batch, &mut Pass { grad: true, dropout_rng: None }).unwrap();
    (tape, l)
}

/// Worst relative error over all parameters.
pub fn transformer_gradcheck<T: Real>(h: f64, floor: f64) -> f64 {
    let cfg = ModelConfig {
        layers: 1,
        model_dim: 4,
        heads: 2,
        ffn_dim: 8,
        token_embed_dim: 4,
        factor_embed_dim: 2,
        dropout: 0.0,
        vocab_size: 9,
        max_len: 8,
        num_langs: 2,
        num_styles: 2,
    };
    let f64_model: Transformer<f64> = Transformer::new(cfg, &mut rng::seeded(11)).unwrap();
    let mut model: Transformer<T> = f64_model.cast();
    // the second example is shorter on both sides, so padding is exercised
    let data = vec![example(&[4, 5, 6], &[7, 8, 4], 0, 1), example(&[8], &[5], 1, 0)];
    let batch = Batch::from_examples(&data, vec![0, 1]).unwrap();

    let (mut tape, l) = loss(&model, &batch);
    tape.backward(l).unwrap();
    model.params_mut().zero_grads();
    model.params_mut().accumulate_grads(&tape);
    drop(tape);
    let analytic: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| match &p.grad {
            Some(g) => g.data().iter().map(|x| x.to_f64().unwrap()).collect(),
            None => vec![0.0; p.value.len()],
        })
        .collect();

    let ids: Vec<_> = model.params().ids().collect();
    let mut worst = 0.0f64;
    for (k, id) in ids.into_iter().enumerate() {
        for j in 0..model.params().value(id).len() {
            let x = model.params().value(id).data()[j];
            let mut eval = |moved: T| {
                model.params_mut().value_mut(id).data_mut()[j] = moved;
                let (t, l) = loss(&model, &batch);
                t.value(l).item().to_f64().unwrap()
            };
            let (xp, xm) = (x + T::lit(h), x - T::lit(h));
            let numeric = (eval(xp) - eval(xm)) / (xp - xm).to_f64().unwrap();
            eval(x);
            worst = worst.max(rel_error(analytic[k][j], numeric, floor));
        }
    }
    worst
}

//! Gradient-check cases for every differentiable op.

use super::random;
use stylemux::rng;
use stylemux::tensor::{Real, Tape, Tensor, Var};
use stylemux::Result;

pub type Build<T> = Box<dyn Fn(&mut Tape<T>, &[Var]) -> Result<Var>>;

pub fn cases<T: Real>() -> Vec<(&'static str, Vec<Tensor<T>>, Build<T>)> {
    vec![
        ("matmul", vec![random(&[3, 4], 1), random(&[4, 2], 2)], Box::new(|t, v| t.matmul(v[0], v[1]))),
        (
            "batch_matmul",
            vec![random(&[2, 3, 4], 3), random(&[2, 4, 5], 4)],
            Box::new(|t, v| t.batch_matmul(v[0], v[1], false)),
        ),
        (
            "batch_matmul_nt",
            vec![random(&[2, 3, 4], 5), random(&[2, 5, 4], 6)],
            Box::new(|t, v| t.batch_matmul(v[0], v[1], true)),
        ),
        ("add", vec![random(&[2, 3], 7), random(&[2, 3], 8)], Box::new(|t, v| t.add(v[0], v[1]))),
        ("add_bias", vec![random(&[4, 3], 9), random(&[3], 10)], Box::new(|t, v| t.add_bias(v[0], v[1]))),
        ("mul", vec![random(&[5], 11), random(&[5], 12)], Box::new(|t, v| t.mul(v[0], v[1]))),
        ("mul_self", vec![random(&[4], 13)], Box::new(|t, v| t.mul(v[0], v[0]))),
        ("scale", vec![random(&[3, 2], 14)], Box::new(|t, v| Ok(t.scale(v[0], T::lit(-2.5))))),
        ("relu", vec![random(&[5, 3], 15)], Box::new(|t, v| Ok(t.relu(v[0])))),
        ("softmax_last", vec![random(&[3, 5], 16)], Box::new(|t, v| t.softmax(v[0], 1))),
        ("softmax_first", vec![random(&[4, 2, 3], 17)], Box::new(|t, v| t.softmax(v[0], 0))),
        (
            "layer_norm",
            vec![random(&[3, 5], 18), random(&[5], 19), random(&[5], 20)],
            Box::new(|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)),
        ),
        ("embedding", vec![random(&[5, 3], 21)], Box::new(|t, v| t.embedding(v[0], &[4, 0, 4, 2]))),
        (
            "concat_last_dim",
            vec![random(&[2, 3], 22), random(&[2, 1], 23), random(&[2, 2], 24)],
            Box::new(|t, v| t.concat_last_dim(&[v[0], v[1], v[2]])),
        ),
        ("reshape", vec![random(&[2, 3], 25)], Box::new(|t, v| t.reshape(v[0], &[3, 2]))),
        ("split_heads", vec![random(&[4, 4], 26)], Box::new(|t, v| t.split_heads(v[0], 2, 2, 2))),
        ("merge_heads", vec![random(&[4, 2, 2], 27)], Box::new(|t, v| t.merge_heads(v[0], 2, 2, 2))),
        (
            "dropout",
            vec![random(&[5, 4], 28)],
            Box::new(|t, v| t.dropout(v[0], 0.3, true, &mut rng::seeded(99))),
        ),
        (
            "cross_entropy",
            vec![random(&[4, 5], 29)],
            Box::new(|t, v| t.cross_entropy(v[0], &[1, 0, 4, 0], Some(0))),
        ),
        ("sum", vec![random(&[3, 3], 30)], Box::new(|t, v| Ok(t.sum(v[0])))),
        ("unfold", vec![random(&[2, 5, 2], 31)], Box::new(|t, v| t.unfold(v[0], 3))),
        ("max_pool", vec![random(&[2, 4, 3], 32)], Box::new(|t, v| t.max_pool(v[0]))),
        (
            "composite_matmul_softmax_xent",
            vec![random(&[3, 4], 33), random(&[4, 5], 34), random(&[5], 35)],
            Box::new(|t, v| {
                let h = t.matmul(v[0], v[1])?;
                let h = t.add_bias(h, v[2])?;
                let p = t.softmax(h, 1)?;
                let l = t.cross_entropy(p, &[2, 0, 4], None)?;
                let r = t.relu(h);
                let s = t.sum(r);
                let s = t.scale(s, T::lit(0.1));
                let both = t.concat_last_dim(&[l, s])?;
                Ok(t.sum(both))
            }),
        ),
    ]
}

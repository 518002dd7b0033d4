use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng as _;

use super::{gemm, ParamId, ParamSet, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var },
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Relu { x: Var },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Embedding { table: Var, ids: Vec<usize> },
    Concat { parts: Vec<Var> },
    Reshape { x: Var },
    SplitHeads { x: Var, batch: usize, len: usize, heads: usize },
    MergeHeads { x: Var, batch: usize, len: usize, heads: usize },
    Dropout { x: Var, mask: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<usize>, ignore: Option<usize>, probs: Vec<T>, count: usize },
    Sum { x: Var },
    Unfold { x: Var, width: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
}

struct Node<T: Real> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records forward operations in execution order and replays them in reverse
/// to compute gradients. Nodes are appended only, so the record is always in
/// topological order.
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    bound: HashMap<ParamId, Var>,
    bound_order: Vec<(ParamId, Var)>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), bound: HashMap::new(), bound_order: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push_node(Arc::new(value), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Binds a parameter as a gradient-tracking leaf. Binding the same
    /// parameter twice returns the same variable so reuse accumulates.
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.bind(params, id, true)
    }

    /// Binds a parameter without gradient tracking (inference).
    pub fn frozen_param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.bind(params, id, false)
    }

    fn bind(&mut self, params: &ParamSet<T>, id: ParamId, requires_grad: bool) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push_node(params.shared(id), Op::Leaf, requires_grad);
        self.bound.insert(id, v);
        self.bound_order.push((id, v));
        v
    }

    pub(crate) fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound_order.iter().copied()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad_data(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.grad_data(v)
            .map(|g| Tensor::new(self.shape(v).to_vec(), g.to_vec()).expect("grad shape"))
    }

    fn push_node(&mut self, value: Arc<Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(Arc::new(value), op, requires_grad)
    }

    // ── forward ops ─────────────────────────────────────────────────────

    /// Matrix product of `[m×k]` and `[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", format!("{sa:?} · {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b }, &[a, b]))
    }

    /// Batched product: `[B×m×k] · [B×k×n]`, or `[B×m×k] · [B×n×k]ᵀ` with `trans_b`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || Error::dim("batch_matmul", format!("{sa:?} · {sb:?} (trans_b={trans_b})"));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(bad());
        }
        let mut out = vec![T::zero(); batch * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &ad[i * m * k..(i + 1) * m * k],
                false,
                &bd[i * k * n..(i + 1) * k * n],
                trans_b,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let value = Tensor::new(vec![batch, m, n], out)?;
        Ok(self.push(value, Op::BatchMatMul { a, b, trans_b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", format!("{:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| *x + *y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    /// Adds a bias vector over the last dimension.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = self.value(x).last_dim();
        if self.value(bias).len() != cols {
            return Err(Error::dim("add_bias", format!("{:?} + bias {:?}", self.shape(x), self.shape(bias))));
        }
        let b = self.value(bias).data();
        let data = self.value(x).data().chunks(cols).flat_map(|row| row.iter().zip(b).map(|(v, c)| *v + *c)).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(value, Op::AddBias { x, bias }, &[x, bias]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", format!("{:?} ⊙ {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| *x * *y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let data = self.value(x).data().iter().map(|v| *v * factor).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        self.push(value, Op::Scale { x, factor }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|v| v.max(T::zero())).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        self.push(value, Op::Relu { x }, &[x])
    }

    /// Softmax along `axis`, stabilized by subtracting the slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim("softmax", format!("axis {axis} for shape {shape:?}")));
        }
        let (outer, size, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * size * inner + i;
                let max = (0..size).map(|j| src[base + j * inner]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for j in 0..size {
                    let e = (src[base + j * inner] - max).exp();
                    out[base + j * inner] = e;
                    total += e;
                }
                for j in 0..size {
                    out[base + j * inner] /= total;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Softmax { x, axis }, &[x]))
    }

    /// Normalizes each row over the last dimension (population variance),
    /// then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (rows, n) = self.value(x).rows_cols();
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::dim(
                "layer_norm",
                format!("x {:?}, gain {:?}, bias {:?}", self.shape(x), self.shape(gain), self.shape(bias)),
            ));
        }
        let eps = T::lit(eps);
        let nf = T::from_usize(n).expect("dim");
        let (src, g, b) = (self.value(x).data(), self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![T::zero(); rows * n];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); rows * n];
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / nf;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, xhat, rstd }, &[x, gain, bias]))
    }

    /// Gathers rows of a `[V×E]` table; output is `[ids.len()×E]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(Error::dim("embedding", format!("table must be 2-D, got {shape:?}")));
        }
        if ids.is_empty() {
            return Err(Error::dim("embedding", "empty id list"));
        }
        let (vocab, dim) = (shape[0], shape[1]);
        if let Some(bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Index(format!("embedding id {bad} out of range for {vocab} rows")));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        let value = Tensor::new(vec![ids.len(), dim], out)?;
        Ok(self.push(value, Op::Embedding { table, ids: ids.to_vec() }, &[table]))
    }

    /// Concatenates along the last dimension; leading dimensions must agree.
    pub fn concat_last_dim(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::dim("concat_last_dim", "no inputs"))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::dim("concat_last_dim", format!("{:?} vs leading {lead:?}", s)));
            }
            widths.push(*s.last().expect("shape"));
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }, parts))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    /// `[B·L × H·dk]` → `[B·H × L × dk]`.
    pub fn split_heads(&mut self, x: Var, batch: usize, len: usize, heads: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).rows_cols();
        if rows != batch * len || cols % heads != 0 {
            return Err(Error::dim("split_heads", format!("{:?} into B={batch} L={len} H={heads}", self.shape(x))));
        }
        let dk = cols / heads;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for b in 0..batch {
            for l in 0..len {
                for h in 0..heads {
                    let from = (b * len + l) * cols + h * dk;
                    let to = ((b * heads + h) * len + l) * dk;
                    out[to..to + dk].copy_from_slice(&src[from..from + dk]);
                }
            }
        }
        let value = Tensor::new(vec![batch * heads, len, dk], out)?;
        Ok(self.push(value, Op::SplitHeads { x, batch, len, heads }, &[x]))
    }

    /// `[B·H × L × dk]` → `[B·L × H·dk]`.
    pub fn merge_heads(&mut self, x: Var, batch: usize, len: usize, heads: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || shape[0] != batch * heads || shape[1] != len {
            return Err(Error::dim("merge_heads", format!("{shape:?} from B={batch} L={len} H={heads}")));
        }
        let dk = shape[2];
        let cols = heads * dk;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for b in 0..batch {
            for l in 0..len {
                for h in 0..heads {
                    let to = (b * len + l) * cols + h * dk;
                    let from = ((b * heads + h) * len + l) * dk;
                    out[to..to + dk].copy_from_slice(&src[from..from + dk]);
                }
            }
        }
        let value = Tensor::new(vec![batch * len, cols], out)?;
        Ok(self.push(value, Op::MergeHeads { x, batch, len, heads }, &[x]))
    }

    /// Inverted dropout. Returns `x` itself when `train` is off or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Contract(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let mask: Vec<T> =
            (0..self.value(x).len()).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect();
        let data = self.value(x).data().iter().zip(&mask).map(|(v, m)| *v * *m).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }, &[x]))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `[N×V]` logits. Rows whose target equals `ignore` are excluded; if every
    /// row is excluded the loss is zero.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: Option<usize>) -> Result<Var> {
        let (rows, vocab) = self.value(logits).rows_cols();
        if targets.len() != rows {
            return Err(Error::dim("cross_entropy", format!("{rows} rows vs {} targets", targets.len())));
        }
        let src = self.value(logits).data();
        let mut probs = vec![T::zero(); src.len()];
        let mut total = T::zero();
        let mut count = 0usize;
        for r in 0..rows {
            let t = targets[r];
            if Some(t) == ignore {
                continue;
            }
            if t >= vocab {
                return Err(Error::Index(format!("target id {t} out of range for {vocab} classes")));
            }
            let row = &src[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (p, v) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                *p = (*v - max).exp();
                z += *p;
            }
            for p in &mut probs[r * vocab..(r + 1) * vocab] {
                *p /= z;
            }
            total += z.ln() + max - row[t];
            count += 1;
        }
        let loss = if count == 0 { T::zero() } else { total / T::from_usize(count).expect("count") };
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), ignore, probs, count };
        Ok(self.push(Tensor::scalar(loss), op, &[logits]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum { x }, &[x])
    }

    /// Sliding windows over the sequence axis: `[B×L×E]` → `[B×(L−w+1)×w·E]`.
    pub fn unfold(&mut self, x: Var, width: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || width == 0 || shape[1] < width {
            return Err(Error::dim("unfold", format!("width {width} over {shape:?}")));
        }
        let (b, l, e) = (shape[0], shape[1], shape[2]);
        let t = l - width + 1;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(b * t * width * e);
        for bi in 0..b {
            for ti in 0..t {
                let from = (bi * l + ti) * e;
                out.extend_from_slice(&src[from..from + width * e]);
            }
        }
        let value = Tensor::new(vec![b, t, width * e], out)?;
        Ok(self.push(value, Op::Unfold { x, width }, &[x]))
    }

    /// Max over the middle axis: `[B×T×F]` → `[B×F]`.
    pub fn max_pool(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(Error::dim("max_pool", format!("expected 3-D input, got {shape:?}")));
        }
        let (b, t, f) = (shape[0], shape[1], shape[2]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); b * f];
        let mut argmax = vec![0usize; b * f];
        for bi in 0..b {
            for fi in 0..f {
                let mut best = bi * t * f + fi;
                for ti in 1..t {
                    let idx = (bi * t + ti) * f + fi;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out[bi * f + fi] = src[best];
                argmax[bi * f + fi] = best;
            }
        }
        let value = Tensor::new(vec![b, f], out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Populates gradients of `loss` with respect to every gradient-tracking
    /// node recorded before it. Gradients from repeated uses add up.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        let Tape { nodes, grads, .. } = self;
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop_node(nodes, grads, node, &g);
            grads[i] = Some(g);
        }
        Ok(())
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn slot<'a, T: Real>(grads: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
}

fn backprop_node<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], node: &Node<T>, g: &[T]) {
    let val = |v: Var| nodes[v.0].value.as_ref();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
            let n = val(*b).shape()[1];
            if let Some(ga) = slot(grads, nodes, *a) {
                gemm(m, n, k, g, false, val(*b).data(), true, ga, true);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                gemm(k, m, n, val(*a).data(), true, g, false, gb, true);
            }
        }
        Op::BatchMatMul { a, b, trans_b } => {
            let (batch, m, k) = (val(*a).shape()[0], val(*a).shape()[1], val(*a).shape()[2]);
            let n = node.value.shape()[2];
            let (ad, bd) = (val(*a).data(), val(*b).data());
            if let Some(ga) = slot(grads, nodes, *a) {
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let bi = &bd[i * k * n..(i + 1) * k * n];
                    // dA = G·Bᵀ, or G·S when the stored operand is S = Bᵀ.
                    gemm(m, n, k, gi, false, bi, !*trans_b, &mut ga[i * m * k..(i + 1) * m * k], true);
                }
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &ad[i * m * k..(i + 1) * m * k];
                    let out = &mut gb[i * k * n..(i + 1) * k * n];
                    if *trans_b {
                        gemm(n, m, k, gi, true, ai, false, out, true);
                    } else {
                        gemm(k, m, n, ai, true, gi, false, out, true);
                    }
                }
            }
        }
        Op::Add { a, b } => {
            for v in [a, b] {
                if let Some(gv) = slot(grads, nodes, *v) {
                    gv.iter_mut().zip(g).for_each(|(x, y)| *x += *y);
                }
            }
        }
        Op::AddBias { x, bias } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                gx.iter_mut().zip(g).for_each(|(a, b)| *a += *b);
            }
            if let Some(gb) = slot(grads, nodes, *bias) {
                let cols = gb.len();
                for row in g.chunks(cols) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
                }
            }
        }
        Op::Mul { a, b } => {
            if let Some(ga) = slot(grads, nodes, *a) {
                ga.iter_mut().zip(g).zip(val(*b).data()).for_each(|((d, gg), bv)| *d += *gg * *bv);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                gb.iter_mut().zip(g).zip(val(*a).data()).for_each(|((d, gg), av)| *d += *gg * *av);
            }
        }
        Op::Scale { x, factor } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                gx.iter_mut().zip(g).for_each(|(d, gg)| *d += *gg * *factor);
            }
        }
        Op::Relu { x } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                for ((d, gg), xv) in gx.iter_mut().zip(g).zip(val(*x).data()) {
                    if *xv > T::zero() {
                        *d += *gg;
                    }
                }
            }
        }
        Op::Softmax { x, axis } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let y = node.value.data();
                let (outer, size, inner) = axis_split(node.value.shape(), *axis);
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * size * inner + i;
                        let dot: T = (0..size).map(|j| g[base + j * inner] * y[base + j * inner]).sum();
                        for j in 0..size {
                            let idx = base + j * inner;
                            gx[idx] += y[idx] * (g[idx] - dot);
                        }
                    }
                }
            }
        }
        Op::LayerNorm { x, gain, bias, xhat, rstd } => {
            let n = node.value.last_dim();
            let rows = rstd.len();
            if let Some(gg) = slot(grads, nodes, *gain) {
                for r in 0..rows {
                    for j in 0..n {
                        gg[j] += g[r * n + j] * xhat[r * n + j];
                    }
                }
            }
            if let Some(gb) = slot(grads, nodes, *bias) {
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
                }
            }
            if let Some(gx) = slot(grads, nodes, *x) {
                let gain_v = val(*gain).data();
                let nf = T::from_usize(n).expect("dim");
                let mut dxhat = vec![T::zero(); n];
                for r in 0..rows {
                    let mut s1 = T::zero();
                    let mut s2 = T::zero();
                    for j in 0..n {
                        let d = g[r * n + j] * gain_v[j];
                        dxhat[j] = d;
                        s1 += d;
                        s2 += d * xhat[r * n + j];
                    }
                    let scale = rstd[r] / nf;
                    for j in 0..n {
                        gx[r * n + j] += scale * (nf * dxhat[j] - s1 - xhat[r * n + j] * s2);
                    }
                }
            }
        }
        Op::Embedding { table, ids } => {
            if let Some(gt) = slot(grads, nodes, *table) {
                let dim = val(*table).shape()[1];
                for (row, &id) in ids.iter().enumerate() {
                    let dst = &mut gt[id * dim..(id + 1) * dim];
                    dst.iter_mut().zip(&g[row * dim..(row + 1) * dim]).for_each(|(a, b)| *a += *b);
                }
            }
        }
        Op::Concat { parts } => {
            let total = node.value.last_dim();
            let rows = node.value.len() / total;
            let mut offset = 0;
            for p in parts {
                let w = val(*p).last_dim();
                if let Some(gp) = slot(grads, nodes, *p) {
                    for r in 0..rows {
                        let src = &g[r * total + offset..r * total + offset + w];
                        gp[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(a, b)| *a += *b);
                    }
                }
                offset += w;
            }
        }
        Op::Reshape { x } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                gx.iter_mut().zip(g).for_each(|(a, b)| *a += *b);
            }
        }
        Op::SplitHeads { x, batch, len, heads } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let cols = val(*x).last_dim();
                let dk = cols / heads;
                for b in 0..*batch {
                    for l in 0..*len {
                        for h in 0..*heads {
                            let xi = (b * len + l) * cols + h * dk;
                            let yi = ((b * heads + h) * len + l) * dk;
                            gx[xi..xi + dk].iter_mut().zip(&g[yi..yi + dk]).for_each(|(a, c)| *a += *c);
                        }
                    }
                }
            }
        }
        Op::MergeHeads { x, batch, len, heads } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let dk = val(*x).shape()[2];
                let cols = heads * dk;
                for b in 0..*batch {
                    for l in 0..*len {
                        for h in 0..*heads {
                            let yi = (b * len + l) * cols + h * dk;
                            let xi = ((b * heads + h) * len + l) * dk;
                            gx[xi..xi + dk].iter_mut().zip(&g[yi..yi + dk]).for_each(|(a, c)| *a += *c);
                        }
                    }
                }
            }
        }
        Op::Dropout { x, mask } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                gx.iter_mut().zip(g).zip(mask).for_each(|((d, gg), m)| *d += *gg * *m);
            }
        }
        Op::CrossEntropy { logits, targets, ignore, probs, count } => {
            if *count == 0 {
                return;
            }
            if let Some(gl) = slot(grads, nodes, *logits) {
                let vocab = val(*logits).last_dim();
                let scale = g[0] / T::from_usize(*count).expect("count");
                for (r, &t) in targets.iter().enumerate() {
                    if Some(t) == *ignore {
                        continue;
                    }
                    let row = &mut gl[r * vocab..(r + 1) * vocab];
                    for (d, p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                        *d += *p * scale;
                    }
                    row[t] -= scale;
                }
            }
        }
        Op::Sum { x } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Unfold { x, width } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let s = val(*x).shape();
                let (b, l, e) = (s[0], s[1], s[2]);
                let t = l - width + 1;
                let span = width * e;
                for bi in 0..b {
                    for ti in 0..t {
                        let from = (bi * t + ti) * span;
                        let to = (bi * l + ti) * e;
                        gx[to..to + span].iter_mut().zip(&g[from..from + span]).for_each(|(a, c)| *a += *c);
                    }
                }
            }
        }
        Op::MaxPool { x, argmax } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                for (gg, &idx) in g.iter().zip(argmax) {
                    gx[idx] += *gg;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_small_cases() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.constant(t(&[2, 1], &[5., 6.]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[17., 39.]);

        let id = tape.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let x = tape.constant(t(&[2, 3], &[1., -2., 3., 0.5, 5., -6.]));
        let y = tape.matmul(id, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));

        let p = tape.constant(t(&[1, 1], &[2.]));
        let q = tape.constant(t(&[1, 1], &[3.]));
        let r = tape.matmul(p, q).unwrap();
        assert_eq!(tape.value(r).data(), &[6.]);

        assert!(matches!(tape.matmul(a, x).and_then(|_| tape.matmul(x, a)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn softmax_cases() {
        let mut tape = Tape::<f32>::new();
        let z = tape.constant(Tensor::from_f64(&[3], &[0., 0., 0.]).unwrap());
        let s = tape.softmax(z, 0).unwrap();
        for v in tape.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        let big = tape.constant(Tensor::from_f64(&[2], &[1000., 0.]).unwrap());
        let s = tape.softmax(big, 0).unwrap();
        assert!((tape.value(s).data()[0] - 1.0).abs() < 1e-6);
        assert!(tape.value(s).data()[1].abs() < 1e-6);

        // Oracle: exp(k) / (e + e² + e³).
        let denom: f64 = (1..=3).map(|k| (k as f64).exp()).sum();
        let expected: Vec<f64> = (1..=3).map(|k| (k as f64).exp() / denom).collect();
        let x = tape.constant(Tensor::from_f64(&[3], &[1., 2., 3.]).unwrap());
        let s = tape.softmax(x, 0).unwrap();
        for (v, e) in tape.value(s).data().iter().zip(&expected) {
            assert!((*v as f64 - e).abs() < 1e-6);
        }
        assert!((expected[0] - 0.09003).abs() < 1e-5 && (expected[2] - 0.66524).abs() < 1e-5);
        assert!(tape.softmax(x, 1).is_err());
    }

    #[test]
    fn softmax_over_first_axis() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 2], &[0., 1., 0., 1.]));
        let s = tape.softmax(x, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn layer_norm_cases() {
        let mut tape = Tape::<f64>::new();
        let ones = tape.constant(t(&[2], &[1., 1.]));
        let zeros = tape.constant(t(&[2], &[0., 0.]));
        let x = tape.constant(t(&[1, 2], &[1., 3.]));
        let y = tape.layer_norm(x, ones, zeros, 0.0).unwrap();
        assert_eq!(tape.value(y).data(), &[-1., 1.]);

        let c = tape.constant(t(&[1, 2], &[4., 4.]));
        let y = tape.layer_norm(c, ones, zeros, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0., 0.]);

        let bias = tape.constant(t(&[2], &[0.25, -2.]));
        let y = tape.layer_norm(x, zeros, bias, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.25, -2.]);
    }

    #[test]
    fn elementwise_and_loss_cases() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2], &[-1., 2.]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0., 2.]);

        let v = 7;
        let logits = tape.constant(Tensor::zeros(&[3, v]));
        let ce = tape.cross_entropy(logits, &[0, 3, 6], None).unwrap();
        assert!((tape.value(ce).item() - (v as f64).ln()).abs() < 1e-12);
        assert!(matches!(tape.cross_entropy(logits, &[0, 3, 7], None), Err(Error::Index(_))));

        let mut rng = crate::rng::seeded(1);
        let d = tape.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(d, x);
        let d = tape.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(d, x);
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());

        let table = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        assert!(matches!(tape.embedding(table, &[2]), Err(Error::Index(_))));
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(&[1000], 1.0));
        let mut rng = crate::rng::seeded(3);
        let d = tape.dropout(x, 0.25, true, &mut rng).unwrap();
        let vals = tape.value(d).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        let kept = vals.iter().filter(|&&v| v != 0.0).count();
        assert!((650..850).contains(&kept), "kept {kept}");
    }

    #[test]
    fn backward_simple_cases() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[3], &[0.5, -1., 2.]), true);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad_data(x).unwrap(), &[1., 1., 1.]);

        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1., 2.]), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad_data(x).unwrap(), &[2., 4.]);
        assert!(matches!(tape.backward(sq), Err(Error::Contract(_))));

        let mut empty = Tape::<f64>::new();
        assert!(matches!(empty.backward(Var(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn heads_round_trip() {
        let mut tape = Tape::<f64>::new();
        let vals: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let x = tape.constant(t(&[6, 4], &vals));
        let h = tape.split_heads(x, 2, 3, 2).unwrap();
        assert_eq!(tape.shape(h), &[4, 3, 2]);
        // batch 0, head 1, position 0 holds columns 2..4 of row 0
        assert_eq!(&tape.value(h).data()[6..8], &[2., 3.]);
        let m = tape.merge_heads(h, 2, 3, 2).unwrap();
        assert_eq!(tape.value(m), tape.value(x));
    }

    #[test]
    fn unfold_and_pool() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 3, 2], &[1., 2., 3., 4., 5., 6.]));
        let u = tape.unfold(x, 2).unwrap();
        assert_eq!(tape.shape(u), &[1, 2, 4]);
        assert_eq!(tape.value(u).data(), &[1., 2., 3., 4., 3., 4., 5., 6.]);
        let p = tape.max_pool(x).unwrap();
        assert_eq!(tape.value(p).data(), &[5., 6.]);
        assert!(tape.unfold(x, 4).is_err());
    }
}

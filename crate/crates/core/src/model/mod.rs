//! Factored transformer encoder–decoder.
//!
//! Each source position concatenates a token embedding with language and
//! style factor embeddings and projects the result to the model width.
//! Post-norm residual blocks, sinusoidal positions, untied output layer.

mod beam;
pub mod checkpoint;

use std::path::Path;

pub use beam::{beam_search, greedy_search, Hypothesis, StepScorer};

use crate::corpus::{Batch, LangId, StyleId};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamId, ParamSet, Real, Tape, Tensor, Var};
use crate::text::{BOS, EOS, PAD};

const INIT_RANGE: f64 = 0.08;
const LN_EPS: f64 = 1e-6;
const MASKED: f64 = -1e9;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub token_embed_dim: usize,
    pub factor_embed_dim: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub max_len: usize,
    pub num_langs: usize,
    pub num_styles: usize,
}

impl ModelConfig {
    /// Small defaults; `ffn_dim` is 4·d and token embeddings have width d.
    pub fn small(vocab_size: usize, num_langs: usize, num_styles: usize) -> Self {
        ModelConfig {
            layers: 2,
            model_dim: 64,
            heads: 4,
            ffn_dim: 256,
            token_embed_dim: 64,
            factor_embed_dim: 4,
            dropout: 0.1,
            vocab_size,
            max_len: 128,
            num_langs,
            num_styles,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("layers", self.layers),
            ("model_dim", self.model_dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("token_embed_dim", self.token_embed_dim),
            ("factor_embed_dim", self.factor_embed_dim),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
            ("num_langs", self.num_langs),
            ("num_styles", self.num_styles),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!("model_dim {} is not divisible by heads {}", self.model_dim, self.heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.vocab_size <= EOS as usize {
            return Err(Error::Config("vocab_size must cover the reserved ids".into()));
        }
        Ok(())
    }

    pub fn to_lines(&self) -> Vec<(String, String)> {
        [
            ("layers", self.layers.to_string()),
            ("model_dim", self.model_dim.to_string()),
            ("heads", self.heads.to_string()),
            ("ffn_dim", self.ffn_dim.to_string()),
            ("token_embed_dim", self.token_embed_dim.to_string()),
            ("factor_embed_dim", self.factor_embed_dim.to_string()),
            ("dropout", self.dropout.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("max_len", self.max_len.to_string()),
            ("num_langs", self.num_langs.to_string()),
            ("num_styles", self.num_styles.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_lines(lines: &[(String, String)]) -> Result<Self> {
        use checkpoint::config_parse as p;
        let cfg = ModelConfig {
            layers: p(lines, "layers")?,
            model_dim: p(lines, "model_dim")?,
            heads: p(lines, "heads")?,
            ffn_dim: p(lines, "ffn_dim")?,
            token_embed_dim: p(lines, "token_embed_dim")?,
            factor_embed_dim: p(lines, "factor_embed_dim")?,
            dropout: p(lines, "dropout")?,
            vocab_size: p(lines, "vocab_size")?,
            max_len: p(lines, "max_len")?,
            num_langs: p(lines, "num_langs")?,
            num_styles: p(lines, "num_styles")?,
        };
        cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy)]
enum Init {
    Uniform,
    Zeros,
    Ones,
}

fn param_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (d, f, e, fe, v) = (cfg.model_dim, cfg.ffn_dim, cfg.token_embed_dim, cfg.factor_embed_dim, cfg.vocab_size);
    let mut out: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));
    add("src_embed".into(), vec![v, e], Init::Uniform);
    add("lang_embed".into(), vec![cfg.num_langs, fe], Init::Uniform);
    add("style_embed".into(), vec![cfg.num_styles, fe], Init::Uniform);
    add("input_proj.w".into(), vec![e + 2 * fe, d], Init::Uniform);
    add("input_proj.b".into(), vec![d], Init::Zeros);
    add("tgt_embed".into(), vec![v, e], Init::Uniform);
    if e != d {
        add("tgt_proj.w".into(), vec![e, d], Init::Uniform);
    }
    let attn = |add: &mut dyn FnMut(String, Vec<usize>, Init), p: &str| {
        for m in ["q", "k", "v", "o"] {
            add(format!("{p}.{m}.w"), vec![d, d], Init::Uniform);
            add(format!("{p}.{m}.b"), vec![d], Init::Zeros);
        }
    };
    let norm = |add: &mut dyn FnMut(String, Vec<usize>, Init), p: &str| {
        add(format!("{p}.g"), vec![d], Init::Ones);
        add(format!("{p}.b"), vec![d], Init::Zeros);
    };
    let ffn = |add: &mut dyn FnMut(String, Vec<usize>, Init), p: &str| {
        add(format!("{p}.1.w"), vec![d, f], Init::Uniform);
        add(format!("{p}.1.b"), vec![f], Init::Zeros);
        add(format!("{p}.2.w"), vec![f, d], Init::Uniform);
        add(format!("{p}.2.b"), vec![d], Init::Zeros);
    };
    for i in 0..cfg.layers {
        attn(&mut add, &format!("enc.{i}.self"));
        norm(&mut add, &format!("enc.{i}.ln1"));
        ffn(&mut add, &format!("enc.{i}.ffn"));
        norm(&mut add, &format!("enc.{i}.ln2"));
    }
    for i in 0..cfg.layers {
        attn(&mut add, &format!("dec.{i}.self"));
        norm(&mut add, &format!("dec.{i}.ln1"));
        attn(&mut add, &format!("dec.{i}.cross"));
        norm(&mut add, &format!("dec.{i}.ln2"));
        ffn(&mut add, &format!("dec.{i}.ffn"));
        norm(&mut add, &format!("dec.{i}.ln3"));
    }
    add("out.w".into(), vec![d, v], Init::Uniform);
    add("out.b".into(), vec![v], Init::Zeros);
    out
}

#[derive(Clone, Debug)]
struct AttnIds {
    q: (ParamId, ParamId),
    k: (ParamId, ParamId),
    v: (ParamId, ParamId),
    o: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
struct EncLayer {
    attn: AttnIds,
    ln1: (ParamId, ParamId),
    ffn: [(ParamId, ParamId); 2],
    ln2: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
struct DecLayer {
    self_attn: AttnIds,
    ln1: (ParamId, ParamId),
    cross: AttnIds,
    ln2: (ParamId, ParamId),
    ffn: [(ParamId, ParamId); 2],
    ln3: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
struct Ids {
    src_embed: ParamId,
    lang_embed: ParamId,
    style_embed: ParamId,
    input_proj: (ParamId, ParamId),
    tgt_embed: ParamId,
    tgt_proj: Option<ParamId>,
    enc: Vec<EncLayer>,
    dec: Vec<DecLayer>,
    out: (ParamId, ParamId),
}

impl Ids {
    fn resolve<T: Real>(cfg: &ModelConfig, params: &ParamSet<T>) -> Result<Self> {
        for (name, shape, _) in param_layout(cfg) {
            let id = params.id(&name).ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
            if params.value(id).shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    params.value(id).shape()
                )));
            }
        }
        if params.len() != param_layout(cfg).len() {
            return Err(Error::Format("unexpected extra parameters".into()));
        }
        let id = |n: &str| params.id(n).expect("checked above");
        let pair = |p: &str, a: &str, b: &str| (id(&format!("{p}.{a}")), id(&format!("{p}.{b}")));
        let wb = |p: &str| pair(p, "w", "b");
        let gb = |p: &str| pair(p, "g", "b");
        let attn = |p: &str| AttnIds {
            q: wb(&format!("{p}.q")),
            k: wb(&format!("{p}.k")),
            v: wb(&format!("{p}.v")),
            o: wb(&format!("{p}.o")),
        };
        let ffn = |p: &str| [wb(&format!("{p}.1")), wb(&format!("{p}.2"))];
        Ok(Ids {
            src_embed: id("src_embed"),
            lang_embed: id("lang_embed"),
            style_embed: id("style_embed"),
            input_proj: wb("input_proj"),
            tgt_embed: id("tgt_embed"),
            tgt_proj: params.id("tgt_proj.w"),
            enc: (0..cfg.layers)
                .map(|i| EncLayer {
                    attn: attn(&format!("enc.{i}.self")),
                    ln1: gb(&format!("enc.{i}.ln1")),
                    ffn: ffn(&format!("enc.{i}.ffn")),
                    ln2: gb(&format!("enc.{i}.ln2")),
                })
                .collect(),
            dec: (0..cfg.layers)
                .map(|i| DecLayer {
                    self_attn: attn(&format!("dec.{i}.self")),
                    ln1: gb(&format!("dec.{i}.ln1")),
                    cross: attn(&format!("dec.{i}.cross")),
                    ln2: gb(&format!("dec.{i}.ln2")),
                    ffn: ffn(&format!("dec.{i}.ffn")),
                    ln3: gb(&format!("dec.{i}.ln3")),
                })
                .collect(),
            out: wb("out"),
        })
    }
}

/// Sinusoidal position table, `[len × d]`.
pub fn positional_encoding<T: Real>(len: usize, d: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            data.push(T::lit(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![len, d], data).expect("shape")
}

/// Additive attention mask `[B·H × Lq × Lk]`: masked entries get a large
/// negative value.
fn attention_mask<T: Real>(batch: usize, heads: usize, lq: usize, lk: usize, key_valid: Option<&[bool]>, causal: bool) -> Tensor<T> {
    let neg = T::lit(MASKED);
    let mut data = vec![T::zero(); batch * heads * lq * lk];
    for b in 0..batch {
        for h in 0..heads {
            for q in 0..lq {
                for k in 0..lk {
                    let invalid = key_valid.is_some_and(|v| !v[b * lk + k]) || (causal && k > q);
                    if invalid {
                        data[((b * heads + h) * lq + q) * lk + k] = neg;
                    }
                }
            }
        }
    }
    Tensor::new(vec![batch * heads, lq, lk], data).expect("shape")
}

/// Gradient tracking and dropout for one forward pass.
pub struct Pass<'a> {
    pub grad: bool,
    pub dropout_rng: Option<&'a mut Rng>,
}

impl Pass<'_> {
    pub fn inference() -> Pass<'static> {
        Pass { grad: false, dropout_rng: None }
    }
}

/// Source side of one sentence after the encoder.
#[derive(Clone, Debug)]
pub struct EncodedSource<T: Real = f32> {
    pub memory: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Transformer<T: Real = f32> {
    cfg: ModelConfig,
    params: ParamSet<T>,
    ids: Ids,
}

impl<T: Real> Transformer<T> {
    /// Fresh parameters: uniform(−0.08, 0.08) weights, zero biases, unit
    /// layer-norm gains.
    pub fn new(cfg: ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        for (name, shape, init) in param_layout(&cfg) {
            let t = match init {
                Init::Uniform => Tensor::uniform(&shape, -INIT_RANGE, INIT_RANGE, rng),
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::full(&shape, T::one()),
            };
            params.add(name, t)?;
        }
        Self::from_params(cfg, params)
    }

    pub fn from_params(cfg: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        cfg.validate()?;
        let ids = Ids::resolve(&cfg, &params)?;
        Ok(Transformer { cfg, params, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Transformer<U> {
        Transformer { cfg: self.cfg.clone(), params: self.params.cast(), ids: self.ids.clone() }
    }

    fn ids(&self) -> &Ids {
        &self.ids
    }

    fn p(&self, tape: &mut Tape<T>, id: ParamId, pass: &Pass) -> Var {
        if pass.grad {
            tape.param(&self.params, id)
        } else {
            tape.frozen_param(&self.params, id)
        }
    }

    fn linear(&self, tape: &mut Tape<T>, x: Var, wb: (ParamId, ParamId), pass: &Pass) -> Result<Var> {
        let w = self.p(tape, wb.0, pass);
        let b = self.p(tape, wb.1, pass);
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    }

    fn dropout(&self, tape: &mut Tape<T>, x: Var, pass: &mut Pass) -> Result<Var> {
        match pass.dropout_rng.as_deref_mut() {
            Some(rng) => tape.dropout(x, self.cfg.dropout, true, rng),
            None => Ok(x),
        }
    }

    fn add_norm(&self, tape: &mut Tape<T>, x: Var, sub: Var, ln: (ParamId, ParamId), pass: &mut Pass) -> Result<Var> {
        let sub = self.dropout(tape, sub, pass)?;
        let sum = tape.add(x, sub)?;
        let g = self.p(tape, ln.0, pass);
        let b = self.p(tape, ln.1, pass);
        tape.layer_norm(sum, g, b, LN_EPS)
    }

    #[allow(clippy::too_many_arguments)]
    fn attention(
        &self,
        tape: &mut Tape<T>,
        ids: &AttnIds,
        q_in: Var,
        kv_in: Var,
        batch: usize,
        lq: usize,
        lk: usize,
        mask: Option<Tensor<T>>,
        pass: &Pass,
    ) -> Result<Var> {
        let h = self.cfg.heads;
        let dk = self.cfg.model_dim / h;
        let q = self.linear(tape, q_in, ids.q, pass)?;
        let k = self.linear(tape, kv_in, ids.k, pass)?;
        let v = self.linear(tape, kv_in, ids.v, pass)?;
        let qh = tape.split_heads(q, batch, lq, h)?;
        let kh = tape.split_heads(k, batch, lk, h)?;
        let vh = tape.split_heads(v, batch, lk, h)?;
        let scores = tape.batch_matmul(qh, kh, true)?;
        let mut scores = tape.scale(scores, T::lit(1.0 / (dk as f64).sqrt()));
        if let Some(m) = mask {
            let m = tape.constant(m);
            scores = tape.add(scores, m)?;
        }
        let weights = tape.softmax(scores, 2)?;
        let ctx = tape.batch_matmul(weights, vh, false)?;
        let merged = tape.merge_heads(ctx, batch, lq, h)?;
        self.linear(tape, merged, ids.o, pass)
    }

    fn ffn(&self, tape: &mut Tape<T>, x: Var, ids: &[(ParamId, ParamId); 2], pass: &Pass) -> Result<Var> {
        let hdn = self.linear(tape, x, ids[0], pass)?;
        let hdn = tape.relu(hdn);
        self.linear(tape, hdn, ids[1], pass)
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len > self.cfg.max_len {
            return Err(Error::Length(format!("{what} length {len} exceeds max_len {}", self.cfg.max_len)));
        }
        Ok(())
    }

    fn with_positions(&self, tape: &mut Tape<T>, x: Var, batch: usize, len: usize) -> Result<Var> {
        let d = self.cfg.model_dim;
        let x = tape.scale(x, T::lit((d as f64).sqrt()));
        let pe = positional_encoding::<T>(len, d);
        let mut data = Vec::with_capacity(batch * len * d);
        for _ in 0..batch {
            data.extend_from_slice(pe.data());
        }
        let pe = tape.constant(Tensor::new(vec![batch * len, d], data)?);
        tape.add(x, pe)
    }

    /// Embeds a `[B × L]` id matrix with per-position factors; `[B·L × d]`.
    pub fn embed_source_batch(
        &self,
        tape: &mut Tape<T>,
        src: &[u32],
        lang: &[usize],
        style: &[usize],
        batch: usize,
        len: usize,
        pass: &Pass,
    ) -> Result<Var> {
        if src.len() != batch * len || lang.len() != src.len() || style.len() != src.len() {
            return Err(Error::Length(format!(
                "source {} ids, {} language factors, {} style factors for {batch}×{len}",
                src.len(),
                lang.len(),
                style.len()
            )));
        }
        self.check_len(len, "source")?;
        let ids = self.ids();
        let tok_ids: Vec<usize> = src.iter().map(|&t| t as usize).collect();
        let (te, le, se) = (self.p(tape, ids.src_embed, pass), self.p(tape, ids.lang_embed, pass), self.p(tape, ids.style_embed, pass));
        let tok = tape.embedding(te, &tok_ids)?;
        let lf = tape.embedding(le, lang)?;
        let sf = tape.embedding(se, style)?;
        let cat = tape.concat_last_dim(&[tok, lf, sf])?;
        let proj = self.linear(tape, cat, ids.input_proj, pass)?;
        self.with_positions(tape, proj, batch, len)
    }

    /// Encoder stack over embedded `[B·L × d]` input.
    pub fn encode_batch(&self, tape: &mut Tape<T>, x: Var, src_valid: &[bool], batch: usize, len: usize, pass: &mut Pass) -> Result<Var> {
        let mut x = self.dropout(tape, x, pass)?;
        for layer in &self.ids().enc {
            let mask = attention_mask(batch, self.cfg.heads, len, len, Some(src_valid), false);
            let a = self.attention(tape, &layer.attn, x, x, batch, len, len, Some(mask), pass)?;
            x = self.add_norm(tape, x, a, layer.ln1, pass)?;
            let f = self.ffn(tape, x, &layer.ffn, pass)?;
            x = self.add_norm(tape, x, f, layer.ln2, pass)?;
        }
        Ok(x)
    }

    /// Decoder stack for `[B × Lt]` input ids; returns logits `[B·Lt × V]`.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_batch(
        &self,
        tape: &mut Tape<T>,
        memory: Var,
        src_valid: &[bool],
        tgt_in: &[u32],
        batch: usize,
        src_len: usize,
        tgt_len: usize,
        pass: &mut Pass,
    ) -> Result<Var> {
        self.check_len(tgt_len, "target prefix")?;
        let ids = self.ids();
        let tok_ids: Vec<usize> = tgt_in.iter().map(|&t| t as usize).collect();
        let table = self.p(tape, ids.tgt_embed, pass);
        let mut y = tape.embedding(table, &tok_ids)?;
        if let Some(proj) = ids.tgt_proj {
            let w = self.p(tape, proj, pass);
            y = tape.matmul(y, w)?;
        }
        let y = self.with_positions(tape, y, batch, tgt_len)?;
        let mut y = self.dropout(tape, y, pass)?;
        for layer in &ids.dec {
            let causal = attention_mask(batch, self.cfg.heads, tgt_len, tgt_len, None, true);
            let a = self.attention(tape, &layer.self_attn, y, y, batch, tgt_len, tgt_len, Some(causal), pass)?;
            y = self.add_norm(tape, y, a, layer.ln1, pass)?;
            let cross = attention_mask(batch, self.cfg.heads, tgt_len, src_len, Some(src_valid), false);
            let c = self.attention(tape, &layer.cross, y, memory, batch, tgt_len, src_len, Some(cross), pass)?;
            y = self.add_norm(tape, y, c, layer.ln2, pass)?;
            let f = self.ffn(tape, y, &layer.ffn, pass)?;
            y = self.add_norm(tape, y, f, layer.ln3, pass)?;
        }
        self.linear(tape, y, ids.out, pass)
    }

    /// Teacher-forced mean cross-entropy over non-PAD target positions,
    /// with the number of such positions.
    pub fn forward_loss(&self, tape: &mut Tape<T>, batch: &Batch, pass: &mut Pass) -> Result<(Var, usize)> {
        let (b, ls, lt) = (batch.size(), batch.src_len, batch.tgt_len);
        if lt < 2 {
            return Err(Error::Length("target rows need BOS plus at least one token".into()));
        }
        let src_valid: Vec<bool> = batch.src.iter().map(|&t| t != PAD).collect();
        let emb = self.embed_source_batch(tape, &batch.src, &batch.lang, &batch.style, b, ls, pass)?;
        let memory = self.encode_batch(tape, emb, &src_valid, b, ls, pass)?;
        let mut tgt_in = Vec::with_capacity(b * (lt - 1));
        let mut targets = Vec::with_capacity(b * (lt - 1));
        for row in batch.tgt.chunks(lt) {
            tgt_in.extend_from_slice(&row[..lt - 1]);
            targets.extend(row[1..].iter().map(|&t| t as usize));
        }
        let logits = self.decode_batch(tape, memory, &src_valid, &tgt_in, b, ls, lt - 1, pass)?;
        let count = targets.iter().filter(|&&t| t != PAD as usize).count();
        let loss = tape.cross_entropy(logits, &targets, Some(PAD as usize))?;
        Ok((loss, count))
    }

    /// Embedded single source sentence, `[len × d]`.
    pub fn embed_source(&self, src: &[u32], lang: &[usize], style: &[usize]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let v = self.embed_source_batch(&mut tape, src, lang, style, 1, src.len(), &Pass::inference())?;
        Ok(tape.value(v).clone())
    }

    /// Encodes one source sentence whose every position carries the target
    /// language and style factors.
    pub fn encode(&self, src: &[u32], lang: LangId, style: StyleId) -> Result<EncodedSource<T>> {
        if src.is_empty() {
            return Err(Error::Length("empty source".into()));
        }
        let n = src.len();
        let mut tape = Tape::new();
        let mut pass = Pass::inference();
        let emb = self.embed_source_batch(&mut tape, src, &vec![lang.index(); n], &vec![style.index(); n], 1, n, &pass)?;
        let mem = self.encode_batch(&mut tape, emb, &vec![true; n], 1, n, &mut pass)?;
        Ok(EncodedSource { memory: tape.value(mem).clone() })
    }

    /// Next-token logits for each of several equal-length prefixes.
    pub fn decode_step(&self, enc: &EncodedSource<T>, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<T>>> {
        let k = prefixes.len();
        let t = prefixes.first().map_or(0, Vec::len);
        if k == 0 || t == 0 || prefixes.iter().any(|p| p.len() != t) {
            return Err(Error::Length("decode_step needs non-empty prefixes of equal length".into()));
        }
        let (ls, d) = enc.memory.rows_cols();
        let mut mem = Vec::with_capacity(k * ls * d);
        for _ in 0..k {
            mem.extend_from_slice(enc.memory.data());
        }
        let mut tape = Tape::new();
        let memory = tape.constant(Tensor::new(vec![k * ls, d], mem)?);
        let tgt: Vec<u32> = prefixes.iter().flatten().copied().collect();
        let logits = self.decode_batch(&mut tape, memory, &vec![true; k * ls], &tgt, k, ls, t, &mut Pass::inference())?;
        let v = self.cfg.vocab_size;
        let data = tape.value(logits).data();
        Ok((0..k).map(|i| data[(i * t + t - 1) * v..(i * t + t) * v].to_vec()).collect())
    }

    /// Beam search into the given language and style.
    pub fn translate(&self, src: &[u32], lang: LangId, style: StyleId, beam: usize, max_len: usize) -> Result<Hypothesis> {
        let enc = self.encode(src, lang, style)?;
        let max_len = max_len.min(self.cfg.max_len);
        beam_search(&mut ModelScorer { model: self, enc: &enc }, BOS, EOS, beam, max_len)
    }

    pub fn greedy(&self, src: &[u32], lang: LangId, style: StyleId, max_len: usize) -> Result<Hypothesis> {
        let enc = self.encode(src, lang, style)?;
        let max_len = max_len.min(self.cfg.max_len);
        greedy_search(&mut ModelScorer { model: self, enc: &enc }, BOS, EOS, max_len)
    }
}

/// Log-softmax over the model's logits; PAD and BOS are never emitted.
pub struct ModelScorer<'a, T: Real> {
    pub model: &'a Transformer<T>,
    pub enc: &'a EncodedSource<T>,
}

impl<T: Real> StepScorer for ModelScorer<'_, T> {
    fn log_probs(&mut self, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        let logits = self.model.decode_step(self.enc, prefixes)?;
        Ok(logits
            .into_iter()
            .map(|row| {
                let row: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                row.iter()
                    .enumerate()
                    .map(|(i, v)| if i == PAD as usize || i == BOS as usize { f64::NEG_INFINITY } else { v - z })
                    .collect()
            })
            .collect())
    }
}

impl Transformer<f32> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut lines = vec![("kind".to_string(), "transformer".to_string())];
        lines.extend(self.cfg.to_lines());
        checkpoint::write_checkpoint(path, &lines, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (lines, params) = checkpoint::read_checkpoint(path)?;
        if checkpoint::config_value(&lines, "kind")? != "transformer" {
            return Err(Error::Format(format!("{} is not a transformer checkpoint", path.display())));
        }
        let cfg = ModelConfig::from_lines(&lines)?;
        Self::from_params(cfg, params)
    }
}

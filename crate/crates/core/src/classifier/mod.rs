//! One-vs-rest convolutional style classifier over word tokens.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::checkpoint::{self, config_parse, config_value};
use crate::rng::{self, Rng};
use crate::tensor::{ParamId, ParamSet, Tape, Tensor, Var};
use crate::trainer::Adam;

const WORD_PAD: usize = 0;
const WORD_UNK: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CnnConfig {
    pub widths: Vec<usize>,
    pub filters: usize,
    pub dropout: f64,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            widths: vec![3, 4, 5],
            filters: 128,
            dropout: 0.5,
            embed_dim: 128,
            vocab_size: 20000,
            lr: 1e-3,
            epochs: 3,
            batch_size: 50,
            val_fraction: 0.1,
            seed: 1,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) || self.filters == 0 || self.embed_dim == 0 {
            return Err(Error::Config("classifier widths, filters and embed_dim must be positive".into()));
        }
        if self.vocab_size < 3 || self.batch_size < 2 || self.epochs == 0 {
            return Err(Error::Config("classifier vocab_size >= 3, batch_size >= 2 and epochs >= 1 required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("classifier dropout and val_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }
}

/// Most frequent lowercased words; id 0 is padding, 1 is unknown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    ids: HashMap<String, usize>,
}

impl WordVocab {
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], size: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for s in corpus {
            for w in s {
                *counts.entry(w.as_ref().to_lowercase()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let words = ["<pad>", "<unk>"].iter().map(|s| s.to_string()).chain(ranked.into_iter().map(|(w, _)| w)).take(size).collect();
        Self::from_words(words)
    }

    fn from_words(words: Vec<String>) -> Self {
        let ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        WordVocab { words, ids }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.ids.get(&word.to_lowercase()).copied().unwrap_or(WORD_UNK)
    }
}

/// P(target style) and P(rest) for one sentence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StyleScore {
    pub style: f64,
    pub rest: f64,
}

#[derive(Clone, Debug)]
pub struct StyleClassifier {
    pub cfg: CnnConfig,
    pub target_style: usize,
    vocab: WordVocab,
    params: ParamSet<f32>,
    ids: Ids,
}

#[derive(Clone, Debug)]
struct Ids {
    embed: ParamId,
    convs: Vec<(ParamId, ParamId)>,
    out: (ParamId, ParamId),
}

impl Ids {
    fn resolve(cfg: &CnnConfig, params: &ParamSet<f32>, vocab: usize) -> Result<Self> {
        let get = |n: &str, shape: &[usize]| -> Result<ParamId> {
            let id = params.id(n).ok_or_else(|| Error::Format(format!("missing classifier parameter {n}")))?;
            if params.value(id).shape() != shape {
                return Err(Error::Format(format!("classifier parameter {n} has shape {:?}, expected {shape:?}", params.value(id).shape())));
            }
            Ok(id)
        };
        let (e, f) = (cfg.embed_dim, cfg.filters);
        Ok(Ids {
            embed: get("embed", &[vocab, e])?,
            convs: cfg
                .widths
                .iter()
                .map(|&w| Ok((get(&format!("conv{w}.w"), &[w * e, f])?, get(&format!("conv{w}.b"), &[f])?)))
                .collect::<Result<_>>()?,
            out: (get("out.w", &[f * cfg.widths.len(), 2])?, get("out.b", &[2])?),
        })
    }
}

/// A padded id matrix plus the window-validity mask per width.
struct WordBatch {
    ids: Vec<usize>,
    batch: usize,
    len: usize,
    lens: Vec<usize>,
}

impl StyleClassifier {
    fn new(cfg: CnnConfig, target_style: usize, vocab: WordVocab, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamSet::new();
        let (e, f) = (cfg.embed_dim, cfg.filters);
        params.add("embed", Tensor::uniform(&[vocab.len(), e], -0.08, 0.08, rng))?;
        for &w in &cfg.widths {
            params.add(format!("conv{w}.w"), Tensor::uniform(&[w * e, f], -0.08, 0.08, rng))?;
            params.add(format!("conv{w}.b"), Tensor::zeros(&[f]))?;
        }
        params.add("out.w", Tensor::uniform(&[f * cfg.widths.len(), 2], -0.08, 0.08, rng))?;
        params.add("out.b", Tensor::zeros(&[2]))?;
        let ids = Ids::resolve(&cfg, &params, vocab.len())?;
        Ok(StyleClassifier { cfg, target_style, vocab, params, ids })
    }

    fn encode<S: AsRef<str>>(&self, sentences: &[&[S]]) -> WordBatch {
        let lens: Vec<usize> = sentences.iter().map(|s| s.len()).collect();
        let len = lens.iter().copied().max().unwrap_or(0).max(self.cfg.max_width());
        let mut ids = vec![WORD_PAD; sentences.len() * len];
        for (r, s) in sentences.iter().enumerate() {
            for (j, w) in s.iter().enumerate() {
                ids[r * len + j] = self.vocab.id(w.as_ref());
            }
        }
        WordBatch { ids, batch: sentences.len(), len, lens }
    }

    /// Logits `[B × 2]`; column 1 is the target style.
    fn forward(&self, tape: &mut Tape<f32>, wb: &WordBatch, grad: bool, dropout_rng: Option<&mut Rng>) -> Result<Var> {
        let p = |tape: &mut Tape<f32>, id| if grad { tape.param(&self.params, id) } else { tape.frozen_param(&self.params, id) };
        let (b, l, e, f) = (wb.batch, wb.len, self.cfg.embed_dim, self.cfg.filters);
        let table = p(tape, self.ids.embed);
        let x = tape.embedding(table, &wb.ids)?;
        let x = tape.reshape(x, &[b, l, e])?;
        let mut pooled = Vec::new();
        for (&w, &(cw, cb)) in self.cfg.widths.iter().zip(&self.ids.convs) {
            let t = l - w + 1;
            let win = tape.unfold(x, w)?;
            let win = tape.reshape(win, &[b * t, w * e])?;
            let (cw, cb) = (p(tape, cw), p(tape, cb));
            let h = tape.matmul(win, cw)?;
            let h = tape.add_bias(h, cb)?;
            let h = tape.relu(h);
            let h = tape.reshape(h, &[b, t, f])?;
            // windows running into trailing padding are zeroed; short
            // sentences keep their first window
            let mut mask = vec![0f32; b * t * f];
            for (r, &n) in wb.lens.iter().enumerate() {
                let valid = n.max(w) - w + 1;
                mask[r * t * f..(r * t + valid) * f].fill(1.0);
            }
            let mask = tape.constant(Tensor::new(vec![b, t, f], mask)?);
            let h = tape.mul(h, mask)?;
            pooled.push(tape.max_pool(h)?);
        }
        let mut z = tape.concat_last_dim(&pooled)?;
        if let Some(rng) = dropout_rng {
            z = tape.dropout(z, self.cfg.dropout, true, rng)?;
        }
        let (ow, ob) = (p(tape, self.ids.out.0), p(tape, self.ids.out.1));
        let logits = tape.matmul(z, ow)?;
        tape.add_bias(logits, ob)
    }

    pub fn scores<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<Vec<StyleScore>> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(64) {
            let refs: Vec<&[S]> = chunk.iter().map(|s| s.as_slice()).collect();
            let wb = self.encode(&refs);
            let mut tape = Tape::new();
            let logits = self.forward(&mut tape, &wb, false, None)?;
            for row in tape.value(logits).data().chunks(2) {
                let (a, b) = (row[0] as f64, row[1] as f64);
                let m = a.max(b);
                let (ea, eb) = ((a - m).exp(), (b - m).exp());
                out.push(StyleScore { style: eb / (ea + eb), rest: ea / (ea + eb) });
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let c = &self.cfg;
        let lines: Vec<(String, String)> = [
            ("kind", "cnn".to_string()),
            ("target_style", self.target_style.to_string()),
            ("widths", c.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")),
            ("filters", c.filters.to_string()),
            ("dropout", c.dropout.to_string()),
            ("embed_dim", c.embed_dim.to_string()),
            ("vocab_size", c.vocab_size.to_string()),
            ("vocab", self.vocab.words.join(" ")),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        checkpoint::write_checkpoint(path, &lines, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (lines, params) = checkpoint::read_checkpoint(path)?;
        if config_value(&lines, "kind")? != "cnn" {
            return Err(Error::Format(format!("{} is not a classifier checkpoint", path.display())));
        }
        let widths = config_value(&lines, "widths")?
            .split(',')
            .map(|w| w.parse().map_err(|_| Error::Format(format!("bad filter width {w:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        let cfg = CnnConfig {
            widths,
            filters: config_parse(&lines, "filters")?,
            dropout: config_parse(&lines, "dropout")?,
            embed_dim: config_parse(&lines, "embed_dim")?,
            vocab_size: config_parse(&lines, "vocab_size")?,
            ..CnnConfig::default()
        };
        let vocab = WordVocab::from_words(config_value(&lines, "vocab")?.split(' ').map(str::to_string).collect());
        let ids = Ids::resolve(&cfg, &params, vocab.len())?;
        Ok(StyleClassifier { cfg, target_style: config_parse(&lines, "target_style")?, vocab, params, ids })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierReport {
    pub val_accuracy: f64,
    pub train_size: usize,
    pub val_size: usize,
}

fn split_held_out<'a, S>(sents: &'a [Vec<S>], frac: f64, rng: &mut Rng) -> (Vec<&'a Vec<S>>, Vec<&'a Vec<S>>) {
    let mut idx: Vec<usize> = (0..sents.len()).collect();
    idx.shuffle(rng);
    let n_val = ((sents.len() as f64) * frac).round() as usize;
    let val = idx[..n_val].iter().map(|&i| &sents[i]).collect();
    let train = idx[n_val..].iter().map(|&i| &sents[i]).collect();
    (train, val)
}

/// Balanced one-vs-rest set: every positive plus as many negatives drawn
/// from the pooled other styles.
fn balanced<'a, S>(pos: &[&'a Vec<S>], neg: &[&'a Vec<S>], rng: &mut Rng) -> Vec<(&'a Vec<S>, usize)> {
    let n = pos.len().min(neg.len());
    let mut p: Vec<&Vec<S>> = pos.to_vec();
    let mut q: Vec<&Vec<S>> = neg.to_vec();
    p.shuffle(rng);
    q.shuffle(rng);
    let mut out: Vec<(&Vec<S>, usize)> = p[..n].iter().map(|s| (*s, 1)).chain(q[..n].iter().map(|s| (*s, 0))).collect();
    out.shuffle(rng);
    out
}

/// Trains a binary classifier for `style` against all other styles with
/// balanced sampling; a held-out balanced split gives the validation
/// accuracy. `shuffle_labels` is the chance control: sentences are dealt
/// into the two classes at random, in both the training and held-out parts.
pub fn train_classifier<S: AsRef<str>>(
    style: usize,
    corpus_by_style: &[Vec<Vec<S>>],
    cfg: &CnnConfig,
    shuffle_labels: bool,
) -> Result<(StyleClassifier, ClassifierReport)> {
    cfg.validate()?;
    let present = corpus_by_style.iter().filter(|c| !c.is_empty()).count();
    if present < 2 || style >= corpus_by_style.len() || corpus_by_style[style].is_empty() {
        return Err(Error::Config("classifier training needs the target style and at least one other style".into()));
    }
    let mut rng = rng::derived(cfg.seed, style as u64);
    let mut pos_train = Vec::new();
    let mut neg_train = Vec::new();
    let mut pos_val = Vec::new();
    let mut neg_val = Vec::new();
    for (s, sents) in corpus_by_style.iter().enumerate() {
        let (tr, va) = split_held_out(sents, cfg.val_fraction, &mut rng);
        if s == style {
            pos_train.extend(tr);
            pos_val.extend(va);
        } else {
            neg_train.extend(tr);
            neg_val.extend(va);
        }
    }
    if shuffle_labels {
        for (pos, neg) in [(&mut pos_train, &mut neg_train), (&mut pos_val, &mut neg_val)] {
            let mut pool: Vec<_> = pos.drain(..).chain(neg.drain(..)).collect();
            pool.shuffle(&mut rng);
            let half = pool.len() / 2;
            neg.extend(pool.drain(half..));
            pos.extend(pool);
        }
    }
    let all_train: Vec<Vec<&str>> =
        pos_train.iter().chain(&neg_train).map(|s| s.iter().map(|w| w.as_ref()).collect()).collect();
    let vocab = WordVocab::build(&all_train, cfg.vocab_size);
    let mut clf = StyleClassifier::new(cfg.clone(), style, vocab, &mut rng)?;
    let mut adam = Adam::new(&clf.params, 0.9, 0.999, 1e-8);
    let mut dropout_rng = rng::derived(cfg.seed, 1000 + style as u64);

    for _ in 0..cfg.epochs {
        let epoch = balanced(&pos_train, &neg_train, &mut rng);
        for chunk in epoch.chunks(cfg.batch_size) {
            let sents: Vec<&[S]> = chunk.iter().map(|(s, _)| s.as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|(_, l)| *l).collect();
            let wb = clf.encode(&sents);
            let mut tape = Tape::new();
            let logits = clf.forward(&mut tape, &wb, true, Some(&mut dropout_rng))?;
            let loss = tape.cross_entropy(logits, &labels, None)?;
            tape.backward(loss)?;
            clf.params.zero_grads();
            clf.params.accumulate_grads(&tape);
            drop(tape);
            adam.update(&mut clf.params, cfg.lr)?;
        }
    }

    let val = balanced(&pos_val, &neg_val, &mut rng);
    let sents: Vec<Vec<&str>> = val.iter().map(|(s, _)| s.iter().map(|w| w.as_ref()).collect()).collect();
    let scores = clf.scores(&sents)?;
    let correct = scores.iter().zip(&val).filter(|(sc, (_, l))| (sc.style > 0.5) == (*l == 1)).count();
    let report = ClassifierReport {
        val_accuracy: if val.is_empty() { 0.0 } else { correct as f64 / val.len() as f64 },
        train_size: 2 * pos_train.len().min(neg_train.len()),
        val_size: val.len(),
    };
    Ok((clf, report))
}

/// Percentage of sentences with P(target style) > 0.5.
pub fn classify_corpus<S: AsRef<str>>(clf: &StyleClassifier, sentences: &[Vec<S>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::Config("cannot classify an empty corpus".into()));
    }
    let scores = clf.scores(sentences)?;
    Ok(100.0 * scores.iter().filter(|s| s.style > 0.5).count() as f64 / scores.len() as f64)
}

/// `sentence_id<TAB>prob<TAB>label` lines.
pub fn report_tsv(scores: &[StyleScore]) -> String {
    let mut out = String::new();
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{i}\t{:.6}\t{}", s.style, u8::from(s.style > 0.5)).expect("string write");
    }
    out
}

pub fn write_report(path: &Path, scores: &[StyleScore]) -> Result<()> {
    fs::write(path, report_tsv(scores)).map_err(|e| Error::io(path, e))
}

//! Adam, plateau learning-rate schedule, validation perplexity and the
//! checkpointing training loop.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::corpus::{build_batches, Batch, FactoredExample};
use crate::error::{Error, Result};
use crate::model::{Pass, Transformer};
use crate::rng;
use crate::tensor::{ParamSet, Real, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub decay_factor: f64,
    pub patience_decay: usize,
    pub patience_stop: usize,
    pub checkpoint_interval: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Target words per batch.
    pub batch_words: usize,
    /// Hard cap on updates; 0 means no cap.
    pub max_updates: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            decay_factor: 0.7,
            patience_decay: 8,
            patience_stop: 32,
            checkpoint_interval: 4000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 1,
            batch_words: 2000,
            max_updates: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad(format!("decay_factor {} must lie in (0, 1)", self.decay_factor));
        }
        if self.patience_stop < self.patience_decay {
            return bad(format!("patience_stop {} is below patience_decay {}", self.patience_stop, self.patience_decay));
        }
        if self.patience_decay == 0 || self.checkpoint_interval == 0 || self.batch_words == 0 {
            return bad("patience_decay, checkpoint_interval and batch_words must be positive".into());
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("lr and eps must be positive, betas in [0, 1)".into());
        }
        Ok(())
    }
}

/// Adam with bias correction; moments are kept per parameter.
#[derive(Clone, Debug)]
pub struct Adam<T: Real = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Adam { beta1, beta2, eps, step: 0, m: zeros(), v: zeros() }
    }

    /// Applies one update from the accumulated gradients. Parameters without
    /// a gradient count as zero gradient. A non-finite gradient aborts
    /// before anything is modified.
    pub fn update(&mut self, params: &mut ParamSet<T>, lr: f64) -> Result<()> {
        for p in params.iter() {
            if let Some(g) = &p.grad {
                if let Some(pos) = g.data().iter().position(|x| !x.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "non-finite gradient in {} at index {pos} (step {})",
                        p.name,
                        self.step + 1
                    )));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (T::lit(self.beta1), T::lit(self.beta2), T::lit(self.eps));
        let (one_b1, one_b2) = (T::lit(1.0 - self.beta1), T::lit(1.0 - self.beta2));
        let step_size = T::lit(lr / c1);
        let c2_sqrt = T::lit(c2.sqrt());
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let i = id.index();
            let grad = params.get(id).grad.as_ref().map(|g| g.data().to_vec());
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let value = params.value_mut(id).data_mut();
            for j in 0..value.len() {
                let g = grad.as_ref().map_or(T::zero(), |g| g[j]);
                m[j] = b1 * m[j] + one_b1 * g;
                v[j] = b2 * v[j] + one_b2 * g * g;
                let denom = v[j].sqrt() / c2_sqrt + eps;
                value[j] -= step_size * m[j] / denom;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlateauEvent {
    Improved,
    NoChange,
    Decayed,
    Stop,
}

/// Learning-rate decay after `patience_decay` checkpoints without a new
/// best (counter restarts after each decay), stop after `patience_stop`
/// consecutive checkpoints without one. Improvement means strictly lower.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    pub lr0: f64,
    pub factor: f64,
    pub patience_decay: usize,
    pub patience_stop: usize,
    pub decays: u32,
    pub best: f64,
    since_decay: usize,
    since_improvement: usize,
}

impl PlateauSchedule {
    pub fn new(lr0: f64, factor: f64, patience_decay: usize, patience_stop: usize) -> Self {
        PlateauSchedule { lr0, factor, patience_decay, patience_stop, decays: 0, best: f64::INFINITY, since_decay: 0, since_improvement: 0 }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.lr, cfg.decay_factor, cfg.patience_decay, cfg.patience_stop)
    }

    pub fn lr(&self) -> f64 {
        self.lr0 * self.factor.powi(self.decays as i32)
    }

    pub fn since_improvement(&self) -> usize {
        self.since_improvement
    }

    pub fn observe(&mut self, ppl: f64) -> PlateauEvent {
        if ppl < self.best {
            self.best = ppl;
            self.since_decay = 0;
            self.since_improvement = 0;
            return PlateauEvent::Improved;
        }
        self.since_decay += 1;
        self.since_improvement += 1;
        if self.since_improvement >= self.patience_stop {
            return PlateauEvent::Stop;
        }
        if self.since_decay >= self.patience_decay {
            self.decays += 1;
            self.since_decay = 0;
            return PlateauEvent::Decayed;
        }
        PlateauEvent::NoChange
    }
}

/// Summed NLL and token count over batches.
pub fn dev_nll<T: Real>(model: &Transformer<T>, batches: &[Batch]) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut count = 0;
    for b in batches {
        let mut tape = Tape::new();
        let (loss, n) = model.forward_loss(&mut tape, b, &mut Pass::inference())?;
        total += tape.value(loss).item().to_f64().expect("finite") * n as f64;
        count += n;
    }
    Ok((total, count))
}

/// exp(total NLL / target tokens) over the dev batches.
pub fn validate<T: Real>(model: &Transformer<T>, batches: &[Batch]) -> Result<f64> {
    let (total, count) = dev_nll(model, batches)?;
    if count == 0 {
        return Err(Error::Config("empty dev set".into()));
    }
    let ppl = (total / count as f64).exp();
    if !ppl.is_finite() {
        return Err(Error::Numerical(format!("validation perplexity is {ppl}")));
    }
    Ok(ppl)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_ppl: f64,
    pub lr: f64,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<CheckpointRecord>,
    pub best: usize,
    pub model: Transformer,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &CheckpointRecord {
        &self.history[self.best]
    }
}

/// Trains with Adam and the plateau schedule, validating every
/// `checkpoint_interval` updates (and once more at the update cap). With
/// `out_dir`, writes `ckpt-{step}`, `best` and `train.log`
/// (`step<TAB>train_loss<TAB>val_ppl<TAB>lr`). Returns the best model.
pub fn train(
    mut model: Transformer,
    train_set: &[FactoredExample],
    dev_set: &[FactoredExample],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let dev = build_batches(dev_set, cfg.batch_words, &mut rng::derived(cfg.seed, 2))?;
    if dev.is_empty() {
        return Err(Error::Config("empty dev set".into()));
    }
    let mut log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("train.log");
            Some((File::create(&path).map_err(|e| Error::io(&path, e))?, path))
        }
        None => None,
    };
    let mut batch_rng = rng::derived(cfg.seed, 1);
    let mut dropout_rng = rng::derived(cfg.seed, 3);
    let mut adam = Adam::new(model.params(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut sched = PlateauSchedule::from_config(cfg);
    let mut history = Vec::new();
    let mut best: Option<(usize, Transformer)> = None;
    let mut step = 0usize;
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    let mut stopped_early = false;

    'outer: loop {
        let batches = build_batches(train_set, cfg.batch_words, &mut batch_rng)?;
        for batch in &batches {
            let loss = {
                let mut tape = Tape::new();
                let mut pass = Pass { grad: true, dropout_rng: Some(&mut dropout_rng) };
                let (loss, _) = model.forward_loss(&mut tape, batch, &mut pass)?;
                let value = tape.value(loss).item() as f64;
                if !value.is_finite() {
                    return Err(Error::Numerical(format!("training loss is {value} at step {}", step + 1)));
                }
                tape.backward(loss)?;
                model.params_mut().zero_grads();
                model.params_mut().accumulate_grads(&tape);
                value
            };
            adam.update(model.params_mut(), sched.lr())?;
            step += 1;
            loss_sum += loss;
            loss_n += 1;
            let at_cap = cfg.max_updates > 0 && step >= cfg.max_updates;
            if step % cfg.checkpoint_interval == 0 || at_cap {
                let val_ppl = validate(&model, &dev)?;
                let lr = sched.lr();
                let train_loss = loss_sum / loss_n as f64;
                (loss_sum, loss_n) = (0.0, 0);
                let path = match out_dir {
                    Some(dir) => {
                        let p = dir.join(format!("ckpt-{step}"));
                        model.save(&p)?;
                        Some(p)
                    }
                    None => None,
                };
                if let Some((f, p)) = log.as_mut() {
                    writeln!(f, "{step}\t{train_loss:.6}\t{val_ppl:.6}\t{lr}").map_err(|e| Error::io(p.clone(), e))?;
                }
                log::info!("step {step} train_loss {train_loss:.4} val_ppl {val_ppl:.4} lr {lr:.3e}");
                history.push(CheckpointRecord { step, train_loss, val_ppl, lr, path });
                let event = sched.observe(val_ppl);
                if event == PlateauEvent::Improved {
                    if let Some(dir) = out_dir {
                        model.save(&dir.join("best"))?;
                    }
                    best = Some((history.len() - 1, model.clone()));
                }
                if event == PlateauEvent::Stop {
                    stopped_early = true;
                    break 'outer;
                }
                if at_cap {
                    break 'outer;
                }
            }
        }
    }
    let (best, model) = best.expect("at least one checkpoint improves on infinity");
    Ok(TrainOutcome { history, best, model, stopped_early })
}

//! Flat `key=value` run configuration covering every module.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::classifier::CnnConfig;
use crate::corpus::FilterConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::synthlang::{SplitSizes, SynthSpec};
use crate::trainer::TrainConfig;

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("workers", "1"),
    ("synth.num_langs", "3"),
    ("synth.num_styles", "3"),
    ("synth.num_concepts", "240"),
    ("synth.styled_fraction", "0.2"),
    ("synth.lang_mark_rate", "0.5"),
    ("synth.contraction_rate", "0.35"),
    ("synth.marker_free_rate", "0.04"),
    ("synth.min_len", "4"),
    ("synth.max_len", "12"),
    ("synth.train", "2000"),
    ("synth.dev", "100"),
    ("synth.test", "1000"),
    ("prep.vocab_size", "4000"),
    ("prep.max_tokens", "100"),
    ("prep.max_ratio", "9"),
    ("model.layers", "2"),
    ("model.model_dim", "64"),
    ("model.heads", "4"),
    ("model.ffn_dim", "256"),
    ("model.token_embed_dim", "64"),
    ("model.factor_embed_dim", "4"),
    ("model.dropout", "0.1"),
    ("model.max_len", "128"),
    ("train.lr", "0.0002"),
    ("train.decay_factor", "0.7"),
    ("train.patience_decay", "8"),
    ("train.patience_stop", "32"),
    ("train.checkpoint_interval", "4000"),
    ("train.batch_words", "2000"),
    ("train.max_updates", "0"),
    ("decode.beam", "5"),
    ("decode.max_len", "0"),
    ("clf.embed_dim", "128"),
    ("clf.filters", "128"),
    ("clf.widths", "3,4,5"),
    ("clf.dropout", "0.5"),
    ("clf.vocab_size", "20000"),
    ("clf.lr", "0.001"),
    ("clf.epochs", "3"),
    ("clf.batch_size", "50"),
    ("clf.val_fraction", "0.1"),
    ("clf.max_per_style", "5000"),
    ("eval.src_lang", "l1"),
    ("eval.tgt_lang", "l0"),
];

/// Resolved settings. Every key has a default; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        DEFAULTS.iter().map(|(k, _)| *k)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.into();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown config key {key:?}"))),
        }
    }

    /// Applies `key=value` lines over the current values. Blank lines and
    /// `#` comments are skipped; `origin` names the source in errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Writes `run.cfg` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("run.cfg");
        fs::write(&path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.values.get(key).map(String::as_str).ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(key)?;
        raw.parse().map_err(|e| Error::Config(format!("config key {key}: cannot parse {raw:?}: {e}")))
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let spec = SynthSpec {
            seed: self.get("seed")?,
            num_langs: self.get("synth.num_langs")?,
            num_styles: self.get("synth.num_styles")?,
            num_concepts: self.get("synth.num_concepts")?,
            styled_fraction: self.get("synth.styled_fraction")?,
            lang_mark_rate: self.get("synth.lang_mark_rate")?,
            contraction_rate: self.get("synth.contraction_rate")?,
            marker_free_rate: self.get("synth.marker_free_rate")?,
            min_len: self.get("synth.min_len")?,
            max_len: self.get("synth.max_len")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn split_sizes(&self) -> Result<SplitSizes> {
        Ok(SplitSizes { train: self.get("synth.train")?, dev: self.get("synth.dev")?, test: self.get("synth.test")? })
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        Ok(FilterConfig { max_tokens: self.get("prep.max_tokens")?, max_ratio: self.get("prep.max_ratio")? })
    }

    pub fn model_config(&self, vocab_size: usize, num_langs: usize, num_styles: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            layers: self.get("model.layers")?,
            model_dim: self.get("model.model_dim")?,
            heads: self.get("model.heads")?,
            ffn_dim: self.get("model.ffn_dim")?,
            token_embed_dim: self.get("model.token_embed_dim")?,
            factor_embed_dim: self.get("model.factor_embed_dim")?,
            dropout: self.get("model.dropout")?,
            vocab_size,
            max_len: self.get("model.max_len")?,
            num_langs,
            num_styles,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            lr: self.get("train.lr")?,
            decay_factor: self.get("train.decay_factor")?,
            patience_decay: self.get("train.patience_decay")?,
            patience_stop: self.get("train.patience_stop")?,
            checkpoint_interval: self.get("train.checkpoint_interval")?,
            seed: self.get("seed")?,
            batch_words: self.get("train.batch_words")?,
            max_updates: self.get("train.max_updates")?,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cnn_config(&self) -> Result<CnnConfig> {
        let widths = self
            .raw("clf.widths")?
            .split(',')
            .map(|w| w.trim().parse().map_err(|_| Error::Config(format!("clf.widths: bad width {w:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        let cfg = CnnConfig {
            widths,
            filters: self.get("clf.filters")?,
            dropout: self.get("clf.dropout")?,
            embed_dim: self.get("clf.embed_dim")?,
            vocab_size: self.get("clf.vocab_size")?,
            lr: self.get("clf.lr")?,
            epochs: self.get("clf.epochs")?,
            batch_size: self.get("clf.batch_size")?,
            val_fraction: self.get("clf.val_fraction")?,
            seed: self.get("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

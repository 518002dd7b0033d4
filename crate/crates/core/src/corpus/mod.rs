//! Parallel-corpus data model: language/style registries, pair filtering,
//! factor annotation, direction enumeration and word-count batching.

mod batch;
mod io;

pub use batch::{build_batches, Batch};
pub use io::{read_lines, read_parallel, read_shard, write_lines, write_shard};

use std::fmt;

use crate::error::{Error, Result};
use crate::text::{TextPipeline, TokenizedSentence, BOS, EOS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LangId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StyleId(pub u16);

impl LangId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl StyleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Fixed name tables for languages and styles; ids are positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registry {
    langs: Vec<String>,
    styles: Vec<String>,
}

impl Registry {
    pub fn new<S: Into<String>>(langs: impl IntoIterator<Item = S>, styles: impl IntoIterator<Item = S>) -> Result<Self> {
        let langs: Vec<String> = langs.into_iter().map(Into::into).collect();
        let styles: Vec<String> = styles.into_iter().map(Into::into).collect();
        for (kind, names) in [("language", &langs), ("style", &styles)] {
            if names.is_empty() {
                return Err(Error::Registry(format!("no {kind}s registered")));
            }
            for (i, n) in names.iter().enumerate() {
                if n.is_empty() || n.contains(char::is_whitespace) || n.contains('.') {
                    return Err(Error::Registry(format!("invalid {kind} name {n:?}")));
                }
                if names[..i].contains(n) {
                    return Err(Error::Registry(format!("duplicate {kind} name {n:?}")));
                }
            }
        }
        if langs.len() > u16::MAX as usize || styles.len() > u16::MAX as usize {
            return Err(Error::Registry("too many registry entries".into()));
        }
        Ok(Registry { langs, styles })
    }

    pub fn num_langs(&self) -> usize {
        self.langs.len()
    }

    pub fn num_styles(&self) -> usize {
        self.styles.len()
    }

    pub fn langs(&self) -> impl Iterator<Item = LangId> {
        (0..self.langs.len() as u16).map(LangId)
    }

    pub fn styles(&self) -> impl Iterator<Item = StyleId> {
        (0..self.styles.len() as u16).map(StyleId)
    }

    pub fn lang(&self, name: &str) -> Result<LangId> {
        self.langs
            .iter()
            .position(|l| l == name)
            .map(|i| LangId(i as u16))
            .ok_or_else(|| Error::Registry(format!("unknown language {name:?}")))
    }

    pub fn style(&self, name: &str) -> Result<StyleId> {
        self.styles
            .iter()
            .position(|s| s == name)
            .map(|i| StyleId(i as u16))
            .ok_or_else(|| Error::Registry(format!("unknown style {name:?}")))
    }

    pub fn lang_name(&self, id: LangId) -> Result<&str> {
        self.langs.get(id.index()).map(String::as_str).ok_or_else(|| Error::Registry(format!("unknown {id:?}")))
    }

    pub fn style_name(&self, id: StyleId) -> Result<&str> {
        self.styles.get(id.index()).map(String::as_str).ok_or_else(|| Error::Registry(format!("unknown {id:?}")))
    }

    /// `lang<TAB>name` and `style<TAB>name` lines in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.langs {
            out.push_str(&format!("lang\t{l}\n"));
        }
        for s in &self.styles {
            out.push_str(&format!("style\t{s}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (mut langs, mut styles) = (Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            match line.split_once('\t') {
                Some(("lang", n)) => langs.push(n.to_string()),
                Some(("style", n)) => styles.push(n.to_string()),
                _ => return Err(Error::Format(format!("registry line {}: {line:?}", i + 1))),
            }
        }
        Registry::new(langs, styles)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelPair {
    pub src: TokenizedSentence,
    pub tgt: TokenizedSentence,
    pub src_lang: LangId,
    pub tgt_lang: LangId,
    pub style: StyleId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiscardReason {
    Empty,
    TooLong,
    NoAlphabetic,
    LengthRatio,
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscardReason::Empty => "empty",
            DiscardReason::TooLong => "too_long",
            DiscardReason::NoAlphabetic => "no_alpha",
            DiscardReason::LengthRatio => "ratio",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    /// Every rule that fired, in rule order.
    Discard(Vec<DiscardReason>),
}

impl FilterDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, FilterDecision::Keep)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub max_tokens: usize,
    pub max_ratio: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { max_tokens: 100, max_ratio: 9.0 }
    }
}

/// Applies the corpus cleaning rules to a tokenized pair. Token counts are
/// taken before subword segmentation; the length ratio is symmetric.
pub fn filter_pair(src: &[String], tgt: &[String], cfg: &FilterConfig) -> FilterDecision {
    let mut reasons = Vec::new();
    if src.is_empty() || tgt.is_empty() {
        reasons.push(DiscardReason::Empty);
    }
    if src.len() > cfg.max_tokens || tgt.len() > cfg.max_tokens {
        reasons.push(DiscardReason::TooLong);
    }
    let has_alpha = |s: &[String]| s.iter().any(|t| t.chars().any(char::is_alphabetic));
    if !has_alpha(src) || !has_alpha(tgt) {
        reasons.push(DiscardReason::NoAlphabetic);
    }
    if !src.is_empty() && !tgt.is_empty() {
        let (a, b) = (src.len() as f64, tgt.len() as f64);
        if a.max(b) / a.min(b) > cfg.max_ratio {
            reasons.push(DiscardReason::LengthRatio);
        }
    }
    if reasons.is_empty() {
        FilterDecision::Keep
    } else {
        FilterDecision::Discard(reasons)
    }
}

/// Source pieces with token-parallel target-language and target-style
/// factors, plus the target pieces framed by BOS/EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactoredExample {
    pub src_ids: Vec<u32>,
    pub factor_lang: Vec<LangId>,
    pub factor_style: Vec<StyleId>,
    pub tgt_ids: Vec<u32>,
}

impl FactoredExample {
    /// Inference input: the source pieces, each tagged with the requested
    /// target language and style. The style may differ from the source's.
    pub fn for_source(src_ids: Vec<u32>, lang: LangId, style: StyleId, registry: &Registry) -> Result<Self> {
        registry.lang_name(lang)?;
        registry.style_name(style)?;
        if src_ids.is_empty() {
            return Err(Error::Length("empty source sentence".into()));
        }
        let n = src_ids.len();
        Ok(FactoredExample { src_ids, factor_lang: vec![lang; n], factor_style: vec![style; n], tgt_ids: Vec::new() })
    }

    /// Number of target pieces, excluding BOS and EOS.
    pub fn target_words(&self) -> usize {
        self.tgt_ids.len().saturating_sub(2)
    }

    pub fn lang(&self) -> LangId {
        self.factor_lang[0]
    }

    pub fn style(&self) -> StyleId {
        self.factor_style[0]
    }
}

/// Builds a training example. The style factor is always the pair's own style.
pub fn annotate_factors(pair: &ParallelPair, pipeline: &TextPipeline, registry: &Registry) -> Result<FactoredExample> {
    registry.lang_name(pair.src_lang)?;
    let src_ids = pipeline.vocab.encode(&pipeline.truecaser.apply(&pair.src.tokens));
    let mut ex = FactoredExample::for_source(src_ids, pair.tgt_lang, pair.style, registry)?;
    ex.tgt_ids.push(BOS);
    ex.tgt_ids.extend(pipeline.vocab.encode(&pipeline.truecaser.apply(&pair.tgt.tokens)));
    ex.tgt_ids.push(EOS);
    Ok(ex)
}

/// One training task: translate `src_lang` → `tgt_lang` within `style`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Task {
    pub src_lang: LangId,
    pub tgt_lang: LangId,
    pub style: StyleId,
}

/// Every ordered pair of distinct languages, for every style. Never pairs
/// two different styles.
pub fn enumerate_directions(num_langs: usize, num_styles: usize) -> Vec<Task> {
    let mut tasks = Vec::new();
    for s in 0..num_styles as u16 {
        for a in 0..num_langs as u16 {
            for b in 0..num_langs as u16 {
                if a != b {
                    tasks.push(Task { src_lang: LangId(a), tgt_lang: LangId(b), style: StyleId(s) });
                }
            }
        }
    }
    tasks
}

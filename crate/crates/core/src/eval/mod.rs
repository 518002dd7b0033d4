//! BLEU, METEOR-lite, the contraction census and relative-change arithmetic.

mod report;

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

pub use report::{EvalReport, ReportCell};

use crate::error::{Error, Result};

fn check_aligned(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::Alignment(format!("{hyps} hypotheses vs {refs} references")));
    }
    Ok(())
}

fn lower<S: AsRef<str>>(s: &[S]) -> Vec<String> {
    s.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Sufficient statistics of corpus BLEU-4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn add_sentence<S: AsRef<str>>(&mut self, hyp: &[S], reference: &[S]) {
        let (h, r) = (lower(hyp), lower(reference));
        self.hyp_len += h.len();
        self.ref_len += r.len();
        for n in 1..=4 {
            let rc = ngram_counts(&r, n);
            for (g, c) in ngram_counts(&h, n) {
                self.matches[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
            self.totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }

    pub fn precision(&self, n: usize) -> f64 {
        if self.totals[n - 1] == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / self.totals[n - 1] as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0).exp()
    }

    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.contains(&0) {
            return 0.0;
        }
        let log_mean = (1..=4).map(|n| self.precision(n).ln()).sum::<f64>() / 4.0;
        self.brevity_penalty() * log_mean.exp()
    }
}

/// Corpus-level BLEU-4 on lowercased tokens, unsmoothed.
pub fn bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    check_aligned(hypotheses.len(), references.len())?;
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add_sentence(h, r);
    }
    Ok(stats.score())
}

/// Word → synset id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymTable {
    synsets: HashMap<String, usize>,
}

impl SynonymTable {
    pub fn new<S: AsRef<str>>(entries: impl IntoIterator<Item = (S, usize)>) -> Self {
        SynonymTable { synsets: entries.into_iter().map(|(w, id)| (w.as_ref().to_lowercase(), id)).collect() }
    }

    /// `word<TAB>synset_id` lines.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let (w, id) = line.split_once('\t').ok_or_else(|| Error::Format(format!("synonym line {}: expected word<TAB>id", i + 1)))?;
            let id = id.parse().map_err(|_| Error::Format(format!("synonym line {}: bad synset id {id:?}", i + 1)))?;
            entries.push((w.to_string(), id));
        }
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn synonymous(&self, a: &str, b: &str) -> bool {
        matches!((self.synsets.get(a), self.synsets.get(b)), (Some(x), Some(y)) if x == y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams { alpha: 0.9, beta: 3.0, gamma: 0.5 }
    }
}

const SUFFIXES: [&str; 5] = ["ing", "ed", "es", "ly", "s"];

/// Strips one common English suffix when at least three characters remain.
pub fn stem(word: &str) -> &str {
    for suf in SUFFIXES {
        if let Some(s) = word.strip_suffix(suf) {
            if s.chars().count() >= 3 {
                return s;
            }
        }
    }
    word
}

/// Unigram alignment as (hyp index, ref index) pairs sorted by hyp index.
/// Stages run in order (exact, stem, synonym); within a stage each
/// hypothesis word takes the leftmost free reference word.
pub fn align(hyp: &[String], reference: &[String], synonyms: Option<&SynonymTable>) -> Vec<(usize, usize)> {
    let mut hyp_used = vec![false; hyp.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let exact = |a: &str, b: &str| a == b;
    let stemmed = |a: &str, b: &str| stem(a) == stem(b);
    let synonym = |a: &str, b: &str| synonyms.is_some_and(|t| t.synonymous(a, b));
    let stages: [&dyn Fn(&str, &str) -> bool; 3] = [&exact, &stemmed, &synonym];
    for stage in stages {
        for (i, h) in hyp.iter().enumerate() {
            if hyp_used[i] {
                continue;
            }
            if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && stage(h, &reference[j])) {
                hyp_used[i] = true;
                ref_used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Runs of alignment pairs adjacent in both hypothesis and reference.
pub fn chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count()
}

pub fn meteor_sentence<S: AsRef<str>>(hyp: &[S], reference: &[S], synonyms: Option<&SynonymTable>, p: MeteorParams) -> f64 {
    let (h, r) = (lower(hyp), lower(reference));
    let pairs = align(&h, &r, synonyms);
    let m = pairs.len() as f64;
    if pairs.is_empty() {
        return 0.0;
    }
    let precision = m / h.len() as f64;
    let recall = m / r.len() as f64;
    let fmean = precision * recall / (p.alpha * precision + (1.0 - p.alpha) * recall);
    let penalty = p.gamma * (chunks(&pairs) as f64 / m).powf(p.beta);
    fmean * (1.0 - penalty)
}

/// Mean of per-sentence METEOR-lite scores.
pub fn meteor_lite<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>], synonyms: Option<&SynonymTable>) -> Result<f64> {
    check_aligned(hypotheses.len(), references.len())?;
    if hypotheses.is_empty() {
        return Ok(0.0);
    }
    let p = MeteorParams::default();
    let total: f64 = hypotheses.iter().zip(references).map(|(h, r)| meteor_sentence(h, r, synonyms, p)).sum();
    Ok(total / hypotheses.len() as f64)
}

/// Ordered clitic patterns; a token counts once, for the first rule it hits.
pub fn contraction_rules() -> &'static [Regex] {
    static RULES: OnceLock<Vec<Regex>> = OnceLock::new();
    RULES.get_or_init(|| {
        ["'ll", "'s", "'re", "'ve", "'d", "'m", "n?'t"]
            .iter()
            .map(|p| Regex::new(&format!("(?i)^{p}$")).expect("static pattern"))
            .collect()
    })
}

pub fn count_contractions_sentence<S: AsRef<str>>(tokens: &[S]) -> usize {
    let rules = contraction_rules();
    tokens.iter().filter(|t| rules.iter().any(|r| r.is_match(t.as_ref()))).count()
}

/// Clitic tokens over a tokenized corpus.
pub fn count_contractions<S: AsRef<str>>(corpus: &[Vec<S>]) -> usize {
    corpus.iter().map(|s| count_contractions_sentence(s)).sum()
}

/// Percent increase of the target-style share; None when `before` is 0.
pub fn relative_style_change(before_pct: f64, after_pct: f64) -> Option<f64> {
    (before_pct > 0.0).then(|| 100.0 * (after_pct - before_pct) / before_pct)
}

/// Percent drop from the same-style score; None when it is 0.
pub fn relative_metric_decrease(same_style: f64, cross_style: f64) -> Option<f64> {
    (same_style > 0.0).then(|| 100.0 * (same_style - cross_style) / same_style)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn bleu_identity_and_empty() {
        let x = vec![t("the cat sat on the mat"), t("a dog barked at the moon")];
        assert_eq!(bleu(&x, &x).unwrap(), 1.0);
        let empty: Vec<Vec<String>> = vec![vec![], vec![]];
        assert_eq!(bleu(&empty, &x).unwrap(), 0.0);
        assert!(matches!(bleu(&x[..1], &x), Err(Error::Alignment(_))));
    }

    #[test]
    fn clipped_unigram_precision() {
        let mut s = BleuStats::default();
        s.add_sentence(&t("the the the cat"), &t("the cat sat"));
        assert_eq!((s.matches[0], s.totals[0]), (2, 4));
        assert_eq!((s.matches[1], s.totals[1]), (1, 3));
        assert_eq!(s.matches[2], 0);
        assert_eq!(s.score(), 0.0);
    }

    #[test]
    fn brevity_penalty_applies_to_short_output() {
        let hyp = vec![t("the cat sat on the")];
        let reference = vec![t("The cat sat on the mat")];
        // p1..p4 = 1, BP = exp(1 - 6/5)
        assert!((bleu(&hyp, &reference).unwrap() - (-0.2f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn meteor_identity_and_zero() {
        let p = MeteorParams::default();
        let s = t("a b c d");
        assert!((meteor_sentence(&s, &s, None, p) - (1.0 - 0.5 / 64.0)).abs() < 1e-12);
        assert_eq!(meteor_sentence(&t("x y"), &t("a b"), None, p), 0.0);
    }

    #[test]
    fn staged_alignment() {
        let syn = SynonymTable::new([("ease", 0), ("alleviate", 0)]);
        let (h, r) = (t("walked to ease pain"), t("walking to alleviate pain"));
        assert_eq!(align(&h, &r, Some(&syn)), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(align(&h, &r, None), vec![(0, 0), (1, 1), (3, 3)]);
        assert_eq!(chunks(&[(0, 0), (1, 1), (3, 3)]), 2);
        assert_eq!(chunks(&[(0, 1), (1, 0)]), 2);
    }

    #[test]
    fn contraction_census() {
        assert_eq!(count_contractions(&[t("I 'll go , she 's here .")]), 2);
        assert_eq!(count_contractions(&[t("do not stop")]), 0);
        assert_eq!(count_contractions(&[t("we 're ca n't 'M 'VE")]), 4);
    }

    #[test]
    fn relative_changes() {
        assert_eq!(relative_style_change(5.0, 5.0), Some(0.0));
        assert_eq!(relative_style_change(0.0, 5.0), None);
        assert_eq!(relative_metric_decrease(3.0, 3.0), Some(0.0));
        assert!((relative_style_change(4.4, 14.0).unwrap() - 218.18).abs() < 0.01);
        assert!((relative_metric_decrease(30.5, 27.4).unwrap() - 10.16).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn contraction_count_is_additive(corpus in prop::collection::vec(prop::collection::vec("('ll|'s|n't|ab|cd|'x)", 0..6), 0..8)) {
            let per: usize = corpus.iter().map(|s| count_contractions_sentence(s)).sum();
            prop_assert_eq!(count_contractions(&corpus), per);
        }

        #[test]
        fn metrics_ignore_sentence_order(corpus in prop::collection::vec((prop::collection::vec("[a-d]", 1..8), prop::collection::vec("[a-d]", 1..8)), 1..6), rot in 0usize..6) {
            let (h, r): (Vec<Vec<String>>, Vec<Vec<String>>) = corpus.into_iter().unzip();
            let k = rot % h.len();
            let (mut h2, mut r2) = (h.clone(), r.clone());
            h2.rotate_left(k);
            r2.rotate_left(k);
            prop_assert!((bleu(&h, &r).unwrap() - bleu(&h2, &r2).unwrap()).abs() < 1e-12);
            prop_assert!((meteor_lite(&h, &r, None).unwrap() - meteor_lite(&h2, &r2, None).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn exact_copy_beats_partial(r in prop::collection::vec("[a-f]", 2..10), drop in 0usize..10) {
            let mut y = r.clone();
            y.remove(drop % r.len());
            let refs = vec![r.clone()];
            prop_assert!(meteor_lite(&refs, &refs, None).unwrap() > meteor_lite(&[y], &refs, None).unwrap());
            prop_assert_eq!(bleu(&refs, &refs).unwrap(), if r.len() >= 4 { 1.0 } else { 0.0 });
        }
    }
}

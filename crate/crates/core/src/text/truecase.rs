use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Frequency truecaser: remembers how often each surface casing of a word
/// was observed and restores sentence-initial words to their usual casing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruecaseModel {
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    best: HashMap<String, String>,
}

fn pick_best(casings: &BTreeMap<String, u64>) -> String {
    // Highest count wins; ties prefer the all-lowercase form, then the
    // lexicographically smallest.
    casings
        .iter()
        .max_by(|(a, ca), (b, cb)| {
            ca.cmp(cb)
                .then_with(|| (**a == a.to_lowercase()).cmp(&(**b == b.to_lowercase())))
                .then_with(|| b.cmp(a))
        })
        .map(|(s, _)| s.clone())
        .expect("non-empty casing table")
}

impl TruecaseModel {
    pub fn train<S: AsRef<str>>(corpus: &[Vec<S>]) -> Self {
        let mut model = TruecaseModel::default();
        for sent in corpus {
            for tok in sent {
                model.observe(tok.as_ref(), 1);
            }
        }
        model.rebuild();
        model
    }

    fn observe(&mut self, token: &str, count: u64) {
        if !token.chars().any(char::is_alphabetic) {
            return;
        }
        *self.counts.entry(token.to_lowercase()).or_default().entry(token.to_string()).or_default() += count;
    }

    fn rebuild(&mut self) {
        self.best = self.counts.iter().map(|(w, c)| (w.clone(), pick_best(c))).collect();
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Most frequent observed casing of `word`, or `word` itself if unseen.
    pub fn best_casing<'a>(&'a self, word: &'a str) -> &'a str {
        self.best.get(&word.to_lowercase()).map_or(word, String::as_str)
    }

    /// Maps the sentence-initial token to its most frequent casing.
    pub fn apply(&self, tokens: &[String]) -> Vec<String> {
        let mut out = tokens.to_vec();
        if let Some(first) = out.first_mut() {
            *first = self.best_casing(first).to_string();
        }
        out
    }

    /// Capitalizes the first letter of the sentence-initial token.
    pub fn invert(tokens: &[String]) -> Vec<String> {
        let mut out = tokens.to_vec();
        if let Some(first) = out.first_mut() {
            let mut chars = first.chars();
            if let Some(c) = chars.next() {
                *first = c.to_uppercase().chain(chars).collect();
            }
        }
        out
    }

    /// `word<TAB>casing<TAB>count` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (word, casings) in &self.counts {
            for (casing, count) in casings {
                writeln!(out, "{word}\t{casing}\t{count}").expect("string write");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut model = TruecaseModel::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [word, casing, count] = fields[..] else {
                return Err(Error::Format(format!("truecase line {}: expected 3 fields", i + 1)));
            };
            let count: u64 =
                count.parse().map_err(|_| Error::Format(format!("truecase line {}: bad count {count:?}", i + 1)))?;
            if casing.to_lowercase() != word {
                return Err(Error::Format(format!("truecase line {}: {casing:?} is not a casing of {word:?}", i + 1)));
            }
            model.observe(casing, count);
        }
        model.rebuild();
        Ok(model)
    }
}

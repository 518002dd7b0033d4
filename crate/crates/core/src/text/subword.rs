//! Joint byte-pair subword vocabulary.
//!
//! Words are split into characters; every piece except the last of a word
//! carries a `@@` continuation suffix, so `low` starts as `l@@ o@@ w`. The
//! most frequent adjacent pair is merged repeatedly, ties going to the
//! lexicographically smallest pair.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

const CONT: &str = "@@";

#[derive(Clone, Debug, PartialEq)]
pub struct SubwordVocabulary {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    pieces: Vec<String>,
    ids: HashMap<String, u32>,
}

fn initial_symbols(word: &str) -> Vec<String> {
    let n = word.chars().count();
    word.chars()
        .enumerate()
        .map(|(i, c)| if i + 1 < n { format!("{c}{CONT}") } else { c.to_string() })
        .collect()
}

fn join_pair(left: &str, right: &str) -> String {
    let stem = left.strip_suffix(CONT).unwrap_or(left);
    format!("{stem}{right}")
}

fn apply_merge(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            symbols[i] = join_pair(left, right);
            symbols.remove(i + 1);
        }
        i += 1;
    }
}

/// Adjacent-pair counts over a word-frequency table.
pub(crate) fn count_pairs(words: &[(Vec<String>, u64)]) -> HashMap<(String, String), u64> {
    let mut counts = HashMap::new();
    for (symbols, freq) in words {
        for w in symbols.windows(2) {
            *counts.entry((w[0].clone(), w[1].clone())).or_insert(0) += freq;
        }
    }
    counts
}

/// Learns merge rules until `vocab_size` pieces exist (reserved ids included)
/// or no pair occurs at least twice.
pub fn learn_subwords<S: AsRef<str>>(corpus: &[Vec<S>], vocab_size: usize) -> Result<SubwordVocabulary> {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for sent in corpus {
        for tok in sent {
            *freq.entry(tok.as_ref()).or_insert(0) += 1;
        }
    }
    let mut words: Vec<(Vec<String>, u64)> = freq.iter().map(|(w, f)| (initial_symbols(w), *f)).collect();
    words.sort();

    // Every observed character gets both a continuation and a word-final
    // piece so any word over the training characters can be encoded.
    let alphabet: BTreeSet<String> = words
        .iter()
        .flat_map(|(s, _)| s.iter())
        .flat_map(|sym| {
            let c = sym.strip_suffix(CONT).unwrap_or(sym);
            [c.to_string(), format!("{c}{CONT}")]
        })
        .collect();
    if vocab_size < alphabet.len() + RESERVED.len() {
        return Err(Error::Config(format!(
            "vocab_size {vocab_size} is below the {} initial pieces plus {} reserved ids",
            alphabet.len(),
            RESERVED.len()
        )));
    }

    let mut pieces: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(alphabet).collect();
    let mut known: BTreeSet<String> = pieces.iter().cloned().collect();
    let mut merges = Vec::new();
    while pieces.len() < vocab_size {
        let counts = count_pairs(&words);
        let best = counts
            .into_iter()
            .filter(|(_, c)| *c >= 2)
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((left, right), _)) = best else { break };
        for (symbols, _) in &mut words {
            apply_merge(symbols, &left, &right);
        }
        let merged = join_pair(&left, &right);
        if known.insert(merged.clone()) {
            pieces.push(merged);
        }
        merges.push((left, right));
    }
    Ok(SubwordVocabulary::from_parts(merges, pieces))
}

impl SubwordVocabulary {
    fn from_parts(merges: Vec<(String, String)>, pieces: Vec<String>) -> Self {
        let ranks = merges.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let ids = pieces.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
        SubwordVocabulary { merges, ranks, pieces, ids }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.ids.get(piece).copied()
    }

    /// Segments one word into pieces by applying merges in learned order.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|r| (*r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.merges[rank];
            apply_merge(&mut symbols, left, right);
        }
        symbols
    }

    /// Piece ids for a tokenized sentence; unknown symbols map to UNK.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .flat_map(|t| self.segment_word(t.as_ref()))
            .map(|p| self.id(&p).unwrap_or(UNK))
            .collect()
    }

    /// Rebuilds tokens from piece ids. Reserved control ids are skipped and
    /// UNK becomes a standalone `<unk>` token.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        let mut tokens = Vec::new();
        let mut current = String::new();
        for &id in ids {
            match id {
                PAD | BOS | EOS => continue,
                UNK => {
                    if !current.is_empty() {
                        tokens.push(std::mem::take(&mut current));
                    }
                    tokens.push(RESERVED[UNK as usize].to_string());
                }
                _ => {
                    let Some(piece) = self.piece(id) else { continue };
                    match piece.strip_suffix(CONT) {
                        Some(stem) => current.push_str(stem),
                        None => {
                            current.push_str(piece);
                            tokens.push(std::mem::take(&mut current));
                        }
                    }
                }
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
        tokens
    }

    /// One merge rule per line (`left right`), then `piece<TAB>id` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (l, r) in &self.merges {
            writeln!(out, "{l} {r}").expect("string write");
        }
        for (i, p) in self.pieces.iter().enumerate() {
            writeln!(out, "{p}\t{i}").expect("string write");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut merges = Vec::new();
        let mut pieces: Vec<String> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |msg: &str| Error::Format(format!("vocabulary line {}: {msg}", i + 1));
            if let Some((piece, id)) = line.split_once('\t') {
                let id: usize = id.parse().map_err(|_| bad("bad piece id"))?;
                if id != pieces.len() {
                    return Err(bad("piece ids must be dense and ordered"));
                }
                pieces.push(piece.to_string());
            } else {
                if !pieces.is_empty() {
                    return Err(bad("merge rule after piece table"));
                }
                let (l, r) = line.split_once(' ').ok_or_else(|| bad("expected `left right`"))?;
                merges.push((l.to_string(), r.to_string()));
            }
        }
        if pieces.len() < RESERVED.len() || pieces.iter().zip(RESERVED).any(|(p, r)| p != r) {
            return Err(Error::Format("vocabulary must start with the reserved pieces".into()));
        }
        Ok(Self::from_parts(merges, pieces))
    }
}

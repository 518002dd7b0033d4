use rand::seq::SliceRandom;

use super::FactoredExample;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::text::PAD;

/// A padded mini-batch. Matrices are row-major `batch_size × len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Positions of the member examples in the input slice.
    pub indices: Vec<usize>,
    pub src: Vec<u32>,
    pub lang: Vec<usize>,
    pub style: Vec<usize>,
    pub tgt: Vec<u32>,
    pub src_len: usize,
    pub tgt_len: usize,
}

impl Batch {
    pub fn from_examples(examples: &[FactoredExample], indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let src_len = indices.iter().map(|&i| examples[i].src_ids.len()).max().unwrap_or(0);
        let tgt_len = indices.iter().map(|&i| examples[i].tgt_ids.len()).max().unwrap_or(0);
        let b = indices.len();
        let mut batch = Batch {
            src: vec![PAD; b * src_len],
            lang: vec![0; b * src_len],
            style: vec![0; b * src_len],
            tgt: vec![PAD; b * tgt_len],
            indices,
            src_len,
            tgt_len,
        };
        for (row, &i) in batch.indices.iter().enumerate() {
            let ex = &examples[i];
            if ex.factor_lang.len() != ex.src_ids.len() || ex.factor_style.len() != ex.src_ids.len() {
                return Err(Error::Length(format!("example {i}: factor rows do not match source length")));
            }
            for (j, &id) in ex.src_ids.iter().enumerate() {
                batch.src[row * src_len + j] = id;
                batch.lang[row * src_len + j] = ex.factor_lang[j].index();
                batch.style[row * src_len + j] = ex.factor_style[j].index();
            }
            batch.tgt[row * tgt_len..row * tgt_len + ex.tgt_ids.len()].copy_from_slice(&ex.tgt_ids);
        }
        Ok(batch)
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Source row `i` with padding stripped.
    pub fn src_row(&self, i: usize) -> Vec<u32> {
        strip(&self.src[i * self.src_len..(i + 1) * self.src_len])
    }

    pub fn tgt_row(&self, i: usize) -> Vec<u32> {
        strip(&self.tgt[i * self.tgt_len..(i + 1) * self.tgt_len])
    }

    /// Target positions that contribute to the loss (everything after BOS
    /// that is not padding).
    pub fn target_tokens(&self) -> usize {
        (0..self.size()).map(|i| self.tgt_row(i).len().saturating_sub(1)).sum()
    }
}

fn strip(row: &[u32]) -> Vec<u32> {
    let end = row.iter().rposition(|&t| t != PAD).map_or(0, |p| p + 1);
    row[..end].to_vec()
}

/// Groups examples of similar length into batches whose summed target words
/// stay within `max_words`. Every example lands in exactly one batch; batch
/// order is shuffled with `rng`.
pub fn build_batches(examples: &[FactoredExample], max_words: usize, rng: &mut Rng) -> Result<Vec<Batch>> {
    for (i, ex) in examples.iter().enumerate() {
        let size = ex.src_ids.len().max(ex.target_words());
        if size > max_words {
            return Err(Error::Config(format!(
                "example {i} has {size} words, more than the batch limit of {max_words}"
            )));
        }
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| (examples[i].target_words(), examples[i].src_ids.len()));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current = Vec::new();
    let mut words = 0;
    for i in order {
        let w = examples[i].target_words().max(1);
        if !current.is_empty() && words + w > max_words {
            groups.push(std::mem::take(&mut current));
            words = 0;
        }
        current.push(i);
        words += w;
    }
    if !current.is_empty() {
        groups.push(current);
    }
    groups.shuffle(rng);
    groups.into_iter().map(|g| Batch::from_examples(examples, g)).collect()
}

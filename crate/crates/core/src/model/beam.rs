use crate::error::{Error, Result};

/// Supplies next-token log-probabilities for a set of equal-length prefixes.
pub trait StepScorer {
    fn log_probs(&mut self, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens without BOS; ends with EOS iff finished.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability divided by the number of generated tokens.
    pub fn score(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }

    /// Tokens without the trailing EOS.
    pub fn output(&self) -> &[u32] {
        if self.finished {
            &self.tokens[..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }
}

fn argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in row.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v > row[b]) {
            best = Some(i);
        }
    }
    best
}

fn prefixed(bos: u32, tokens: &[u32]) -> Vec<u32> {
    std::iter::once(bos).chain(tokens.iter().copied()).collect()
}

/// Argmax decoding; ties go to the lowest token id.
pub fn greedy_search(scorer: &mut dyn StepScorer, bos: u32, eos: u32, max_len: usize) -> Result<Hypothesis> {
    let mut h = Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false };
    while h.tokens.len() < max_len {
        let lp = scorer.log_probs(&[prefixed(bos, &h.tokens)])?;
        let Some(t) = argmax(&lp[0]) else { break };
        h.tokens.push(t as u32);
        h.log_prob += lp[0][t];
        if t as u32 == eos {
            h.finished = true;
            break;
        }
    }
    Ok(h)
}

struct Live {
    hyp: Hypothesis,
    greedy: bool,
}

/// Beam search maximizing length-normalized log-probability.
///
/// Each step keeps the `beam` best extensions by cumulative log-probability
/// (ties: earlier hypothesis, then lower token id). The greedy path is never
/// pruned, so the result scores at least as well as greedy decoding and
/// `beam == 1` reproduces it exactly. Returns the best finished hypothesis,
/// or the best unfinished one if nothing finished within `max_len` tokens.
pub fn beam_search(scorer: &mut dyn StepScorer, bos: u32, eos: u32, beam: usize, max_len: usize) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(Error::Config("beam size must be positive".into()));
    }
    let mut alive = vec![Live { hyp: Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false }, greedy: true }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        if alive.is_empty() || (finished.len() >= beam && !alive.iter().any(|l| l.greedy)) {
            break;
        }
        let prefixes: Vec<Vec<u32>> = alive.iter().map(|l| prefixed(bos, &l.hyp.tokens)).collect();
        let lps = scorer.log_probs(&prefixes)?;
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (i, row) in lps.iter().enumerate() {
            for (t, lp) in row.iter().enumerate() {
                if lp.is_finite() {
                    cands.push((alive[i].hyp.log_prob + lp, i, t));
                }
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let greedy_ext = alive.iter().position(|l| l.greedy).and_then(|g| argmax(&lps[g]).map(|t| (g, t)));
        let mut keep: Vec<(f64, usize, usize)> = cands.into_iter().take(beam).collect();
        if let Some((g, t)) = greedy_ext {
            if !keep.iter().any(|c| c.1 == g && c.2 == t) {
                keep.pop();
                keep.push((alive[g].hyp.log_prob + lps[g][t], g, t));
            }
        }
        let mut next = Vec::with_capacity(keep.len());
        for (lp, i, t) in keep {
            let mut tokens = alive[i].hyp.tokens.clone();
            tokens.push(t as u32);
            let is_eos = t as u32 == eos;
            let hyp = Hypothesis { tokens, log_prob: lp, finished: is_eos };
            let greedy = greedy_ext == Some((i, t));
            if is_eos {
                finished.push(hyp);
            } else {
                next.push(Live { hyp, greedy });
            }
        }
        alive = next;
    }
    let pool: Vec<Hypothesis> = if finished.is_empty() { alive.into_iter().map(|l| l.hyp).collect() } else { finished };
    let mut best: Option<Hypothesis> = None;
    for h in pool {
        if best.as_ref().is_none_or(|b| h.score() > b.score()) {
            best = Some(h);
        }
    }
    best.ok_or_else(|| Error::Contract("beam search produced no hypothesis".into()))
}

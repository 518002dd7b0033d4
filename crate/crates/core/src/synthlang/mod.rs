//! Synthetic multilingual, multi-style parallel corpora with exact
//! cross-style references.
//!
//! Languages are relexifications of one concept inventory plus a word-order
//! rule. Styles differ only at style-marked concepts and, in the first
//! language, at pronoun+auxiliary sites that style 0 renders as clitics.

mod lexicon;

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde_json::json;

pub use lexicon::{ConceptKind, Lexicon, Marking};

use crate::corpus::{write_lines, Registry};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::text::{detokenize, is_clitic};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub num_langs: usize,
    pub num_styles: usize,
    /// Content concepts; pronouns and auxiliaries come on top.
    pub num_concepts: usize,
    pub styled_fraction: f64,
    /// Chance that a styled concept is also style-marked in a language other
    /// than the first.
    pub lang_mark_rate: f64,
    /// Fraction of sentences carrying one pronoun+auxiliary site.
    pub contraction_rate: f64,
    /// Fraction of sentences built from neutral concepts only.
    pub marker_free_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            num_langs: 3,
            num_styles: 3,
            num_concepts: 240,
            styled_fraction: 0.2,
            lang_mark_rate: 0.5,
            contraction_rate: 0.35,
            marker_free_rate: 0.04,
            min_len: 4,
            max_len: 12,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_langs == 0 || self.num_styles == 0 {
            return bad("need at least one language and one style");
        }
        if self.num_concepts < 2 {
            return bad("need at least two content concepts");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 <= min_len <= max_len");
        }
        for (name, r) in [
            ("styled_fraction", self.styled_fraction),
            ("lang_mark_rate", self.lang_mark_rate),
            ("contraction_rate", self.contraction_rate),
            ("marker_free_rate", self.marker_free_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Registry {
        Registry::new((0..self.num_langs).map(|l| format!("l{l}")), (0..self.num_styles).map(|s| format!("s{s}")))
            .expect("generated names are valid")
    }
}

/// Sentence counts per split. Train and dev counts are per style.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthExample {
    pub concepts: Vec<u32>,
    /// Index into `concepts` of the pronoun of a planted site.
    pub site: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub lexicon: Lexicon,
    /// train[style]: sentences only ever realized in that style.
    pub train: Vec<Vec<SynthExample>>,
    pub dev: Vec<Vec<SynthExample>>,
    pub test: Vec<SynthExample>,
}

/// Marker positions of one realized cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Marker {
    pub position: usize,
    pub concept: u32,
    pub contraction: bool,
}

fn capacity(num_words: usize, min_len: usize, max_len: usize) -> f64 {
    (min_len..=max_len).map(|l| (num_words as f64).powi(l as i32)).sum()
}

struct SplitPlan {
    marker_free: HashSet<usize>,
    planted: HashSet<usize>,
}

fn plan_split(n: usize, spec: &SynthSpec, rng: &mut Rng) -> Result<SplitPlan> {
    let free = if spec.num_styles >= 2 { (spec.marker_free_rate * n as f64).round() as usize } else { 0 };
    let planted = (spec.contraction_rate * n as f64).round() as usize;
    if free + planted > n {
        return Err(Error::Config("marker_free_rate + contraction_rate exceed 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(SplitPlan {
        marker_free: order[..free].iter().copied().collect(),
        planted: order[free..free + planted].iter().copied().collect(),
    })
}

impl SynthCorpus {
    fn sample(&self, free: bool, planted: bool, rng: &mut Rng) -> SynthExample {
        let spec = &self.spec;
        let lex = &self.lexicon;
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let content: Vec<u32> = (0..lex.num_content() as u32)
            .filter(|&c| !free || lex.marking(c) == Marking::Neutral)
            .collect();
        let mut concepts: Vec<u32> = (0..len).map(|_| *content.choose(rng).expect("nonempty")).collect();
        if !free && spec.num_styles >= 2 && !concepts.iter().any(|&c| lex.marking(c) == Marking::Distinct) {
            let distinct: Vec<u32> =
                (0..lex.num_content() as u32).filter(|&c| lex.marking(c) == Marking::Distinct).collect();
            let at = rng.gen_range(0..len);
            concepts[at] = *distinct.choose(rng).expect("validated nonempty");
        }
        let site = planted.then(|| {
            let pronoun = rng.gen_range(lex.pronouns());
            let aux = lex.auxiliary_for(pronoun, rng);
            let at = rng.gen_range(0..=len);
            concepts.splice(at..at, [pronoun, aux]);
            at
        });
        SynthExample { concepts, site }
    }

    fn fill(&self, n: usize, stream: u64, seen: &mut HashSet<Vec<u32>>) -> Result<Vec<SynthExample>> {
        let mut rng = rng::derived(self.spec.seed, stream);
        let plan = plan_split(n, &self.spec, &mut rng)?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut tries = 0;
            loop {
                let ex = self.sample(plan.marker_free.contains(&i), plan.planted.contains(&i), &mut rng);
                if seen.insert(ex.concepts.clone()) {
                    out.push(ex);
                    break;
                }
                tries += 1;
                if tries > 1000 {
                    return Err(Error::Config("concept vocabulary too small for the requested distinct sentences".into()));
                }
            }
        }
        Ok(out)
    }

    pub fn realize(&self, ex: &SynthExample, lang: usize, style: usize) -> Vec<String> {
        self.lexicon.render(&ex.concepts, lang, style)
    }

    /// Token positions in the rendered cell whose form depends on style.
    pub fn markers(&self, ex: &SynthExample, lang: usize) -> Vec<Marker> {
        let order: Vec<usize> = permuted_positions(ex.concepts.len(), lang);
        order
            .iter()
            .enumerate()
            .filter_map(|(position, &k)| {
                let concept = ex.concepts[k];
                self.lexicon.is_style_marked(concept, lang).then(|| Marker {
                    position,
                    concept,
                    contraction: self.lexicon.kind(concept) == ConceptKind::Aux,
                })
            })
            .collect()
    }

    /// Planted clitics in a style-0 realization of `examples` in `lang`.
    pub fn planted_contractions(&self, examples: &[SynthExample], lang: usize) -> usize {
        examples.iter().map(|e| self.markers(e, lang).iter().filter(|m| m.contraction).count()).sum()
    }

    /// Writes the corpus under `dir`:
    /// `train/{style}.{lang}.txt`, `dev/...`, `test/{style}.{lang}.txt`
    /// (line-aligned across every cell), `test/ground_truth.jsonl`,
    /// `synonyms.tsv`, `registry.tsv` and `synth.cfg`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let reg = self.spec.registry();
        for sub in ["train", "dev", "test"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        let cell_name = |lang: usize, style: usize| format!("s{style}.l{lang}.txt");
        for (sub, splits) in [("train", &self.train), ("dev", &self.dev)] {
            for (style, exs) in splits.iter().enumerate() {
                for lang in 0..self.spec.num_langs {
                    let lines: Vec<String> = exs.iter().map(|e| detokenize(&self.realize(e, lang, style))).collect();
                    write_lines(&dir.join(sub).join(cell_name(lang, style)), &lines)?;
                }
            }
        }
        let mut truth = String::new();
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); self.spec.num_langs * self.spec.num_styles];
        for (id, ex) in self.test.iter().enumerate() {
            let mut realized = serde_json::Map::new();
            let mut markers = Vec::new();
            for lang in 0..self.spec.num_langs {
                let lang_markers = self.markers(ex, lang);
                for style in 0..self.spec.num_styles {
                    let text = detokenize(&self.realize(ex, lang, style));
                    realized.insert(format!("l{lang}.s{style}"), json!(text));
                    cells[lang * self.spec.num_styles + style].push(text);
                    for m in &lang_markers {
                        markers.push(json!({
                            "lang": format!("l{lang}"),
                            "style": format!("s{style}"),
                            "position": m.position,
                            "concept": m.concept,
                            "kind": if m.contraction { "contraction" } else { "synonym" },
                        }));
                    }
                }
            }
            let line = json!({"id": id, "concept_ids": ex.concepts, "cells": realized, "markers": markers});
            writeln!(truth, "{line}").expect("string write");
        }
        for lang in 0..self.spec.num_langs {
            for style in 0..self.spec.num_styles {
                write_lines(&dir.join("test").join(cell_name(lang, style)), &cells[lang * self.spec.num_styles + style])?;
            }
        }
        let path = dir.join("test").join("ground_truth.jsonl");
        fs::write(&path, truth).map_err(|e| Error::io(path, e))?;
        let syn: Vec<String> = self.lexicon.synonym_table().into_iter().map(|(w, id)| format!("{w}\t{id}")).collect();
        write_lines(&dir.join("synonyms.tsv"), &syn)?;
        let path = dir.join("registry.tsv");
        fs::write(&path, reg.to_text()).map_err(|e| Error::io(path, e))?;
        let path = dir.join("synth.cfg");
        fs::write(&path, spec_to_text(&self.spec)).map_err(|e| Error::io(path, e))
    }
}

fn permuted_positions(len: usize, lang: usize) -> Vec<usize> {
    lexicon::permute((0..len).collect(), lang)
}

pub fn spec_to_text(spec: &SynthSpec) -> String {
    format!(
        "seed={}\nnum_langs={}\nnum_styles={}\nnum_concepts={}\nstyled_fraction={}\nlang_mark_rate={}\ncontraction_rate={}\nmarker_free_rate={}\nmin_len={}\nmax_len={}\n",
        spec.seed,
        spec.num_langs,
        spec.num_styles,
        spec.num_concepts,
        spec.styled_fraction,
        spec.lang_mark_rate,
        spec.contraction_rate,
        spec.marker_free_rate,
        spec.min_len,
        spec.max_len
    )
}

/// Builds the lexicon and all splits. Every concept sequence is used once
/// across train, dev and test, and training sentences of different styles
/// are disjoint.
pub fn generate(spec: &SynthSpec, sizes: SplitSizes) -> Result<SynthCorpus> {
    spec.validate()?;
    let lexicon = Lexicon::generate(spec, &mut rng::derived(spec.seed, 0))?;
    let total = spec.num_styles * (sizes.train + sizes.dev) + sizes.test;
    let neutral = (0..spec.num_concepts as u32).filter(|&c| lexicon.marking(c) == Marking::Neutral).count();
    if capacity(neutral.max(1), spec.min_len, spec.max_len) < 2.0 * total as f64 {
        return Err(Error::Config(format!(
            "{} content concepts cannot yield {total} distinct sentences of length {}..={}",
            spec.num_concepts, spec.min_len, spec.max_len
        )));
    }
    let mut corpus = SynthCorpus { spec: spec.clone(), lexicon, train: Vec::new(), dev: Vec::new(), test: Vec::new() };
    let mut seen = HashSet::new();
    let mut stream = 1;
    for _ in 0..spec.num_styles {
        let t = corpus.fill(sizes.train, stream, &mut seen)?;
        let d = corpus.fill(sizes.dev, stream + 1, &mut seen)?;
        corpus.train.push(t);
        corpus.dev.push(d);
        stream += 2;
    }
    corpus.test = corpus.fill(sizes.test, stream, &mut seen)?;
    Ok(corpus)
}

/// Counts for style-transfer scoring. A site is a token position where the
/// source-style and target-style references of the same sentence differ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransferScore {
    pub contraction_sites: usize,
    pub contractions_converted: usize,
    pub synonym_sites: usize,
    pub synonyms_converted: usize,
}

impl TransferScore {
    /// Fraction of contraction sites realized in the target style's form.
    pub fn marker_conversion(&self) -> Option<f64> {
        (self.contraction_sites > 0).then(|| self.contractions_converted as f64 / self.contraction_sites as f64)
    }

    pub fn synonym_accuracy(&self) -> Option<f64> {
        (self.synonym_sites > 0).then(|| self.synonyms_converted as f64 / self.synonym_sites as f64)
    }
}

/// Scores tokenized system outputs against the source-style and
/// target-style references of the same sentences. A site counts as
/// converted when its target form occurs in the output; repeated forms are
/// matched as multisets. Comparison ignores case.
pub fn score_style_transfer<S: AsRef<str>>(
    outputs: &[Vec<S>],
    source_refs: &[Vec<S>],
    target_refs: &[Vec<S>],
) -> Result<TransferScore> {
    if outputs.len() != source_refs.len() || outputs.len() != target_refs.len() {
        return Err(Error::Alignment(format!(
            "{} outputs, {} source references, {} target references",
            outputs.len(),
            source_refs.len(),
            target_refs.len()
        )));
    }
    let mut score = TransferScore::default();
    for (i, ((out, src), tgt)) in outputs.iter().zip(source_refs).zip(target_refs).enumerate() {
        if src.len() != tgt.len() {
            return Err(Error::Alignment(format!("sentence {i}: references have {} and {} tokens", src.len(), tgt.len())));
        }
        let mut needed: HashMap<String, (usize, bool)> = HashMap::new();
        for (a, b) in src.iter().zip(tgt) {
            let (a, b) = (a.as_ref().to_lowercase(), b.as_ref().to_lowercase());
            if a != b {
                let contraction = is_clitic(&a) || is_clitic(&b);
                needed.entry(b).or_insert((0, contraction)).0 += 1;
            }
        }
        let mut have: HashMap<String, usize> = HashMap::new();
        for t in out {
            *have.entry(t.as_ref().to_lowercase()).or_insert(0) += 1;
        }
        for (form, (n, contraction)) in needed {
            let hit = n.min(have.get(&form).copied().unwrap_or(0));
            if contraction {
                score.contraction_sites += n;
                score.contractions_converted += hit;
            } else {
                score.synonym_sites += n;
                score.synonyms_converted += hit;
            }
        }
    }
    Ok(score)
}

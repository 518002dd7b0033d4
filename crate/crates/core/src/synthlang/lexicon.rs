use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::SynthSpec;
use crate::error::{Error, Result};
use crate::rng::Rng;

const PRONOUNS: [&str; 6] = ["he", "she", "it", "we", "you", "they"];
/// Expanded and clitic form of each auxiliary, in the contracting language.
const AUXILIARIES: [(&str, &str); 5] = [("will", "'ll"), ("is", "'s"), ("are", "'re"), ("have", "'ve"), ("would", "'d")];

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const CODAS: [&str; 5] = ["", "", "n", "r", "k"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConceptKind {
    Content,
    Pronoun,
    Aux,
}

/// How a content concept varies across styles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marking {
    Neutral,
    /// Every style has its own form.
    Distinct,
    /// Style 0 has its own form; all other styles share one.
    SharedFormal,
}

/// Per-language concept→wordform tables, one column per style.
#[derive(Clone, Debug)]
pub struct Lexicon {
    num_langs: usize,
    num_styles: usize,
    num_content: usize,
    kinds: Vec<ConceptKind>,
    marking: Vec<Marking>,
    /// forms[concept][lang][style]
    forms: Vec<Vec<Vec<String>>>,
    inverse: Vec<Vec<HashMap<String, u32>>>,
}

fn pseudo_word(rng: &mut Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).expect("nonempty"));
        w.push_str(VOWELS.choose(rng).expect("nonempty"));
    }
    w.push_str(CODAS.choose(rng).expect("nonempty"));
    w
}

impl Lexicon {
    pub(super) fn generate(spec: &SynthSpec, rng: &mut Rng) -> Result<Self> {
        let (m, n, c) = (spec.num_langs, spec.num_styles, spec.num_concepts);
        let mut used: BTreeSet<String> = PRONOUNS.iter().chain(AUXILIARIES.iter().flat_map(|(a, b)| [a, b])).map(|s| s.to_string()).collect();
        let mut fresh = |rng: &mut Rng| -> String {
            loop {
                let w = pseudo_word(rng);
                if used.insert(w.clone()) {
                    return w;
                }
            }
        };

        let mut marking = vec![Marking::Neutral; c];
        if n >= 2 {
            let styled = ((spec.styled_fraction * c as f64).round() as usize).min(c);
            let mut order: Vec<usize> = (0..c).collect();
            order.shuffle(rng);
            let distinct = if n == 2 { styled } else { styled.div_ceil(2) };
            for (k, &concept) in order.iter().take(styled).enumerate() {
                marking[concept] = if k < distinct { Marking::Distinct } else { Marking::SharedFormal };
            }
            if distinct == 0 {
                return Err(Error::Config("styled_fraction leaves no style-distinguishing concept".into()));
            }
        }

        let mut forms = Vec::with_capacity(c + PRONOUNS.len() + AUXILIARIES.len());
        let mut kinds = Vec::new();
        for concept in 0..c {
            let mut per_lang = Vec::with_capacity(m);
            for lang in 0..m {
                // the first language marks every styled concept, the others
                // only a random subset
                let marked = marking[concept] != Marking::Neutral && (lang == 0 || rng.gen_bool(spec.lang_mark_rate));
                let row: Vec<String> = if !marked {
                    vec![fresh(rng); n]
                } else if marking[concept] == Marking::Distinct {
                    (0..n).map(|_| fresh(rng)).collect()
                } else {
                    let informal = fresh(rng);
                    let formal = fresh(rng);
                    (0..n).map(|s| if s == 0 { informal.clone() } else { formal.clone() }).collect()
                };
                per_lang.push(row);
            }
            forms.push(per_lang);
            kinds.push(ConceptKind::Content);
        }
        for p in PRONOUNS {
            let row = (0..m).map(|lang| vec![if lang == 0 { p.to_string() } else { fresh(rng) }; n]).collect();
            forms.push(row);
            kinds.push(ConceptKind::Pronoun);
        }
        for (full, clitic) in AUXILIARIES {
            let row = (0..m)
                .map(|lang| {
                    if lang == 0 {
                        (0..n).map(|s| if s == 0 { clitic } else { full }.to_string()).collect()
                    } else {
                        vec![fresh(rng); n]
                    }
                })
                .collect();
            forms.push(row);
            kinds.push(ConceptKind::Aux);
        }

        let mut inverse = vec![vec![HashMap::new(); n]; m];
        for (concept, per_lang) in forms.iter().enumerate() {
            for (lang, row) in per_lang.iter().enumerate() {
                for (style, w) in row.iter().enumerate() {
                    inverse[lang][style].insert(w.clone(), concept as u32);
                }
            }
        }
        Ok(Lexicon { num_langs: m, num_styles: n, num_content: c, kinds, marking, forms, inverse })
    }

    pub fn num_concepts(&self) -> usize {
        self.forms.len()
    }

    pub fn num_content(&self) -> usize {
        self.num_content
    }

    pub fn kind(&self, concept: u32) -> ConceptKind {
        self.kinds[concept as usize]
    }

    pub fn marking(&self, concept: u32) -> Marking {
        self.marking.get(concept as usize).copied().unwrap_or(Marking::Neutral)
    }

    pub(super) fn pronouns(&self) -> std::ops::Range<u32> {
        let start = self.num_content as u32;
        start..start + PRONOUNS.len() as u32
    }

    /// Auxiliary concept that agrees with a pronoun.
    pub(super) fn auxiliary_for(&self, pronoun: u32, rng: &mut Rng) -> u32 {
        let aux0 = self.pronouns().end;
        let singular = pronoun - self.pronouns().start < 3;
        // will, is|are, have (plural only), would
        let options: &[u32] = if singular { &[0, 1, 4] } else { &[0, 2, 3, 4] };
        aux0 + *options.choose(rng).expect("nonempty")
    }

    pub fn form(&self, concept: u32, lang: usize, style: usize) -> &str {
        &self.forms[concept as usize][lang][style]
    }

    /// True when the concept's surface form differs between some styles of
    /// this language.
    pub fn is_style_marked(&self, concept: u32, lang: usize) -> bool {
        let row = &self.forms[concept as usize][lang];
        row.iter().any(|w| *w != row[0])
    }

    /// Word → synset id. Each style-marked (concept, language) cell is one
    /// synset holding its variants.
    pub fn synonym_table(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        let mut next = 0;
        for concept in 0..self.num_concepts() as u32 {
            for lang in 0..self.num_langs {
                if self.is_style_marked(concept, lang) {
                    let forms: BTreeSet<&String> = self.forms[concept as usize][lang].iter().collect();
                    out.extend(forms.into_iter().map(|w| (w.clone(), next)));
                    next += 1;
                }
            }
        }
        out
    }

    /// Surface tokens of a concept sequence, word order and casing applied.
    pub fn render(&self, concepts: &[u32], lang: usize, style: usize) -> Vec<String> {
        let words: Vec<String> = concepts.iter().map(|&c| self.form(c, lang, style).to_string()).collect();
        let mut words = permute(words, lang);
        if let Some(first) = words.first_mut() {
            *first = capitalize(first);
        }
        words.push(".".to_string());
        words
    }

    /// Inverse of `render`.
    pub fn parse(&self, tokens: &[String], lang: usize, style: usize) -> Result<Vec<u32>> {
        let body = match tokens.split_last() {
            Some((last, body)) if last == "." => body,
            _ => return Err(Error::Format("synthetic sentence must end with '.'".into())),
        };
        let table = &self.inverse[lang][style];
        let concepts = body
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let w = if i == 0 { decapitalize(w) } else { w.clone() };
                table.get(&w).copied().ok_or_else(|| Error::Format(format!("unknown word {w:?} for lang {lang} style {style}")))
            })
            .collect::<Result<Vec<u32>>>()?;
        Ok(permute(concepts, lang))
    }

    pub fn num_langs(&self) -> usize {
        self.num_langs
    }

    pub fn num_styles(&self) -> usize {
        self.num_styles
    }
}

/// Word-order rule per language: identity, reversal, adjacent-pair swap,
/// cycling for further languages. Every rule is its own inverse.
pub(super) fn permute<T>(mut words: Vec<T>, lang: usize) -> Vec<T> {
    match lang % 3 {
        0 => {}
        1 => words.reverse(),
        _ => {
            for pair in words.chunks_mut(2) {
                pair.reverse();
            }
        }
    }
    words
}

fn capitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

fn decapitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(c) => c.to_lowercase().chain(cs).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn permutations_are_involutions() {
        for lang in 0..4 {
            let w: Vec<u32> = (0..7).collect();
            assert_eq!(permute(permute(w.clone(), lang), lang), w);
        }
        assert_eq!(permute(vec![1, 2, 3], 2), vec![2, 1, 3]);
    }

    #[test]
    fn bijective_per_cell() {
        let spec = SynthSpec::default();
        let lex = Lexicon::generate(&spec, &mut rng::seeded(3)).unwrap();
        for lang in 0..spec.num_langs {
            for style in 0..spec.num_styles {
                let words: BTreeSet<&str> = (0..lex.num_concepts() as u32).map(|c| lex.form(c, lang, style)).collect();
                assert_eq!(words.len(), lex.num_concepts());
            }
        }
        assert_eq!(lex.form(lex.pronouns().end, 0, 0), "'ll");
        assert_eq!(lex.form(lex.pronouns().end, 0, 2), "will");
    }
}

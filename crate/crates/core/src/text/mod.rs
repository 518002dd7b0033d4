//! Preprocessing: tokenization, truecasing and joint subword segmentation,
//! each with an exact inverse for post-processing model output.

mod subword;
mod tokenize;
mod truecase;

pub use subword::{learn_subwords, SubwordVocabulary, BOS, EOS, PAD, RESERVED, UNK};
pub use tokenize::{detokenize, is_clitic, normalize_whitespace, tokenize, TokenizedSentence};
pub use truecase::TruecaseModel;

/// Trained preprocessing models shared by every language and style.
#[derive(Clone, Debug)]
pub struct TextPipeline {
    pub truecaser: TruecaseModel,
    pub vocab: SubwordVocabulary,
}

impl TextPipeline {
    /// Tokenizes and truecases raw text; the input to subword encoding.
    pub fn prepare(&self, raw: &str) -> Vec<String> {
        self.truecaser.apply(&tokenize(raw).tokens)
    }

    pub fn encode(&self, raw: &str) -> Vec<u32> {
        self.vocab.encode(&self.prepare(raw))
    }

    /// Subword ids back to tokenized, sentence-cased text tokens.
    pub fn decode_tokens(&self, ids: &[u32]) -> Vec<String> {
        TruecaseModel::invert(&self.vocab.decode(ids))
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        detokenize(&self.decode_tokens(ids))
    }
}

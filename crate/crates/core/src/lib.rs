//! Factored multilingual, multi-style neural machine translation.
//!
//! Source tokens carry two extra factors naming the desired target language
//! and target style. Training only ever pairs sentences of the same style;
//! at inference the style factor can be swapped to convert between styles,
//! both across languages and within one language.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod synthlang;
pub mod tensor;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};

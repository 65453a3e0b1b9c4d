//! Translation of code-mixed Bengali–English text (Roman script) into
//! native-script Bengali.
//!
//! The pipeline tags each word with its language, groups the words into
//! same-language segments, back-transliterates Bengali segments, translates
//! English segments with a character-level encoder–decoder, joins the
//! results in order and optionally reorders the output with an n-gram
//! language model. The [`eval`] module provides corpus BLEU, TER and Fleiss'
//! kappa for assessing the output.

pub mod error;
pub mod eval;
pub mod fixtures;
pub mod mt;
pub mod neural;
pub mod pipeline;
pub mod reorder;
pub mod tagger;
pub mod text;
mod transduce;
pub mod translit;

pub use transduce::TransduceAccuracy;

pub use error::{Error, Result};

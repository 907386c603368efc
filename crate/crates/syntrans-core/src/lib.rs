//! Language-side core of the syntrans testbed: a closed-vocabulary grammar,
//! the hierarchical/linear transformation rules, dataset and corpus builders,
//! word-level and subword tokenizers, and the small statistics toolbox.

pub mod data;
pub mod grammar;
pub mod stats;
pub mod tokenizer;
pub mod transform;

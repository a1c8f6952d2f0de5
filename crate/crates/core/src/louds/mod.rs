//! Succinct read-only n-gram models: a LOUDS trie navigated with rank/select,
//! with 16-bit quantized probabilities and backoff weights.

mod bitvector;
mod trie;

pub use bitvector::BitVectorRS;
pub use trie::{louds_bits, Codebook, LoudsNGramModel, ROOT, ZERO_CODE};

#[cfg(test)]
mod tests;

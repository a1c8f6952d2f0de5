//! Compact CTC speech decoding engine.
//!
//! The crate covers the on-device pipeline end to end: 8-bit quantized LSTM
//! acoustic-model inference ([`am`], [`quant`]), SVD compression of trained
//! models ([`svd`]), Katz n-gram language models with pruning and
//! interpolation ([`ngram`]), a succinct LOUDS representation of the
//! rescoring LM ([`louds`]), CTC decoder-graph construction with runtime
//! contact injection ([`graph`]) and time-synchronous beam search with
//! on-the-fly rescoring and biasing ([`decoder`]).

mod binio;

pub mod am;
pub mod decoder;
pub mod error;
pub mod footprint;
pub mod graph;
pub mod louds;
pub mod matrix;
pub mod ngram;
pub mod quant;
pub mod svd;

pub use error::{Error, Result};
pub use matrix::Matrix;

//! Beam-search decoding of posteriorgrams against a CTC decoder graph, with
//! on-the-fly LM rescoring and phrase biasing.

mod bench;
mod bias;
mod config;
mod rescore;
mod search;

pub use bench::{benchmark, median, BenchReport};
pub use bias::{apply_bias, BiasModel, BiasPos};
pub use config::DecoderConfig;
pub use rescore::{rescore_delta, RescoringLm};
pub use search::{decode, CostBreakdown, DecodeResult};

use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("integer accumulator overflow risk: {0}")]
    Overflow(String),

    #[error("invalid rank {rank} for layer with {cells} cells")]
    InvalidRank { rank: usize, cells: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("factorization plan has {plan} ranks but the model has {layers} layers")]
    Plan { plan: usize, layers: usize },

    #[error("invalid interpolation weights: {0}")]
    InvalidWeights(String),

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("LM words missing from lexicon: {}", .0.join(", "))]
    Composition(Vec<String>),

    #[error("word id {0} is outside the vocabulary")]
    OutOfVocabulary(u32),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

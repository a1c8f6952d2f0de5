//! Backoff n-gram language models: Katz training, entropy pruning, linear and
//! Bayesian interpolation, ARPA text I/O and perplexity.
//!
//! Probabilities and backoff weights are stored as log10 values, as in ARPA files.

mod arpa;
mod interpolate;
mod katz;
mod model;
mod prune;
mod vocab;

pub use arpa::{arpa_string, read_arpa, write_arpa};
pub use interpolate::{
    estimate_linear_weights, interpolate_bayesian, interpolate_linear, simplex_grid, sweep_priors, task_posteriors,
    PriorSweep,
};
pub use katz::{count_ngrams, good_turing_discounts, train_katz, GT_MAX_COUNT, MAX_ORDER};
pub use model::{NGramEntry, NGramModel, LOG_ZERO};
pub(crate) use model::GramTable;
pub use prune::{entropy_cost, prune_entropy};
pub use vocab::{
    parse_corpus, read_corpus, Vocabulary, WordId, BOS, BOS_TOKEN, CONTACTS_CLASS, EOS, EOS_TOKEN, MAX_VOCAB, UNK,
    UNK_TOKEN,
};

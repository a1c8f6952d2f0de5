use crate::louds::LoudsNGramModel;
use crate::ngram::{NGramModel, Vocabulary, WordId, LOG_ZERO};

/// Language model queried during search.
pub trait RescoringLm {
    fn order(&self) -> usize;
    fn vocab(&self) -> &Vocabulary;
    /// log10 p(word | history).
    fn log_prob(&self, word: WordId, history: &[WordId]) -> f64;
}

impl RescoringLm for NGramModel {
    fn order(&self) -> usize {
        NGramModel::order(self)
    }

    fn vocab(&self) -> &Vocabulary {
        NGramModel::vocab(self)
    }

    fn log_prob(&self, word: WordId, history: &[WordId]) -> f64 {
        NGramModel::log_prob(self, word, history)
    }
}

impl RescoringLm for LoudsNGramModel {
    fn order(&self) -> usize {
        LoudsNGramModel::order(self)
    }

    fn vocab(&self) -> &Vocabulary {
        LoudsNGramModel::vocab(self)
    }

    fn log_prob(&self, word: WordId, history: &[WordId]) -> f64 {
        self.lookup(word, history).unwrap_or(LOG_ZERO)
    }
}

/// Score change that replaces `small_cost` (the first-pass LM cost already on
/// the path for this word) with the rescoring LM's cost of `word` after `history`.
pub fn rescore_delta(lm: &dyn RescoringLm, word: WordId, history: &[WordId], small_cost: f64) -> f64 {
    -lm.log_prob(word, history) - small_cost
}

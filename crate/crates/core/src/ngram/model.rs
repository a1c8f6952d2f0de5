use std::collections::HashMap;

use super::vocab::{Vocabulary, WordId, BOS};
use crate::error::{Error, Result};

/// Log10 value used for impossible events, as in ARPA files.
pub const LOG_ZERO: f64 = -99.0;

/// Below this, left-over or backoff mass is treated as exhausted.
const MASS_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramEntry {
    /// log10 p(w | h)
    pub log_prob: f64,
    /// log10 backoff weight when this n-gram is used as a history, else 0.
    pub backoff: f64,
}

impl NGramEntry {
    pub fn new(log_prob: f64, backoff: f64) -> Self {
        Self { log_prob, backoff }
    }
}

pub(crate) fn pow10(lp: f64) -> f64 {
    if lp <= LOG_ZERO {
        0.0
    } else {
        10f64.powf(lp)
    }
}

pub(crate) fn log10_or_zero(p: f64) -> f64 {
    if p > 0.0 {
        p.log10().max(LOG_ZERO)
    } else {
        LOG_ZERO
    }
}

pub(crate) type GramTable = HashMap<Vec<WordId>, NGramEntry>;

/// Backoff n-gram model. `grams[n - 1]` holds the explicit n-grams.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    vocab: Vocabulary,
    grams: Vec<GramTable>,
}

impl NGramModel {
    /// Assembles a model from explicit tables. Every vocabulary word must have a unigram.
    pub fn from_tables(vocab: Vocabulary, grams: Vec<GramTable>) -> Result<Self> {
        let order = grams.len();
        if order == 0 {
            return Err(Error::InvalidInput("model needs at least unigrams".into()));
        }
        for (n, table) in grams.iter().enumerate() {
            for key in table.keys() {
                if key.len() != n + 1 {
                    return Err(Error::InvalidInput(format!(
                        "{}-gram stored in the {}-gram table",
                        key.len(),
                        n + 1
                    )));
                }
                if let Some(&w) = key.iter().find(|&&w| w as usize >= vocab.len()) {
                    return Err(Error::OutOfVocabulary(w));
                }
            }
        }
        for id in 0..vocab.len() as WordId {
            if !grams[0].contains_key(&vec![id]) {
                return Err(Error::InvalidInput(format!(
                    "vocabulary word {:?} has no unigram",
                    vocab.word(id).unwrap_or("?")
                )));
            }
        }
        Ok(Self { order, vocab, grams })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn entry(&self, ngram: &[WordId]) -> Option<&NGramEntry> {
        if ngram.is_empty() || ngram.len() > self.order {
            return None;
        }
        self.grams[ngram.len() - 1].get(ngram)
    }

    pub fn contains(&self, ngram: &[WordId]) -> bool {
        self.entry(ngram).is_some()
    }

    /// Number of explicit n-grams of each order.
    pub fn counts(&self) -> Vec<usize> {
        self.grams.iter().map(HashMap::len).collect()
    }

    pub fn num_ngrams(&self) -> usize {
        self.grams.iter().map(HashMap::len).sum()
    }

    /// Explicit `n`-grams sorted by id sequence.
    pub fn sorted_ngrams(&self, n: usize) -> Vec<(&[WordId], NGramEntry)> {
        let mut v: Vec<(&[WordId], NGramEntry)> = self.grams[n - 1]
            .iter()
            .map(|(k, e)| (k.as_slice(), *e))
            .collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub(crate) fn tables(&self) -> &[GramTable] {
        &self.grams
    }

    /// log10 backoff weight of `history`, 0 if it is not an explicit n-gram.
    pub fn backoff(&self, history: &[WordId]) -> f64 {
        self.entry(history).map_or(0.0, |e| e.backoff)
    }

    /// log10 p(word | history) under the backoff recursion, using at most `order - 1`
    /// trailing history words.
    pub fn log_prob(&self, word: WordId, history: &[WordId]) -> f64 {
        let h = &history[history.len().saturating_sub(self.order - 1)..];
        let mut key = Vec::with_capacity(h.len() + 1);
        let mut acc = 0.0;
        for start in 0..=h.len() {
            let ctx = &h[start..];
            key.clear();
            key.extend_from_slice(ctx);
            key.push(word);
            if let Some(e) = self.grams[ctx.len()].get(&key) {
                return if e.log_prob <= LOG_ZERO { LOG_ZERO } else { acc + e.log_prob };
            }
            if !ctx.is_empty() {
                let b = self.backoff(ctx);
                if b <= LOG_ZERO {
                    return LOG_ZERO;
                }
                acc += b;
            }
        }
        LOG_ZERO
    }

    pub fn prob(&self, word: WordId, history: &[WordId]) -> f64 {
        pow10(self.log_prob(word, history))
    }

    /// Words that can be predicted: the whole vocabulary except `<s>`.
    pub fn predicted_words(&self) -> impl Iterator<Item = WordId> + '_ {
        (0..self.vocab.len() as WordId).filter(|&w| w != BOS)
    }

    /// log10 of the probability of the word string `history` by the chain rule.
    /// A leading `<s>` is given probability one. Each factor conditions on at
    /// most `order - 1` previous words.
    pub fn history_log_prob(&self, history: &[WordId]) -> f64 {
        let start = usize::from(history.first() == Some(&BOS));
        (start..history.len())
            .map(|i| self.log_prob(history[i], &history[..i]))
            .sum()
    }

    /// log10 probability of a sentence (without boundary markers), including `</s>`.
    pub fn sentence_log_prob(&self, words: &[WordId]) -> f64 {
        let mut padded = Vec::with_capacity(words.len() + 2);
        padded.push(BOS);
        padded.extend_from_slice(words);
        padded.push(super::vocab::EOS);
        self.history_log_prob(&padded)
    }

    /// Per-token perplexity over sentences of ids, counting one `</s>` per sentence.
    pub fn perplexity_ids(&self, sentences: &[Vec<WordId>]) -> Result<f64> {
        let tokens: usize = sentences.iter().map(|s| s.len() + 1).sum();
        if tokens == 0 {
            return Err(Error::InvalidInput("perplexity of empty text".into()));
        }
        let total: f64 = sentences.iter().map(|s| self.sentence_log_prob(s)).sum();
        Ok(10f64.powf(-total / tokens as f64))
    }

    /// Perplexity of tokenized text; out-of-vocabulary words score as `<unk>`.
    pub fn perplexity<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<f64> {
        let ids: Vec<Vec<WordId>> = sentences.iter().map(|s| self.vocab.encode(s)).collect();
        self.perplexity_ids(&ids)
    }

    /// Every n-gram's (n-1)-prefix and (n-1)-suffix is also explicit.
    pub fn is_well_formed(&self) -> bool {
        self.grams.iter().skip(1).all(|table| {
            table.keys().all(|k| {
                let n = k.len();
                self.grams[n - 2].contains_key(&k[..n - 1]) && self.grams[n - 2].contains_key(&k[1..])
            })
        })
    }

    /// Recomputes all backoff weights so every history normalizes. Histories whose
    /// lower-order distribution is already fully covered get their explicit
    /// probabilities rescaled to sum to one instead.
    pub(crate) fn recompute_backoffs(&mut self) {
        normalize_unigrams(&mut self.grams[0]);
        for table in &mut self.grams[..self.order - 1] {
            for e in table.values_mut() {
                e.backoff = 0.0;
            }
        }
        for n in 1..self.order {
            let mut continuations: HashMap<&[WordId], Vec<(WordId, f64)>> = HashMap::new();
            for (key, e) in &self.grams[n] {
                continuations
                    .entry(&key[..n])
                    .or_default()
                    .push((key[n], pow10(e.log_prob)));
            }
            let mut updates: Vec<(Vec<WordId>, f64, Option<f64>)> = Vec::with_capacity(continuations.len());
            for (ctx, words) in continuations {
                let seen: f64 = words.iter().map(|&(_, p)| p).sum();
                let lower: f64 = words.iter().map(|&(w, _)| self.prob(w, &ctx[1..])).sum();
                let left = 1.0 - seen;
                let denom = 1.0 - lower;
                let (backoff, rescale) = if left <= MASS_EPS {
                    (LOG_ZERO, (seen > 1.0).then_some(1.0 / seen))
                } else if denom <= MASS_EPS {
                    (0.0, Some(1.0 / seen))
                } else {
                    ((left / denom).log10(), None)
                };
                updates.push((ctx.to_vec(), backoff, rescale));
            }
            let mut shifts: HashMap<Vec<WordId>, f64> = HashMap::new();
            for (ctx, backoff, rescale) in updates {
                if let Some(e) = self.grams[n - 1].get_mut(&ctx) {
                    e.backoff = backoff;
                }
                if let Some(scale) = rescale {
                    shifts.insert(ctx, scale.log10());
                }
            }
            if !shifts.is_empty() {
                for (key, e) in self.grams[n].iter_mut() {
                    if let Some(shift) = shifts.get(&key[..n]) {
                        if e.log_prob > LOG_ZERO {
                            e.log_prob += shift;
                        }
                    }
                }
            }
        }
    }
}

/// Rescales unigram probabilities (excluding `<s>`) to sum to one.
fn normalize_unigrams(unigrams: &mut GramTable) {
    let total: f64 = unigrams
        .iter()
        .filter(|(k, _)| k[0] != BOS)
        .map(|(_, e)| pow10(e.log_prob))
        .sum();
    if total > 0.0 && (total - 1.0).abs() > 1e-12 {
        let shift = total.log10();
        for (k, e) in unigrams.iter_mut() {
            if k[0] != BOS && e.log_prob > LOG_ZERO {
                e.log_prob -= shift;
            }
        }
    }
    if let Some(e) = unigrams.get_mut(&vec![BOS]) {
        e.log_prob = LOG_ZERO;
    }
}

use std::collections::{BTreeMap, HashMap};

use super::fst::{Arc, ClassSlot, StateId, WeightedFst, EPSILON, NO_WORD};
use super::lexicon::{lexicon_paths, PhoneId};
use crate::error::{Error, Result};
use crate::ngram::{NGramModel, WordId, BOS, EOS, LOG_ZERO, UNK};

/// How the LM's backoff structure is laid out in the composed graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackoffMode {
    /// Explicit n-grams become word arcs; backoff is an epsilon arc weighted
    /// by the backoff weight. Compact, but a word can also be reached through
    /// a backoff arc when an explicit n-gram exists.
    #[default]
    Epsilon,
    /// Every history state gets an arc for every word, weighted by the exact
    /// backoff-evaluated probability. Each path then scores exactly its word
    /// sequence's LM probability; size grows with states × vocabulary.
    Expanded,
}

struct Builder<'a> {
    fst: WeightedFst,
    lm: &'a NGramModel,
    prons: &'a HashMap<WordId, Vec<Vec<PhoneId>>>,
    states: HashMap<Vec<WordId>, StateId>,
}

impl Builder<'_> {
    /// State of the longest suffix of `history` (at most order - 1 words) that is a state.
    fn state_for(&self, history: &[WordId]) -> StateId {
        let keep = self.lm.order() - 1;
        let h = &history[history.len().saturating_sub(keep)..];
        (0..=h.len())
            .find_map(|i| self.states.get(&h[i..]).copied())
            .expect("the empty history is always a state")
    }

    fn add_word(&mut self, from: StateId, word: WordId, cost: f64, to: StateId) {
        if self.lm.vocab().is_class(word) {
            let entry = self.fst.add_state();
            let exit = self.fst.add_state();
            self.fst.add_arc(from, Arc::new(EPSILON, NO_WORD, cost, entry));
            self.fst.add_arc(exit, Arc::new(EPSILON, NO_WORD, 0.0, to));
            self.fst.add_slot(ClassSlot {
                class_word: word,
                entry,
                exit,
            });
            return;
        }
        let prons = self.prons;
        for pron in &prons[&word] {
            let mut at = from;
            for (k, &p) in pron.iter().enumerate() {
                if k + 1 == pron.len() {
                    self.fst.add_arc(at, Arc::new(p, word, cost, to));
                } else {
                    let next = self.fst.add_state();
                    self.fst.add_arc(at, Arc::new(p, NO_WORD, 0.0, next));
                    at = next;
                }
            }
        }
    }
}

/// Composes a lexicon transducer with an n-gram LM into a phone-to-word decoder graph.
///
/// Graph states are LM histories. Each word arc of the LM is expanded into one
/// phone path per pronunciation carrying the LM cost and the word on its last
/// arc. Class tokens (such as `$CONTACTS`) become empty [`ClassSlot`]s to be
/// filled at runtime. `<unk>` has no pronunciation and gets no arcs. The final
/// weight of a history is the cost of `</s>`.
pub fn compose_lg(lexicon_fst: &WeightedFst, lm: &NGramModel, mode: BackoffMode) -> Result<WeightedFst> {
    let vocab = lm.vocab();
    let mut prons: HashMap<WordId, Vec<Vec<PhoneId>>> = HashMap::new();
    for (lex_word, seq) in lexicon_paths(lexicon_fst) {
        let name = &lexicon_fst.words()[lex_word as usize];
        if let Some(id) = vocab.id(name) {
            prons.entry(id).or_default().push(seq);
        }
    }
    let missing: Vec<String> = (0..vocab.len() as WordId)
        .filter(|&w| ![BOS, EOS, UNK].contains(&w) && !vocab.is_class(w) && !prons.contains_key(&w))
        .map(|w| vocab.word(w).expect("id in range").to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Composition(missing));
    }

    // Histories: every explicit n-gram below the top order that can be continued.
    let mut histories: Vec<Vec<WordId>> = vec![Vec::new()];
    for n in 1..lm.order() {
        histories.extend(
            lm.sorted_ngrams(n)
                .into_iter()
                .filter(|(k, _)| k[n - 1] != EOS)
                .map(|(k, _)| k.to_vec()),
        );
    }
    let mut fst = WeightedFst::new(lexicon_fst.phones().clone(), vocab.words().to_vec());
    let mut states = HashMap::with_capacity(histories.len());
    for h in &histories {
        states.insert(h.clone(), fst.add_state());
    }
    let mut b = Builder {
        fst,
        lm,
        prons: &prons,
        states,
    };

    let mut continuations: BTreeMap<&[WordId], Vec<(WordId, f64)>> = BTreeMap::new();
    if mode == BackoffMode::Epsilon {
        for n in 1..=lm.order() {
            for (k, e) in lm.sorted_ngrams(n) {
                continuations.entry(&k[..n - 1]).or_default().push((k[n - 1], e.log_prob));
            }
        }
    }

    for h in &histories {
        let from = b.states[h];
        let words: Vec<(WordId, f64)> = match mode {
            BackoffMode::Epsilon => continuations.get(h.as_slice()).cloned().unwrap_or_default(),
            BackoffMode::Expanded => lm.predicted_words().map(|w| (w, lm.log_prob(w, h))).collect(),
        };
        for (w, lp) in words {
            if w == BOS || w == UNK || lp <= LOG_ZERO {
                continue;
            }
            if w == EOS {
                b.fst.set_final(from, -lp);
                continue;
            }
            let mut next = h.clone();
            next.push(w);
            let to = b.state_for(&next);
            b.add_word(from, w, -lp, to);
        }
        if mode == BackoffMode::Epsilon && !h.is_empty() && lm.backoff(h) > LOG_ZERO {
            let to = b.state_for(&h[1..]);
            b.fst.add_arc(from, Arc::new(EPSILON, NO_WORD, -lm.backoff(h), to));
        }
    }
    let start = if lm.order() > 1 { b.state_for(&[BOS]) } else { b.state_for(&[]) };
    let mut fst = b.fst;
    fst.set_start(start);
    fst.trim();
    Ok(fst)
}

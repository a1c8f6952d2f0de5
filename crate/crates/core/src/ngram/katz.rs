use std::collections::HashMap;

use super::model::{log10_or_zero, GramTable, NGramEntry, NGramModel, LOG_ZERO};
use super::vocab::{Vocabulary, WordId, BOS, EOS};
use crate::error::{Error, Result};

/// Counts above this are trusted and left undiscounted.
pub const GT_MAX_COUNT: usize = 5;

pub const MAX_ORDER: usize = 5;

/// Katz discount ratios `d_r` for `r = 1..=GT_MAX_COUNT` (index 0 unused).
///
/// `count_of_counts[r]` is the number of distinct n-grams seen exactly `r` times.
/// When the Good-Turing estimate for some `r` falls outside `(0, 1]`, which
/// happens on small or irregular count spectra, `d_r = (r - 1/2) / r` is used.
pub fn good_turing_discounts(count_of_counts: &[u64]) -> Vec<f64> {
    let k = GT_MAX_COUNT;
    let n = |r: usize| count_of_counts.get(r).copied().unwrap_or(0) as f64;
    let common = if n(1) > 0.0 {
        (k + 1) as f64 * n(k + 1) / n(1)
    } else {
        f64::NAN
    };
    let mut d = vec![1.0; k + 1];
    for (r, slot) in d.iter_mut().enumerate().skip(1) {
        let rf = r as f64;
        let gt = ((rf + 1.0) * n(r + 1) / (rf * n(r)) - common) / (1.0 - common);
        *slot = if gt.is_finite() && gt > 0.0 && gt <= 1.0 {
            gt
        } else {
            (rf - 0.5) / rf
        };
    }
    d
}

fn discounted(count: u64, d: &[f64]) -> f64 {
    let c = count as usize;
    if c <= GT_MAX_COUNT {
        d[c] * count as f64
    } else {
        count as f64
    }
}

fn count_of_counts(counts: &HashMap<Vec<WordId>, u64>) -> Vec<u64> {
    let mut coc = vec![0u64; GT_MAX_COUNT + 2];
    for &c in counts.values() {
        if let Some(slot) = coc.get_mut(c as usize) {
            *slot += 1;
        }
    }
    coc
}

/// Counts every n-gram (n = 1..=order) of the `<s>`/`</s>`-padded sentences.
pub fn count_ngrams(sentences: &[Vec<WordId>], order: usize) -> Vec<HashMap<Vec<WordId>, u64>> {
    let mut counts = vec![HashMap::new(); order];
    let mut padded = Vec::new();
    for s in sentences {
        padded.clear();
        padded.push(BOS);
        padded.extend_from_slice(s);
        padded.push(EOS);
        for i in 1..padded.len() {
            for n in 1..=order.min(i + 1) {
                *counts[n - 1].entry(padded[i + 1 - n..=i].to_vec()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Trains a Katz backoff model with Good-Turing discounting of counts up to
/// [`GT_MAX_COUNT`]. Tokens missing from `vocab` are counted as `<unk>`.
///
/// Unigram mass freed by discounting is shared equally by the vocabulary words
/// that never occur in the corpus.
pub fn train_katz<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, vocab: Vocabulary) -> Result<NGramModel> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidInput(format!("order must be in 1..={MAX_ORDER}, got {order}")));
    }
    if corpus.is_empty() {
        return Err(Error::InvalidInput("empty training corpus".into()));
    }
    let ids: Vec<Vec<WordId>> = corpus.iter().map(|s| vocab.encode(s)).collect();
    let counts = count_ngrams(&ids, order);

    let mut grams: Vec<GramTable> = Vec::with_capacity(order);

    let d1 = good_turing_discounts(&count_of_counts(&counts[0]));
    let total: u64 = counts[0].values().sum();
    let mut unigrams = GramTable::new();
    let mut mass = 0.0;
    for (key, &c) in &counts[0] {
        let p = discounted(c, &d1) / total as f64;
        mass += p;
        unigrams.insert(key.clone(), NGramEntry::new(log10_or_zero(p), 0.0));
    }
    let unseen: Vec<WordId> = (0..vocab.len() as WordId)
        .filter(|&w| w != BOS && !counts[0].contains_key(&vec![w]))
        .collect();
    let share = if unseen.is_empty() {
        0.0
    } else {
        (1.0 - mass) / unseen.len() as f64
    };
    for w in unseen {
        unigrams.insert(vec![w], NGramEntry::new(log10_or_zero(share), 0.0));
    }
    unigrams.insert(vec![BOS], NGramEntry::new(LOG_ZERO, 0.0));
    grams.push(unigrams);

    for table in &counts[1..] {
        let d = good_turing_discounts(&count_of_counts(table));
        let mut context_totals: HashMap<&[WordId], u64> = HashMap::new();
        for (key, &c) in table {
            *context_totals.entry(&key[..key.len() - 1]).or_insert(0) += c;
        }
        let mut out = GramTable::with_capacity(table.len());
        for (key, &c) in table {
            let p = discounted(c, &d) / context_totals[&key[..key.len() - 1]] as f64;
            out.insert(key.clone(), NGramEntry::new(log10_or_zero(p), 0.0));
        }
        grams.push(out);
    }

    let mut model = NGramModel::from_tables(vocab, grams)?;
    model.recompute_backoffs();
    Ok(model)
}

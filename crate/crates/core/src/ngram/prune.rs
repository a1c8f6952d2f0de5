use std::collections::{HashMap, HashSet};

use super::model::{pow10, GramTable, NGramModel};
use super::vocab::WordId;
use crate::error::{Error, Result};

/// Per-history quantities shared by all of its explicit continuations.
struct HistoryStats {
    /// Marginal probability of the history string.
    marginal: f64,
    /// Mass left for backed-off words, `1 - Σ_seen p(w|h)`.
    left: f64,
    /// Lower-order mass of unseen words, `1 - Σ_seen p(w|h')`.
    left_lower: f64,
    ln_alpha: f64,
}

fn history_stats(model: &NGramModel, n: usize) -> HashMap<Vec<WordId>, HistoryStats> {
    let mut sums: HashMap<&[WordId], (f64, f64)> = HashMap::new();
    for (key, e) in &model.tables()[n - 1] {
        let h = &key[..n - 1];
        let s = sums.entry(h).or_insert((0.0, 0.0));
        s.0 += pow10(e.log_prob);
        s.1 += model.prob(key[n - 1], &h[1..]);
    }
    sums.into_iter()
        .map(|(h, (seen, seen_lower))| {
            let stats = HistoryStats {
                marginal: pow10(model.history_log_prob(h)),
                left: (1.0 - seen).max(0.0),
                left_lower: (1.0 - seen_lower).max(0.0),
                ln_alpha: model.backoff(h) * std::f64::consts::LN_10,
            };
            (h.to_vec(), stats)
        })
        .collect()
}

/// Relative-entropy cost (in nats) of removing the explicit n-gram `ngram`,
/// with its history renormalized and every other n-gram kept.
pub fn entropy_cost(model: &NGramModel, ngram: &[WordId]) -> f64 {
    let n = ngram.len();
    let stats = history_stats_single(model, &ngram[..n - 1]);
    cost_with(model, ngram, &stats)
}

fn history_stats_single(model: &NGramModel, h: &[WordId]) -> HistoryStats {
    let n = h.len() + 1;
    let (mut seen, mut seen_lower) = (0.0, 0.0);
    for (key, e) in &model.tables()[n - 1] {
        if &key[..n - 1] == h {
            seen += pow10(e.log_prob);
            seen_lower += model.prob(key[n - 1], &h[1..]);
        }
    }
    HistoryStats {
        marginal: pow10(model.history_log_prob(h)),
        left: (1.0 - seen).max(0.0),
        left_lower: (1.0 - seen_lower).max(0.0),
        ln_alpha: model.backoff(h) * std::f64::consts::LN_10,
    }
}

fn cost_with(model: &NGramModel, ngram: &[WordId], s: &HistoryStats) -> f64 {
    let n = ngram.len();
    let (h, w) = (&ngram[..n - 1], ngram[n - 1]);
    let p = model.prob(w, h);
    let p_lower = model.prob(w, &h[1..]);
    let alpha_new = (s.left + p) / (s.left_lower + p_lower);
    if !(alpha_new.is_finite() && alpha_new > 0.0 && p_lower > 0.0) {
        return f64::INFINITY;
    }
    let ln_alpha_new = alpha_new.ln();
    let mut d = 0.0;
    if p > 0.0 {
        d += p * (p.ln() - p_lower.ln() - ln_alpha_new);
    }
    if s.left > 0.0 {
        d += s.left * (s.ln_alpha - ln_alpha_new);
    }
    s.marginal * d
}

/// Removes every n-gram (n ≥ 2) whose removal costs less than `threshold` nats of
/// relative entropy. Costs are measured against the input model; n-grams that
/// prefix or suffix a surviving higher-order n-gram are kept. Backoff weights
/// are recomputed afterwards.
pub fn prune_entropy(model: &NGramModel, threshold: f64) -> Result<NGramModel> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidInput(format!("pruning threshold must be >= 0, got {threshold}")));
    }
    if threshold == 0.0 {
        return Ok(model.clone());
    }
    let order = model.order();
    let mut kept: Vec<GramTable> = vec![GramTable::new(); order];
    kept[0] = model.tables()[0].clone();
    let mut required: HashSet<Vec<WordId>> = HashSet::new();
    for n in (2..=order).rev() {
        let stats = history_stats(model, n);
        let mut next_required = HashSet::new();
        for (key, e) in &model.tables()[n - 1] {
            let keep = required.contains(key) || cost_with(model, key, &stats[&key[..n - 1]]) >= threshold;
            if keep {
                kept[n - 1].insert(key.clone(), *e);
                next_required.insert(key[..n - 1].to_vec());
                next_required.insert(key[1..].to_vec());
            }
        }
        required = next_required;
    }
    let mut pruned = NGramModel::from_tables(model.vocab().clone(), kept)?;
    pruned.recompute_backoffs();
    Ok(pruned)
}

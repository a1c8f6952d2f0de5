use std::collections::{HashMap, HashSet};

use super::model::{log10_or_zero, GramTable, NGramEntry, NGramModel, LOG_ZERO};
use super::vocab::{WordId, BOS, EOS};
use crate::error::{Error, Result};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

fn check_mixture(components: &[NGramModel], weights: &[f64]) -> Result<()> {
    if components.is_empty() {
        return Err(Error::InvalidWeights("no components to interpolate".into()));
    }
    if weights.len() != components.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} components",
            weights.len(),
            components.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!("weight {w} is negative or not finite")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidWeights(format!("weights sum to {sum}, expected 1")));
    }
    let vocab = components[0].vocab();
    if components.iter().any(|c| c.vocab() != vocab) {
        return Err(Error::InvalidInput("components must share one vocabulary".into()));
    }
    Ok(())
}

/// Builds an explicit model over the union of the components' n-grams whose
/// probability at each n-gram is `Σ_t λ_t(h) p_t(w | h)`.
fn flatten_mixture<F>(components: &[NGramModel], mut lambdas: F) -> Result<NGramModel>
where
    F: FnMut(&[WordId]) -> Vec<f64>,
{
    let order = components.iter().map(NGramModel::order).max().unwrap_or(1);
    let mut tables = Vec::with_capacity(order);
    let mut cache: HashMap<Vec<WordId>, Vec<f64>> = HashMap::new();
    for n in 1..=order {
        let mut keys: Vec<&Vec<WordId>> = components
            .iter()
            .filter(|c| c.order() >= n)
            .flat_map(|c| c.tables()[n - 1].keys())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        keys.sort_unstable();
        let mut table = GramTable::with_capacity(keys.len());
        for key in keys {
            let (h, w) = (&key[..n - 1], key[n - 1]);
            let lp = if w == BOS {
                LOG_ZERO
            } else {
                let lambda = cache.entry(h.to_vec()).or_insert_with(|| lambdas(h));
                let p: f64 = components
                    .iter()
                    .zip(lambda.iter())
                    .filter(|(_, &l)| l > 0.0)
                    .map(|(c, &l)| l * c.prob(w, h))
                    .sum();
                log10_or_zero(p)
            };
            table.insert(key.clone(), NGramEntry::new(lp, 0.0));
        }
        tables.push(table);
    }
    let mut model = NGramModel::from_tables(components[0].vocab().clone(), tables)?;
    model.recompute_backoffs();
    Ok(model)
}

/// Fixed-weight mixture `p(w|h) = Σ_t λ_t p_t(w|h)`, flattened to a backoff model.
pub fn interpolate_linear(components: &[NGramModel], weights: &[f64]) -> Result<NGramModel> {
    check_mixture(components, weights)?;
    flatten_mixture(components, |_| weights.to_vec())
}

/// Task posterior `p(t | h) ∝ prior_t · p_t(h)`, each `p_t(h)` by its model's chain rule.
pub fn task_posteriors(components: &[NGramModel], priors: &[f64], history: &[WordId]) -> Vec<f64> {
    if history.is_empty() {
        return priors.to_vec();
    }
    let logs: Vec<f64> = components
        .iter()
        .zip(priors)
        .map(|(c, &prior)| {
            if prior > 0.0 {
                prior.ln() + c.history_log_prob(history) * std::f64::consts::LN_10
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return priors.to_vec();
    }
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// History-dependent mixture with weights from [`task_posteriors`], flattened to a backoff model.
pub fn interpolate_bayesian(components: &[NGramModel], priors: &[f64]) -> Result<NGramModel> {
    check_mixture(components, priors)?;
    flatten_mixture(components, |h| task_posteriors(components, priors, h))
}

fn dev_ids<S: AsRef<str>>(model: &NGramModel, dev: &[Vec<S>]) -> Vec<Vec<WordId>> {
    dev.iter().map(|s| model.vocab().encode(s)).collect()
}

/// EM estimate of linear interpolation weights maximizing dev-set likelihood.
pub fn estimate_linear_weights<S: AsRef<str>>(components: &[NGramModel], dev: &[Vec<S>], iterations: usize) -> Result<Vec<f64>> {
    let k = components.len();
    check_mixture(components, &vec![1.0 / k as f64; k])?;
    // Per-token component probabilities.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for s in dev_ids(&components[0], dev) {
        let mut padded = vec![BOS];
        padded.extend(s);
        padded.push(EOS);
        for i in 1..padded.len() {
            rows.push(components.iter().map(|c| c.prob(padded[i], &padded[..i])).collect());
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty development set".into()));
    }
    let mut weights = vec![1.0 / k as f64; k];
    for _ in 0..iterations {
        let mut acc = vec![0.0; k];
        for row in &rows {
            let z: f64 = row.iter().zip(&weights).map(|(p, w)| p * w).sum();
            if z > 0.0 {
                for t in 0..k {
                    acc[t] += weights[t] * row[t] / z;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        let next: Vec<f64> = acc.iter().map(|a| a / total).collect();
        let delta = next.iter().zip(&weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        weights = next;
        if delta < 1e-12 {
            break;
        }
    }
    Ok(weights)
}

/// All points of the probability simplex in `k` dimensions with coordinates
/// that are multiples of `1/steps`.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, steps: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() + 1 == k {
            prefix.push(left);
            out.push(prefix.iter().map(|&c| c as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(k, left - c, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, steps, steps, &mut Vec::new(), &mut out);
    }
    out
}

/// Outcome of [`sweep_priors`].
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSweep {
    pub priors: Vec<f64>,
    /// Perplexity of the chosen model on the pooled development sets.
    pub perplexity: f64,
}

/// Exhaustive grid search over task priors (step `1/steps`) minimizing the
/// Bayesian-interpolated model's perplexity on all development sets pooled.
/// Ties go to the point closest to uniform priors.
pub fn sweep_priors<S: AsRef<str>>(components: &[NGramModel], dev_sets: &[Vec<Vec<S>>], steps: usize) -> Result<PriorSweep> {
    if dev_sets.is_empty() || dev_sets.iter().all(Vec::is_empty) {
        return Err(Error::InvalidInput("at least one development set is required".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("grid needs at least one step".into()));
    }
    let k = components.len();
    check_mixture(components, &vec![1.0 / k as f64; k])?;
    let dev: Vec<Vec<WordId>> = dev_sets.iter().flat_map(|d| dev_ids(&components[0], d)).collect();
    let uniform = 1.0 / k as f64;
    let dist = |p: &[f64]| p.iter().map(|x| (x - uniform).powi(2)).sum::<f64>();
    let mut best: Option<PriorSweep> = None;
    for priors in simplex_grid(k, steps) {
        let ppl = interpolate_bayesian(components, &priors)?.perplexity_ids(&dev)?;
        let better = match &best {
            None => true,
            Some(b) => {
                let tie = (ppl - b.perplexity).abs() <= 1e-9 * b.perplexity;
                if tie {
                    dist(&priors) < dist(&b.priors)
                } else {
                    ppl < b.perplexity
                }
            }
        };
        if better {
            best = Some(PriorSweep { priors, perplexity: ppl });
        }
    }
    Ok(best.expect("grid is never empty"))
}

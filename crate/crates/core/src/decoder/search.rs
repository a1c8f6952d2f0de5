use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::bias::{BiasModel, BiasPos};
use super::config::DecoderConfig;
use super::rescore::RescoringLm;
use crate::am::Posteriorgram;
use crate::error::{Error, Result};
use crate::graph::{Arc, DecodingGraph, StateId, BLANK_LABEL, EPSILON, NO_WORD};
use crate::ngram::{WordId, BOS, EOS, UNK};

/// Components of a path score. Their sum equals the score.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostBreakdown {
    /// Scaled negative log10 posteriors.
    pub acoustic: f64,
    /// Arc and final weights of the graph.
    pub graph: f64,
    /// Rescoring adjustments.
    pub rescore: f64,
    /// Phrase completion bonuses.
    pub bias: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.acoustic + self.graph + self.rescore + self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub words: Vec<String>,
    /// Graph output labels of the words; injected words have dynamic ids.
    pub word_ids: Vec<u32>,
    pub score: f64,
    pub cost: CostBreakdown,
    /// Posterior target consumed at each step, 0 for blank.
    pub alignment: Vec<u16>,
    /// False when no hypothesis reached a final state.
    pub success: bool,
    pub steps: usize,
    pub elapsed: Duration,
    pub rtf: f64,
}

const NO_NODE: u32 = u32::MAX;
/// Trace marker for a word emitted by an epsilon-input arc.
const EPS_TARGET: u16 = u16::MAX;

#[derive(Debug, Clone, Copy)]
struct TraceNode {
    parent: u32,
    target: u16,
    word: u32,
}

#[derive(Debug, Clone, Copy)]
struct Hyp {
    state: StateId,
    /// Last emitted label in strict CTC mode, 0 for none.
    last: u16,
    hist: u32,
    bias: BiasPos,
    score: f64,
    cost: CostBreakdown,
    node: u32,
    pending: Option<(u16, u32)>,
}

impl Hyp {
    fn key(&self) -> (StateId, u16, u32, BiasPos) {
        (self.state, self.last, self.hist, self.bias)
    }
}

#[derive(Default)]
struct Frontier {
    hyps: Vec<Hyp>,
    index: HashMap<(StateId, u16, u32, BiasPos), usize>,
}

impl Frontier {
    /// Keeps the lower-scoring hypothesis per key. Returns the slot if `h` was kept.
    fn relax(&mut self, h: Hyp) -> Option<usize> {
        match self.index.entry(h.key()) {
            Entry::Occupied(e) => {
                let i = *e.get();
                if h.score < self.hyps[i].score {
                    self.hyps[i] = h;
                    Some(i)
                } else {
                    None
                }
            }
            Entry::Vacant(e) => {
                e.insert(self.hyps.len());
                self.hyps.push(h);
                Some(self.hyps.len() - 1)
            }
        }
    }
}

struct Search<'a, G: DecodingGraph + ?Sized> {
    graph: &'a G,
    cfg: &'a DecoderConfig,
    lm: Option<&'a dyn RescoringLm>,
    bias: Option<&'a BiasModel>,
    histories: Vec<Vec<WordId>>,
    hist_index: HashMap<Vec<WordId>, u32>,
    lm_words: HashMap<u32, WordId>,
    lm_costs: HashMap<(u32, WordId), f64>,
    trace: Vec<TraceNode>,
}

impl<'a, G: DecodingGraph + ?Sized> Search<'a, G> {
    fn intern(&mut self, mut h: Vec<WordId>) -> u32 {
        if let Some(lm) = self.lm {
            let keep = lm.order().saturating_sub(1);
            h.drain(..h.len().saturating_sub(keep));
        }
        if let Some(&id) = self.hist_index.get(&h) {
            return id;
        }
        let id = self.histories.len() as u32;
        self.histories.push(h.clone());
        self.hist_index.insert(h, id);
        id
    }

    fn lm_word(&mut self, lm: &dyn RescoringLm, olabel: u32) -> WordId {
        let graph = self.graph;
        *self.lm_words.entry(olabel).or_insert_with(|| {
            let label = graph.class_of(olabel).unwrap_or(olabel);
            graph.word(label).map_or(UNK, |w| lm.vocab().id_or_unk(w))
        })
    }

    /// Negative log10 probability of `w` after history `hist` under the rescoring LM.
    fn lm_cost(&mut self, lm: &dyn RescoringLm, hist: u32, w: WordId) -> f64 {
        let histories = &self.histories;
        *self
            .lm_costs
            .entry((hist, w))
            .or_insert_with(|| -lm.log_prob(w, &histories[hist as usize]))
    }

    fn materialize(&mut self, h: &mut Hyp) {
        if let Some((target, word)) = h.pending.take() {
            self.trace.push(TraceNode {
                parent: h.node,
                target,
                word,
            });
            h.node = self.trace.len() as u32 - 1;
        }
    }

    /// Follows `arc` from `h`, consuming a frame with cost `acoustic` unless the
    /// arc is epsilon-input. Trace bookkeeping is left to the caller.
    fn traverse(&mut self, h: &Hyp, arc: &Arc, acoustic: f64, last: u16) -> Hyp {
        let mut n = *h;
        n.state = arc.next;
        n.last = last;
        n.score += acoustic;
        n.cost.acoustic += acoustic;
        n.cost.graph += arc.weight;
        if arc.olabel == NO_WORD {
            if self.lm.is_some() && arc.ilabel == EPSILON {
                n.cost.rescore -= arc.weight;
            } else {
                n.score += arc.weight;
            }
            return n;
        }
        n.score += arc.weight;
        if let Some(lm) = self.lm {
            let w = self.lm_word(lm, arc.olabel);
            let cost = self.lm_cost(lm, h.hist, w);
            let delta = if self.graph.class_of(arc.olabel).is_some() {
                cost
            } else {
                cost - arc.weight
            };
            n.score += delta;
            n.cost.rescore += delta;
            let mut hist = self.histories[h.hist as usize].clone();
            hist.push(w);
            n.hist = self.intern(hist);
        }
        if let Some(bias) = self.bias {
            let (delta, pos) = bias.advance(h.bias, arc.olabel, self.cfg.bias_strength);
            n.score += delta;
            n.cost.bias += delta;
            n.bias = pos;
        }
        n
    }

    /// Expands epsilon-input arcs from the `seeds` for up to the configured depth.
    fn closure(&mut self, f: &mut Frontier, seeds: Vec<usize>) {
        let graph = self.graph;
        let mut work = seeds;
        for _ in 0..self.cfg.max_epsilon_depth {
            if work.is_empty() {
                break;
            }
            let mut next = Vec::new();
            for i in work {
                let h = f.hyps[i];
                let (base, extra) = graph.arcs(h.state);
                for arc in base.iter().chain(extra) {
                    if arc.ilabel != EPSILON {
                        continue;
                    }
                    let mut n = self.traverse(&h, arc, 0.0, h.last);
                    if arc.olabel != NO_WORD {
                        let mut src = h;
                        self.materialize(&mut src);
                        n.node = src.node;
                        n.pending = Some((EPS_TARGET, arc.olabel));
                    }
                    if let Some(j) = f.relax(n) {
                        next.push(j);
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            work = next;
        }
    }

    fn prune(&mut self, f: Frontier) -> Vec<Hyp> {
        let best = f.hyps.iter().map(|h| h.score).fold(f64::INFINITY, f64::min);
        let limit = best + self.cfg.beam;
        let mut kept: Vec<Hyp> = f.hyps.into_iter().filter(|h| h.score <= limit).collect();
        if kept.len() > self.cfg.max_active {
            kept.sort_by(|a, b| a.score.total_cmp(&b.score));
            kept.truncate(self.cfg.max_active);
        }
        for h in &mut kept {
            self.materialize(h);
        }
        kept
    }

    fn step(&mut self, cur: &[Hyp], acoustic: &[f64]) -> Result<Frontier> {
        let graph = self.graph;
        let ctc = graph.is_ctc();
        let strict = ctc && self.cfg.strict_ctc;
        let mut f = Frontier::default();
        for h in cur {
            if ctc {
                let blank = acoustic[0];
                if blank.is_finite() {
                    let mut n = *h;
                    n.last = 0;
                    n.score += blank;
                    n.cost.acoustic += blank;
                    n.pending = Some((0, NO_WORD));
                    f.relax(n);
                }
                if strict && h.last != 0 {
                    let ac = acoustic[h.last as usize];
                    if ac.is_finite() {
                        let mut n = *h;
                        n.score += ac;
                        n.cost.acoustic += ac;
                        n.pending = Some((h.last, NO_WORD));
                        f.relax(n);
                    }
                }
            }
            let (base, extra) = graph.arcs(h.state);
            for arc in base.iter().chain(extra) {
                if arc.ilabel == EPSILON {
                    continue;
                }
                let target = if arc.ilabel == BLANK_LABEL { 0 } else { arc.ilabel };
                let Some(&ac) = acoustic.get(target as usize) else {
                    return Err(Error::Config(format!("arc label {target} has no posterior target")));
                };
                if !ac.is_finite() || (strict && target != 0 && target == h.last) {
                    continue;
                }
                let last = if strict { target } else { 0 };
                let mut n = self.traverse(h, arc, ac, last);
                n.pending = Some((target, arc.olabel));
                f.relax(n);
            }
        }
        let seeds = (0..f.hyps.len()).collect();
        self.closure(&mut f, seeds);
        Ok(f)
    }
}

/// Time-synchronous Viterbi beam search over `graph`.
///
/// On a CTC-flagged graph every state carries implicit blank self-loops and,
/// in strict mode, repeated-label self-loops; an arc whose label equals the
/// last emitted label needs an intervening blank. On other graphs each step
/// consumes exactly one non-epsilon arc ([`BLANK_LABEL`] arcs read the blank).
///
/// With a rescoring LM, each word's first-pass cost is replaced by the
/// rescoring LM's cost: epsilon-input arcs without output (backoff arcs) are
/// refunded, a word arc's weight is swapped for the rescoring cost, and the
/// final weight for the cost of `</s>`. Injected words keep their own weight
/// and are additionally scored as their class token.
pub fn decode<G: DecodingGraph + ?Sized>(
    posteriors: &Posteriorgram,
    graph: &G,
    config: &DecoderConfig,
    rescoring_lm: Option<&dyn RescoringLm>,
    bias: Option<&BiasModel>,
) -> Result<DecodeResult> {
    config.validate()?;
    let expected = graph.phones().len() + 1;
    if posteriors.num_targets() != expected {
        return Err(Error::Config(format!(
            "posteriors have {} targets but the graph needs {expected} (blank + phones)",
            posteriors.num_targets()
        )));
    }
    let started = Instant::now();
    let mut s = Search {
        graph,
        cfg: config,
        lm: rescoring_lm.filter(|_| config.rescoring),
        bias: bias.filter(|_| config.bias_strength != 0.0),
        histories: Vec::new(),
        hist_index: HashMap::new(),
        lm_words: HashMap::new(),
        lm_costs: HashMap::new(),
        trace: Vec::new(),
    };
    let initial = if s.lm.is_some() { vec![BOS] } else { vec![] };
    let hist = s.intern(initial);
    let mut f = Frontier::default();
    if (graph.start() as usize) < graph.num_states() {
        f.relax(Hyp {
            state: graph.start(),
            last: 0,
            hist,
            bias: BiasModel::ROOT,
            score: 0.0,
            cost: CostBreakdown::default(),
            node: NO_NODE,
            pending: None,
        });
    }
    let seeds = (0..f.hyps.len()).collect();
    s.closure(&mut f, seeds);
    let mut cur = s.prune(f);
    let alpha = config.acoustic_scale;
    let mut acoustic = vec![0.0; expected];
    for t in 0..posteriors.num_steps() {
        if cur.is_empty() {
            break;
        }
        for (a, &p) in acoustic.iter_mut().zip(posteriors.row(t)) {
            *a = if p > 0.0 { -alpha * (p as f64).log10() } else { f64::INFINITY };
        }
        let next = s.step(&cur, &acoustic)?;
        cur = s.prune(next);
    }

    let mut best: Option<(f64, CostBreakdown, u32)> = None;
    for h in &cur {
        let Some(fw) = graph.final_weight(h.state) else {
            continue;
        };
        let mut cost = h.cost;
        let mut score = h.score + fw;
        cost.graph += fw;
        if let Some(lm) = s.lm {
            let delta = s.lm_cost(lm, h.hist, EOS) - fw;
            score += delta;
            cost.rescore += delta;
        }
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, cost, h.node));
        }
    }
    let elapsed = started.elapsed();
    let steps = posteriors.num_steps();
    let rtf = if steps == 0 {
        0.0
    } else {
        elapsed.as_secs_f64() / (steps as f64 * config.step_seconds)
    };
    let Some((score, cost, mut node)) = best else {
        return Ok(DecodeResult {
            words: Vec::new(),
            word_ids: Vec::new(),
            score: f64::INFINITY,
            cost: CostBreakdown::default(),
            alignment: Vec::new(),
            success: false,
            steps,
            elapsed,
            rtf,
        });
    };
    let mut alignment = Vec::with_capacity(steps);
    let mut word_ids = Vec::new();
    while node != NO_NODE {
        let n = s.trace[node as usize];
        if n.target != EPS_TARGET {
            alignment.push(n.target);
        }
        if n.word != NO_WORD {
            word_ids.push(n.word);
        }
        node = n.parent;
    }
    alignment.reverse();
    word_ids.reverse();
    let words = word_ids
        .iter()
        .map(|&w| graph.word(w).unwrap_or("<unk>").to_string())
        .collect();
    Ok(DecodeResult {
        words,
        word_ids,
        score,
        cost,
        alignment,
        success: true,
        steps,
        elapsed,
        rtf,
    })
}

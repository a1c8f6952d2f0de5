use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Position in a [`BiasModel`] trie; [`BiasModel::ROOT`] means no phrase is in progress.
pub type BiasPos = u32;

#[derive(Debug, Clone, Default)]
struct Node {
    children: BTreeMap<u32, BiasPos>,
    bonus: Option<f64>,
}

/// Prefix trie over phrases of graph output labels, each with a completion bonus.
///
/// A bonus is a non-negative magnitude; the decoder scales it by the bias
/// strength (zero or negative), so completing a phrase never raises a score.
#[derive(Debug, Clone)]
pub struct BiasModel {
    nodes: Vec<Node>,
}

impl BiasModel {
    pub const ROOT: BiasPos = 0;

    pub fn new(phrases: &[(Vec<u32>, f64)]) -> Result<Self> {
        let mut nodes = vec![Node::default()];
        for (phrase, bonus) in phrases {
            if phrase.is_empty() || phrase.contains(&0) {
                return Err(Error::InvalidInput("bias phrases must be non-empty word sequences".into()));
            }
            if !(bonus.is_finite() && *bonus >= 0.0) {
                return Err(Error::InvalidInput(format!("bias bonus must be finite and >= 0, got {bonus}")));
            }
            let mut at = 0usize;
            for &w in phrase {
                at = match nodes[at].children.get(&w) {
                    Some(&c) => c as usize,
                    None => {
                        nodes.push(Node::default());
                        let c = nodes.len() - 1;
                        nodes[at].children.insert(w, c as BiasPos);
                        c
                    }
                };
            }
            let b = nodes[at].bonus.get_or_insert(0.0);
            *b = b.max(*bonus);
        }
        Ok(Self { nodes })
    }

    /// Single-word phrases with a common bonus.
    pub fn from_words(words: &[u32], bonus: f64) -> Result<Self> {
        let phrases: Vec<(Vec<u32>, f64)> = words.iter().map(|&w| (vec![w], bonus)).collect();
        Self::new(&phrases)
    }

    pub fn num_phrases(&self) -> usize {
        self.nodes.iter().filter(|n| n.bonus.is_some()).count()
    }

    /// Advances `pos` by `word`. Returns the score change (`strength` times the
    /// bonus of a completed phrase, else 0) and the new position. A word that
    /// does not continue the current phrase restarts matching from the root.
    pub fn advance(&self, pos: BiasPos, word: u32, strength: f64) -> (f64, BiasPos) {
        let next = self.nodes[pos as usize]
            .children
            .get(&word)
            .or_else(|| self.nodes[0].children.get(&word));
        let Some(&node) = next else {
            return (0.0, Self::ROOT);
        };
        let n = &self.nodes[node as usize];
        let delta = n.bonus.map_or(0.0, |b| strength * b);
        let pos = if n.children.is_empty() { Self::ROOT } else { node };
        (delta, pos)
    }
}

/// See [`BiasModel::advance`].
pub fn apply_bias(bias: &BiasModel, pos: BiasPos, word: u32, strength: f64) -> (f64, BiasPos) {
    bias.advance(pos, word, strength)
}

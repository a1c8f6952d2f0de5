use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;

use super::bitvector::BitVectorRS;
use crate::binio;
use crate::error::{Error, Result};
use crate::ngram::{NGramModel, Vocabulary, WordId, LOG_ZERO};

const MAGIC: &[u8; 4] = b"ELD1";
const VERSION: u16 = 1;

/// Code reserved for log10 values at or below [`LOG_ZERO`].
pub const ZERO_CODE: u16 = u16::MAX;
const MAX_CODE: f64 = (u16::MAX - 1) as f64;

/// 16-bit linear codebook: `value = min + code * step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Codebook {
    pub min: f64,
    pub step: f64,
}

impl Codebook {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|&v| v > LOG_ZERO) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            return Self { min: 0.0, step: 0.0 };
        }
        Self {
            min: lo,
            step: (hi - lo) / MAX_CODE,
        }
    }

    pub fn encode(&self, v: f64) -> u16 {
        if v <= LOG_ZERO {
            return ZERO_CODE;
        }
        if self.step == 0.0 {
            return 0;
        }
        ((v - self.min) / self.step).round().clamp(0.0, MAX_CODE) as u16
    }

    pub fn decode(&self, code: u16) -> f64 {
        if code == ZERO_CODE {
            LOG_ZERO
        } else {
            self.min + code as f64 * self.step
        }
    }
}

/// Read-only n-gram model stored as a LOUDS trie over its contexts.
///
/// Node 0 is the root (empty context); the node for n-gram `g + [w]` is a child
/// of the node for `g`, labeled `w`. Nodes are numbered in level order with
/// siblings sorted by word id, so each node's children occupy a contiguous id
/// range. Log-probabilities and backoffs use one linear 16-bit codebook per
/// order. Backoff codes are chosen so that the decoded sum along each suffix
/// chain `h, h[1..], h[2..], ...` stays within half a step of the exact sum,
/// which keeps backed-off lookups from accumulating rounding error.
#[derive(Debug, Clone, PartialEq)]
pub struct LoudsNGramModel {
    order: usize,
    vocab: Vocabulary,
    bits: BitVectorRS,
    words: Vec<u16>,
    probs: Vec<u16>,
    /// Only nodes below the highest order carry a backoff.
    backoffs: Vec<u16>,
    /// First node id of each level, plus the total node count.
    level_starts: Vec<u32>,
    prob_books: Vec<Codebook>,
    backoff_books: Vec<Codebook>,
}

pub const ROOT: usize = 0;

/// LOUDS encoding of a tree given its nodes' child counts in level order:
/// `10` for the super-root, then `1^k 0` per node.
pub fn louds_bits(degrees: &[usize]) -> BitVectorRS {
    [true, false]
        .into_iter()
        .chain(
            degrees
                .iter()
                .flat_map(|&k| std::iter::repeat_n(true, k).chain(std::iter::once(false))),
        )
        .collect()
}

impl LoudsNGramModel {
    pub fn build(model: &NGramModel) -> Result<Self> {
        let order = model.order();
        let levels: Vec<Vec<(&[WordId], crate::ngram::NGramEntry)>> =
            (1..=order).map(|n| model.sorted_ngrams(n)).collect();

        let mut level_starts = vec![0u32, 1];
        for level in &levels {
            let last = *level_starts.last().expect("non-empty");
            level_starts.push(last + level.len() as u32);
        }
        let node_count = *level_starts.last().expect("non-empty") as usize;

        // Level-order unary degrees: super-root, root, then each node in order.
        let mut degree = vec![0usize; node_count];
        let mut index: HashMap<&[WordId], usize> = HashMap::with_capacity(node_count);
        for (d, level) in levels.iter().enumerate() {
            for (i, (key, _)) in level.iter().enumerate() {
                index.insert(key, level_starts[d + 1] as usize + i);
            }
        }
        for (d, level) in levels.iter().enumerate() {
            for (key, _) in level {
                let parent = if d == 0 {
                    ROOT
                } else {
                    *index
                        .get(&key[..d])
                        .ok_or_else(|| Error::InvalidInput(format!("n-gram {key:?} has no prefix entry")))?
                };
                degree[parent] += 1;
            }
        }
        let bits = louds_bits(&degree);

        let mut words = vec![0u16; node_count];
        let mut probs = vec![ZERO_CODE; node_count];
        let backoff_nodes = level_starts[order] as usize;
        let mut backoffs = vec![0u16; backoff_nodes];
        let mut prob_books = Vec::with_capacity(order);
        let mut backoff_books = Vec::with_capacity(order.saturating_sub(1));
        // Decoded minus exact backoff sum along each node's suffix chain.
        let mut chain_error = vec![0.0f64; backoff_nodes];

        for (d, level) in levels.iter().enumerate() {
            let start = level_starts[d + 1] as usize;
            let book = Codebook::fit(level.iter().map(|(_, e)| e.log_prob));
            for (i, (key, e)) in level.iter().enumerate() {
                let w = key[d];
                words[start + i] = u16::try_from(w).map_err(|_| Error::OutOfVocabulary(w))?;
                probs[start + i] = book.encode(e.log_prob);
            }
            prob_books.push(book);

            if d + 1 < order {
                let lower: Vec<f64> = level
                    .iter()
                    .map(|(key, _)| match d {
                        0 => 0.0,
                        _ => index.get(&key[1..]).map_or(0.0, |&s| chain_error[s]),
                    })
                    .collect();
                let targets: Vec<Option<f64>> = level
                    .iter()
                    .zip(&lower)
                    .map(|((_, e), &err)| (e.backoff > LOG_ZERO).then_some(e.backoff - err))
                    .collect();
                let book = Codebook::fit(targets.iter().flatten().copied());
                for (i, target) in targets.iter().enumerate() {
                    let node = start + i;
                    match *target {
                        Some(t) => {
                            let code = book.encode(t);
                            backoffs[node] = code;
                            chain_error[node] = book.decode(code) - t;
                        }
                        None => {
                            backoffs[node] = ZERO_CODE;
                            chain_error[node] = lower[i];
                        }
                    }
                }
                backoff_books.push(book);
            }
        }

        Ok(Self {
            order,
            vocab: model.vocab().clone(),
            bits,
            words,
            probs,
            backoffs,
            level_starts,
            prob_books,
            backoff_books,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn bits(&self) -> &BitVectorRS {
        &self.bits
    }

    pub fn num_nodes(&self) -> usize {
        self.words.len()
    }

    /// Number of stored n-grams (all nodes except the root).
    pub fn num_ngrams(&self) -> usize {
        self.num_nodes() - 1
    }

    /// Trie depth of `node`, which is the order of its n-gram.
    pub fn level(&self, node: usize) -> usize {
        self.level_starts.partition_point(|&s| s as usize <= node) - 1
    }

    pub fn word(&self, node: usize) -> WordId {
        self.words[node] as WordId
    }

    pub fn log_prob_of(&self, node: usize) -> f64 {
        self.prob_books[self.level(node) - 1].decode(self.probs[node])
    }

    pub fn backoff_of(&self, node: usize) -> f64 {
        if node == ROOT || node >= self.backoffs.len() {
            return 0.0;
        }
        self.backoff_books[self.level(node) - 1].decode(self.backoffs[node])
    }

    /// Largest step over all codebooks.
    pub fn max_step(&self) -> f64 {
        self.prob_books
            .iter()
            .chain(&self.backoff_books)
            .map(|b| b.step)
            .fold(0.0, f64::max)
    }

    pub fn codebooks(&self) -> (&[Codebook], &[Codebook]) {
        (&self.prob_books, &self.backoff_books)
    }

    /// Node ids of the children of `node`.
    pub fn children(&self, node: usize) -> Range<usize> {
        let open = self.bits.select0(node).expect("valid node");
        let close = self.bits.select0(node + 1).expect("valid node");
        self.bits.rank1(open + 1)..self.bits.rank1(close)
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        let pos = self.bits.select1(node)?;
        self.bits.rank0(pos).checked_sub(1)
    }

    /// Child of `node` labeled `word`, by binary search over the sibling labels.
    pub fn child_seek(&self, node: usize, word: WordId) -> Option<usize> {
        let range = self.children(node);
        let word = u16::try_from(word).ok()?;
        self.words[range.clone()]
            .binary_search(&word)
            .ok()
            .map(|i| range.start + i)
    }

    /// Node storing `ngram`, if any.
    pub fn find(&self, ngram: &[WordId]) -> Option<usize> {
        ngram.iter().try_fold(ROOT, |node, &w| self.child_seek(node, w))
    }

    /// log10 p(word | history) by longest-suffix match with backoff.
    pub fn lookup(&self, word: WordId, history: &[WordId]) -> Result<f64> {
        let v = self.vocab.len() as WordId;
        if let Some(&bad) = std::iter::once(&word).chain(history).find(|&&w| w >= v) {
            return Err(Error::OutOfVocabulary(bad));
        }
        let h = &history[history.len().saturating_sub(self.order - 1)..];
        let mut acc = 0.0;
        for start in 0..=h.len() {
            match self.find(&h[start..]) {
                Some(ctx) => {
                    if let Some(node) = self.child_seek(ctx, word) {
                        let lp = self.log_prob_of(node);
                        return Ok(if lp <= LOG_ZERO { LOG_ZERO } else { acc + lp });
                    }
                    let b = self.backoff_of(ctx);
                    if b <= LOG_ZERO {
                        return Ok(LOG_ZERO);
                    }
                    acc += b;
                }
                None => continue,
            }
        }
        Ok(LOG_ZERO)
    }

    /// All stored n-grams, in level order.
    pub fn ngrams(&self) -> Vec<Vec<WordId>> {
        let mut keys: Vec<Vec<WordId>> = Vec::with_capacity(self.num_nodes());
        keys.push(Vec::new());
        for node in 1..self.num_nodes() {
            let parent = self.parent(node).expect("non-root node has a parent");
            let mut k = keys[parent].clone();
            k.push(self.word(node));
            keys.push(k);
        }
        keys.remove(0);
        keys
    }

    /// Hash-table model holding the decoded (quantized) values. Its lookups
    /// agree with [`Self::lookup`] up to floating-point summation order.
    pub fn to_ngram_model(&self) -> Result<NGramModel> {
        let mut grams: Vec<crate::ngram::GramTable> = vec![HashMap::new(); self.order];
        for (i, key) in self.ngrams().into_iter().enumerate() {
            let node = i + 1;
            let e = crate::ngram::NGramEntry::new(self.log_prob_of(node), self.backoff_of(node));
            grams[key.len() - 1].insert(key, e);
        }
        NGramModel::from_tables(self.vocab.clone(), grams)
    }

    pub fn serialized_len(&self) -> usize {
        let vocab: usize = 4 + self.vocab.words().iter().map(|w| 2 + w.len()).sum::<usize>();
        4 + 2
            + 1
            + vocab
            + self.bits.serialized_len()
            + 8
            + 2 * (self.words.len() + self.probs.len() + self.backoffs.len())
            + 4 * self.level_starts.len()
            + 16 * (self.prob_books.len() + self.backoff_books.len())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        binio::write_magic(w, MAGIC)?;
        binio::write_u16(w, VERSION)?;
        binio::write_u8(w, self.order as u8)?;
        binio::write_strs(w, self.vocab.words())?;
        self.bits.write_to(w)?;
        binio::write_u32(w, self.words.len() as u32)?;
        binio::write_u16s(w, &self.words)?;
        binio::write_u16s(w, &self.probs)?;
        binio::write_u32(w, self.backoffs.len() as u32)?;
        binio::write_u16s(w, &self.backoffs)?;
        binio::write_u32s(w, &self.level_starts)?;
        for b in self.prob_books.iter().chain(&self.backoff_books) {
            binio::write_f64(w, b.min)?;
            binio::write_f64(w, b.step)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        binio::expect_magic(r, MAGIC, "LOUDS model")?;
        let version = binio::read_u16(r)?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported LOUDS model version {version}")));
        }
        let order = binio::read_u8(r)? as usize;
        if order == 0 {
            return Err(Error::format("LOUDS model has order 0"));
        }
        let vocab = Vocabulary::from_words(binio::read_strs(r)?).map_err(|e| Error::format(e.to_string()))?;
        let bits = BitVectorRS::read_from(r)?;
        let nodes = binio::read_u32(r)? as usize;
        let words = binio::read_u16s(r, nodes)?;
        let probs = binio::read_u16s(r, nodes)?;
        let backoff_count = binio::read_u32(r)? as usize;
        let backoffs = binio::read_u16s(r, backoff_count)?;
        let level_starts = binio::read_u32s(r, order + 2)?;
        let mut read_book = || -> Result<Codebook> {
            Ok(Codebook {
                min: binio::read_f64(r)?,
                step: binio::read_f64(r)?,
            })
        };
        let prob_books = (0..order).map(|_| read_book()).collect::<Result<Vec<_>>>()?;
        let backoff_books = (0..order - 1).map(|_| read_book()).collect::<Result<Vec<_>>>()?;

        let consistent = level_starts.first() == Some(&0)
            && level_starts.get(1) == Some(&1)
            && level_starts.windows(2).all(|w| w[0] <= w[1])
            && *level_starts.last().expect("non-empty") as usize == nodes
            && level_starts[order] as usize == backoff_count
            && bits.count_ones() == nodes
            && bits.count_zeros() == nodes + 1;
        if !consistent {
            return Err(Error::format("LOUDS model: inconsistent node counts"));
        }
        Ok(Self {
            order,
            vocab,
            bits,
            words,
            probs,
            backoffs,
            level_starts,
            prob_books,
            backoff_books,
        })
    }
}

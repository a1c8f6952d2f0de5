use std::io::{Read, Write};

use crate::binio;
use crate::error::{Error, Result};

const WORD_BITS: usize = 64;
const BLOCK_WORDS: usize = 8;
const BLOCK_BITS: usize = WORD_BITS * BLOCK_WORDS;

/// Bit vector with a rank directory of 32-bit cumulative counts per 512-bit
/// block. Select is a binary search over the directory followed by a scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVectorRS {
    words: Vec<u64>,
    len: usize,
    /// `block_ranks[b]` = number of ones before block `b`; one extra entry at the end.
    block_ranks: Vec<u32>,
}

impl FromIterator<bool> for BitVectorRS {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in iter {
            if len % WORD_BITS == 0 {
                words.push(0);
            }
            if bit {
                words[len / WORD_BITS] |= 1 << (len % WORD_BITS);
            }
            len += 1;
        }
        Self::from_words(words, len).expect("words sized from the bit count")
    }
}

impl BitVectorRS {
    /// Wraps raw little-endian bit words. Bits past `len` must be zero.
    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != len.div_ceil(WORD_BITS) {
            return Err(Error::format(format!("{len} bits need {} words, got {}", len.div_ceil(WORD_BITS), words.len())));
        }
        if !len.is_multiple_of(WORD_BITS) && words.last().is_some_and(|w| w >> (len % WORD_BITS) != 0) {
            return Err(Error::format("bit vector has set bits past its length"));
        }
        let mut block_ranks = Vec::with_capacity(words.len() / BLOCK_WORDS + 2);
        let mut acc = 0u32;
        for chunk in words.chunks(BLOCK_WORDS) {
            block_ranks.push(acc);
            acc += chunk.iter().map(|w| w.count_ones()).sum::<u32>();
        }
        block_ranks.push(acc);
        Ok(Self {
            words,
            len,
            block_ranks,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        *self.block_ranks.last().expect("directory is never empty") as usize
    }

    pub fn count_zeros(&self) -> usize {
        self.len - self.count_ones()
    }

    /// Number of ones in `[0, i)`.
    pub fn rank1(&self, i: usize) -> usize {
        assert!(i <= self.len, "rank position {i} out of range {}", self.len);
        let block = i / BLOCK_BITS;
        let word = i / WORD_BITS;
        let mut r = self.block_ranks[block] as usize;
        for w in &self.words[block * BLOCK_WORDS..word] {
            r += w.count_ones() as usize;
        }
        let rem = i % WORD_BITS;
        if rem > 0 {
            r += (self.words[word] & ((1u64 << rem) - 1)).count_ones() as usize;
        }
        r
    }

    /// Number of zeros in `[0, i)`.
    pub fn rank0(&self, i: usize) -> usize {
        i - self.rank1(i)
    }

    /// Position of the `k`-th one (0-based).
    pub fn select1(&self, k: usize) -> Option<usize> {
        if k >= self.count_ones() {
            return None;
        }
        self.select(k, |b| self.block_ranks[b] as usize, |w| w)
    }

    /// Position of the `k`-th zero (0-based).
    pub fn select0(&self, k: usize) -> Option<usize> {
        if k >= self.count_zeros() {
            return None;
        }
        self.select(k, |b| b * BLOCK_BITS - self.block_ranks[b] as usize, |w| !w)
    }

    fn select(&self, k: usize, before_block: impl Fn(usize) -> usize, flip: impl Fn(u64) -> u64) -> Option<usize> {
        // Last block whose preceding count is <= k.
        let blocks = self.block_ranks.len() - 1;
        let (mut lo, mut hi) = (0, blocks);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if before_block(mid) <= k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut remaining = k - before_block(lo);
        for (wi, &w) in self.words.iter().enumerate().skip(lo * BLOCK_WORDS) {
            let mut bits = flip(w);
            let ones = bits.count_ones() as usize;
            if remaining < ones {
                for _ in 0..remaining {
                    bits &= bits - 1;
                }
                let pos = wi * WORD_BITS + bits.trailing_zeros() as usize;
                return (pos < self.len).then_some(pos);
            }
            remaining -= ones;
        }
        None
    }

    pub fn serialized_len(&self) -> usize {
        8 + 8 * self.words.len()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        binio::write_u64(w, self.len as u64)?;
        binio::write_u64s(w, &self.words)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let len = binio::read_u64(r)? as usize;
        let words = binio::read_u64s(r, len.div_ceil(WORD_BITS))?;
        Self::from_words(words, len)
    }
}

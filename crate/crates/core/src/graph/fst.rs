use std::io::{Read, Write};

use super::lexicon::{PhoneId, PhoneSet};
use crate::binio;
use crate::error::{Error, Result};

pub type StateId = u32;

pub const EPSILON: PhoneId = 0;
/// Explicit blank input label, used only by graphs that spell out CTC loops.
pub const BLANK_LABEL: PhoneId = PhoneId::MAX;
pub const NO_WORD: u32 = 0;
/// Words injected at runtime get ids from here up.
pub const DYNAMIC_WORD_BASE: u32 = 1 << 16;

const MAGIC: &[u8; 4] = b"EGR1";
const VERSION: u16 = 1;

/// Transition with a tropical weight (negative log10 probability).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub ilabel: PhoneId,
    pub olabel: u32,
    pub weight: f64,
    pub next: StateId,
}

impl Arc {
    pub fn new(ilabel: PhoneId, olabel: u32, weight: f64, next: StateId) -> Self {
        Self {
            ilabel,
            olabel,
            weight,
            next,
        }
    }
}

/// Place where a class token's arcs are replaced by an injected phrase graph.
/// The base graph has no path from `entry` to `exit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSlot {
    pub class_word: u32,
    pub entry: StateId,
    pub exit: StateId,
}

/// Weighted transducer from phone labels to word labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFst {
    arcs: Vec<Vec<Arc>>,
    finals: Vec<Option<f64>>,
    start: StateId,
    ctc: bool,
    slots: Vec<ClassSlot>,
    phones: PhoneSet,
    /// Output symbols indexed by word label; label 0 is epsilon.
    words: Vec<String>,
}

impl WeightedFst {
    pub fn new(phones: PhoneSet, words: Vec<String>) -> Self {
        Self {
            arcs: Vec::new(),
            finals: Vec::new(),
            start: 0,
            ctc: false,
            slots: Vec::new(),
            phones,
            words,
        }
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        (self.arcs.len() - 1) as StateId
    }

    pub fn set_start(&mut self, s: StateId) {
        self.start = s;
    }

    pub fn set_final(&mut self, s: StateId, weight: f64) {
        self.finals[s as usize] = Some(weight);
    }

    pub fn add_arc(&mut self, from: StateId, arc: Arc) {
        debug_assert!(arc.weight.is_finite(), "arc weight must be finite");
        self.arcs[from as usize].push(arc);
    }

    pub fn add_slot(&mut self, slot: ClassSlot) {
        self.slots.push(slot);
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self, s: StateId) -> &[Arc] {
        &self.arcs[s as usize]
    }

    pub fn final_weight(&self, s: StateId) -> Option<f64> {
        self.finals[s as usize]
    }

    pub fn finals(&self) -> impl Iterator<Item = (StateId, f64)> + '_ {
        self.finals
            .iter()
            .enumerate()
            .filter_map(|(s, w)| w.map(|w| (s as StateId, w)))
    }

    pub fn is_ctc(&self) -> bool {
        self.ctc
    }

    pub fn slots(&self) -> &[ClassSlot] {
        &self.slots
    }

    pub fn phones(&self) -> &PhoneSet {
        &self.phones
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.words.iter().position(|w| w == word).map(|i| i as u32)
    }

    /// Removes states that are unreachable from the start or cannot reach a
    /// final state. A slot's entry and exit count as connected to each other.
    pub fn trim(&mut self) {
        let n = self.num_states();
        let mut forward: Vec<Vec<StateId>> = self.arcs.iter().map(|a| a.iter().map(|a| a.next).collect()).collect();
        for slot in &self.slots {
            forward[slot.entry as usize].push(slot.exit);
        }
        let mut backward: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for (s, nexts) in forward.iter().enumerate() {
            for &t in nexts {
                backward[t as usize].push(s as StateId);
            }
        }
        let reach = |seeds: Vec<StateId>, edges: &[Vec<StateId>]| {
            let mut seen = vec![false; n];
            let mut stack = seeds;
            while let Some(s) = stack.pop() {
                if std::mem::replace(&mut seen[s as usize], true) {
                    continue;
                }
                stack.extend(edges[s as usize].iter().copied().filter(|&t| !seen[t as usize]));
            }
            seen
        };
        let from_start = reach(vec![self.start], &forward);
        let to_final = reach(self.finals().map(|(s, _)| s).collect(), &backward);
        let keep: Vec<bool> = (0..n)
            .map(|s| (from_start[s] && to_final[s]) || s == self.start as usize)
            .collect();
        let mut remap = vec![StateId::MAX; n];
        let mut next_id = 0;
        for s in 0..n {
            if keep[s] {
                remap[s] = next_id;
                next_id += 1;
            }
        }
        let mut arcs = Vec::with_capacity(next_id as usize);
        let mut finals = Vec::with_capacity(next_id as usize);
        for s in 0..n {
            if !keep[s] {
                continue;
            }
            arcs.push(
                self.arcs[s]
                    .iter()
                    .filter(|a| keep[a.next as usize])
                    .map(|a| Arc { next: remap[a.next as usize], ..*a })
                    .collect(),
            );
            finals.push(self.finals[s]);
        }
        self.slots = self
            .slots
            .iter()
            .filter(|sl| keep[sl.entry as usize] && keep[sl.exit as usize])
            .map(|sl| ClassSlot {
                class_word: sl.class_word,
                entry: remap[sl.entry as usize],
                exit: remap[sl.exit as usize],
            })
            .collect();
        self.start = remap[self.start as usize];
        self.arcs = arcs;
        self.finals = finals;
    }

    pub fn serialized_len(&self) -> usize {
        let strs = |v: &[String]| 4 + v.iter().map(|s| 2 + s.len()).sum::<usize>();
        4 + 2
            + 4
            + 4
            + 1
            + 4 * (self.num_states() + 1)
            + 14 * self.num_arcs()
            + 4
            + 8 * self.finals().count()
            + 4
            + 12 * self.slots.len()
            + strs(self.phones.symbols())
            + strs(&self.words)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        binio::write_header(w, MAGIC, VERSION)?;
        binio::write_u32(w, self.num_states() as u32)?;
        binio::write_u32(w, self.start)?;
        binio::write_u8(w, self.ctc as u8)?;
        let mut offset = 0u32;
        let mut offsets = Vec::with_capacity(self.num_states() + 1);
        for a in &self.arcs {
            offsets.push(offset);
            offset += a.len() as u32;
        }
        offsets.push(offset);
        binio::write_u32s(w, &offsets)?;
        let mut buf = Vec::with_capacity(14 * offset as usize);
        for arc in self.arcs.iter().flatten() {
            buf.extend_from_slice(&arc.ilabel.to_le_bytes());
            buf.extend_from_slice(&arc.olabel.to_le_bytes());
            buf.extend_from_slice(&(arc.weight as f32).to_le_bytes());
            buf.extend_from_slice(&arc.next.to_le_bytes());
        }
        w.write_all(&buf)?;
        let finals: Vec<(StateId, f64)> = self.finals().collect();
        binio::write_u32(w, finals.len() as u32)?;
        for (s, weight) in finals {
            binio::write_u32(w, s)?;
            binio::write_f32(w, weight as f32)?;
        }
        binio::write_u32(w, self.slots.len() as u32)?;
        for sl in &self.slots {
            binio::write_u32(w, sl.class_word)?;
            binio::write_u32(w, sl.entry)?;
            binio::write_u32(w, sl.exit)?;
        }
        binio::write_strs(w, self.phones.symbols())?;
        binio::write_strs(w, &self.words)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        binio::expect_header(r, MAGIC, VERSION, "decoder graph")?;
        let n = binio::read_u32(r)? as usize;
        let start = binio::read_u32(r)?;
        let ctc = match binio::read_u8(r)? {
            0 => false,
            1 => true,
            v => return Err(Error::format(format!("decoder graph: bad CTC flag {v}"))),
        };
        let offsets = binio::read_u32s(r, n + 1)?;
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::format("decoder graph: arc offsets not monotone"));
        }
        let total = offsets[n] as usize;
        let raw = binio::read_bytes(r, 14 * total)?;
        let mut flat = Vec::with_capacity(total);
        for c in raw.chunks_exact(14) {
            let arc = Arc {
                ilabel: u16::from_le_bytes([c[0], c[1]]),
                olabel: u32::from_le_bytes([c[2], c[3], c[4], c[5]]),
                weight: f32::from_le_bytes([c[6], c[7], c[8], c[9]]) as f64,
                next: u32::from_le_bytes([c[10], c[11], c[12], c[13]]),
            };
            if arc.next as usize >= n || !arc.weight.is_finite() {
                return Err(Error::format("decoder graph: arc with invalid target or weight"));
            }
            flat.push(arc);
        }
        let arcs: Vec<Vec<Arc>> = offsets
            .windows(2)
            .map(|w| flat[w[0] as usize..w[1] as usize].to_vec())
            .collect();
        let mut finals = vec![None; n];
        for _ in 0..binio::read_u32(r)? {
            let s = binio::read_u32(r)? as usize;
            let weight = binio::read_f32(r)? as f64;
            if s >= n || !weight.is_finite() {
                return Err(Error::format("decoder graph: invalid final state"));
            }
            finals[s] = Some(weight);
        }
        let mut slots = Vec::new();
        for _ in 0..binio::read_u32(r)? {
            let slot = ClassSlot {
                class_word: binio::read_u32(r)?,
                entry: binio::read_u32(r)?,
                exit: binio::read_u32(r)?,
            };
            if slot.entry as usize >= n || slot.exit as usize >= n {
                return Err(Error::format("decoder graph: class slot outside the graph"));
            }
            slots.push(slot);
        }
        let phones = PhoneSet::from_symbols(binio::read_strs(r)?).map_err(|e| Error::format(e.to_string()))?;
        let words = binio::read_strs(r)?;
        if n > 0 && start as usize >= n {
            return Err(Error::format("decoder graph: start state out of range"));
        }
        Ok(Self {
            arcs,
            finals,
            start,
            ctc,
            slots,
            phones,
            words,
        })
    }
}

/// Marks `graph` for CTC decoding: blank and repeated-label self-loops are
/// applied by the decoder at every state instead of being stored as arcs.
pub fn add_ctc_topology(mut graph: WeightedFst) -> WeightedFst {
    graph.ctc = true;
    graph
}

/// Reference construction spelling out the CTC self-loops as explicit arcs,
/// for checking the implicit representation. The result is not CTC-flagged:
/// a decoder consumes exactly one non-epsilon arc per frame.
///
/// In strict mode states are paired with the last emitted label so that a
/// repeated label needs an intervening blank; otherwise every state just gets
/// a blank self-loop.
pub fn explicit_ctc_graph(graph: &WeightedFst, strict: bool) -> WeightedFst {
    let mut out = WeightedFst::new(graph.phones.clone(), graph.words.clone());
    out.slots = Vec::new();
    if !strict {
        for s in 0..graph.num_states() as StateId {
            out.add_state();
            if let Some(w) = graph.final_weight(s) {
                out.set_final(s, w);
            }
        }
        for s in 0..graph.num_states() as StateId {
            out.add_arc(s, Arc::new(BLANK_LABEL, NO_WORD, 0.0, s));
            for a in graph.arcs(s) {
                out.add_arc(s, *a);
            }
        }
        out.set_start(graph.start);
        return out;
    }
    // State (s, last) with last in 0..=num_phones, 0 meaning "none".
    let labels = graph.phones.len() + 1;
    let id = |s: StateId, last: usize| s * labels as StateId + last as StateId;
    for s in 0..graph.num_states() as StateId {
        for _ in 0..labels {
            let st = out.add_state();
            if let Some(w) = graph.final_weight(s) {
                out.set_final(st, w);
            }
        }
    }
    for s in 0..graph.num_states() as StateId {
        for last in 0..labels {
            let from = id(s, last);
            out.add_arc(from, Arc::new(BLANK_LABEL, NO_WORD, 0.0, id(s, 0)));
            if last != 0 {
                out.add_arc(from, Arc::new(last as PhoneId, NO_WORD, 0.0, from));
            }
            for a in graph.arcs(s) {
                if a.ilabel == EPSILON {
                    out.add_arc(from, Arc { next: id(a.next, last), ..*a });
                } else if a.ilabel as usize != last {
                    out.add_arc(from, Arc { next: id(a.next, a.ilabel as usize), ..*a });
                }
            }
        }
    }
    out.set_start(id(graph.start, 0));
    out.trim();
    out
}

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Read, Write};

use super::fst::{Arc, StateId, WeightedFst, DYNAMIC_WORD_BASE, NO_WORD};
use super::lexicon::{PhoneId, PhoneSet};
use super::DecodingGraph;
use crate::binio;
use crate::error::{Error, Result};

const OVERLAY_MAGIC: &[u8; 4] = b"ECO1";
const OVERLAY_VERSION: u16 = 1;

/// One injected phrase: its surface form, pronunciation and cost (negative log10).
#[derive(Debug, Clone, PartialEq)]
pub struct ContactEntry {
    pub name: String,
    pub phones: Vec<PhoneId>,
    pub weight: f64,
}

/// Parses contact lines `name<TAB>phones[<TAB>weight]`; the weight defaults to 0.
pub fn read_contacts(reader: impl BufRead, phones: &PhoneSet) -> Result<Vec<ContactEntry>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::InvalidInput(format!(
                "contacts line {}: expected name<TAB>phones[<TAB>weight]",
                i + 1
            )));
        }
        let name = fields[0].trim();
        if name.is_empty() {
            return Err(Error::InvalidInput(format!("contacts line {}: empty name", i + 1)));
        }
        let seq = phones
            .parse_sequence(fields[1])
            .map_err(|e| Error::InvalidLexicon(format!("contacts line {}: {e}", i + 1)))?;
        let weight = match fields.get(2).map(|s| s.trim()) {
            None | Some("") => 0.0,
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite())
                .ok_or_else(|| Error::InvalidInput(format!("contacts line {}: bad weight {s:?}", i + 1)))?,
        };
        out.push(ContactEntry {
            name: name.to_string(),
            phones: seq,
            weight,
        });
    }
    Ok(out)
}

/// A shared base graph plus session-local class-slot contents.
///
/// Injected phrases get word ids from [`DYNAMIC_WORD_BASE`] up; a name keeps its
/// id across re-injections within the session. The base graph is never modified.
#[derive(Debug, Clone)]
pub struct PersonalizedGraph<'g> {
    base: &'g WeightedFst,
    dyn_words: Vec<String>,
    dyn_class: Vec<u32>,
    dyn_index: HashMap<(u32, String), u32>,
    injected: BTreeMap<u32, Vec<ContactEntry>>,
    entry_arcs: HashMap<StateId, Vec<Arc>>,
    /// Arcs of overlay states, numbered after the base graph's states.
    extra: Vec<Vec<Arc>>,
}

impl<'g> PersonalizedGraph<'g> {
    pub fn new(base: &'g WeightedFst) -> Self {
        Self {
            base,
            dyn_words: Vec::new(),
            dyn_class: Vec::new(),
            dyn_index: HashMap::new(),
            injected: BTreeMap::new(),
            entry_arcs: HashMap::new(),
            extra: Vec::new(),
        }
    }

    pub fn base(&self) -> &WeightedFst {
        self.base
    }

    /// Replaces the contents of every slot of class `class` with `entries`.
    /// An empty list empties the slots. Returns the word id of each entry.
    pub fn inject(&mut self, class: &str, entries: &[ContactEntry]) -> Result<Vec<u32>> {
        let class_word = self
            .base
            .word_id(class)
            .filter(|w| self.base.slots().iter().any(|s| s.class_word == *w))
            .ok_or_else(|| Error::InvalidInput(format!("graph has no slot for class {class:?}")))?;
        for e in entries {
            self.base
                .phones()
                .check_sequence(&e.phones)
                .map_err(|err| Error::InvalidLexicon(format!("{}: {err}", e.name)))?;
            if !e.weight.is_finite() {
                return Err(Error::InvalidInput(format!("{}: weight must be finite", e.name)));
            }
        }
        let ids = entries.iter().map(|e| self.dynamic_id(class_word, &e.name)).collect();
        if entries.is_empty() {
            self.injected.remove(&class_word);
        } else {
            self.injected.insert(class_word, entries.to_vec());
        }
        self.rebuild();
        Ok(ids)
    }

    fn dynamic_id(&mut self, class_word: u32, name: &str) -> u32 {
        if let Some(&id) = self.dyn_index.get(&(class_word, name.to_string())) {
            return id;
        }
        let id = DYNAMIC_WORD_BASE + self.dyn_words.len() as u32;
        self.dyn_words.push(name.to_string());
        self.dyn_class.push(class_word);
        self.dyn_index.insert((class_word, name.to_string()), id);
        id
    }

    fn rebuild(&mut self) {
        self.entry_arcs.clear();
        self.extra.clear();
        let first_extra = self.base.num_states() as StateId;
        for slot in self.base.slots() {
            let Some(entries) = self.injected.get(&slot.class_word) else {
                continue;
            };
            for e in entries {
                let id = self.dyn_index[&(slot.class_word, e.name.clone())];
                let mut from = slot.entry;
                for (k, &p) in e.phones.iter().enumerate() {
                    let (olabel, weight, to) = if k + 1 == e.phones.len() {
                        (id, e.weight, slot.exit)
                    } else {
                        self.extra.push(Vec::new());
                        (NO_WORD, 0.0, first_extra + self.extra.len() as StateId - 1)
                    };
                    let arc = Arc::new(p, olabel, weight, to);
                    if from == slot.entry {
                        self.entry_arcs.entry(from).or_default().push(arc);
                    } else {
                        self.extra[(from - first_extra) as usize].push(arc);
                    }
                    from = to;
                }
            }
        }
    }

    /// Currently injected entries per class word.
    pub fn injected(&self) -> &BTreeMap<u32, Vec<ContactEntry>> {
        &self.injected
    }

    pub fn dynamic_words(&self) -> &[String] {
        &self.dyn_words
    }

    pub fn overlay_states(&self) -> usize {
        self.extra.len()
    }

    pub fn overlay_arcs(&self) -> usize {
        self.extra.iter().map(Vec::len).sum::<usize>() + self.entry_arcs.values().map(Vec::len).sum::<usize>()
    }
}

impl DecodingGraph for PersonalizedGraph<'_> {
    fn start(&self) -> StateId {
        self.base.start()
    }

    fn num_states(&self) -> usize {
        self.base.num_states() + self.extra.len()
    }

    fn arcs(&self, s: StateId) -> (&[Arc], &[Arc]) {
        let n = self.base.num_states() as StateId;
        if s >= n {
            return (&self.extra[(s - n) as usize], &[]);
        }
        let extra = self.entry_arcs.get(&s).map_or(&[][..], Vec::as_slice);
        (self.base.arcs(s), extra)
    }

    fn final_weight(&self, s: StateId) -> Option<f64> {
        if (s as usize) < self.base.num_states() {
            self.base.final_weight(s)
        } else {
            None
        }
    }

    fn is_ctc(&self) -> bool {
        self.base.is_ctc()
    }

    fn phones(&self) -> &PhoneSet {
        self.base.phones()
    }

    fn word(&self, olabel: u32) -> Option<&str> {
        if olabel >= DYNAMIC_WORD_BASE {
            self.dyn_words.get((olabel - DYNAMIC_WORD_BASE) as usize).map(String::as_str)
        } else {
            self.base.words().get(olabel as usize).map(String::as_str)
        }
    }

    fn class_of(&self, olabel: u32) -> Option<u32> {
        olabel
            .checked_sub(DYNAMIC_WORD_BASE)
            .and_then(|i| self.dyn_class.get(i as usize).copied())
    }
}

/// Serializes injected entries per class name ("ECO1"), for loading into a session later.
pub fn write_overlay(w: &mut impl Write, classes: &[(String, Vec<ContactEntry>)]) -> Result<()> {
    binio::write_header(w, OVERLAY_MAGIC, OVERLAY_VERSION)?;
    binio::write_u32(w, classes.len() as u32)?;
    for (class, entries) in classes {
        binio::write_str(w, class)?;
        binio::write_u32(w, entries.len() as u32)?;
        for e in entries {
            binio::write_str(w, &e.name)?;
            binio::write_u16(w, e.phones.len() as u16)?;
            binio::write_u16s(w, &e.phones)?;
            binio::write_f32(w, e.weight as f32)?;
        }
    }
    Ok(())
}

pub fn read_overlay(r: &mut impl Read) -> Result<Vec<(String, Vec<ContactEntry>)>> {
    binio::expect_header(r, OVERLAY_MAGIC, OVERLAY_VERSION, "contacts overlay")?;
    let classes = binio::read_u32(r)?;
    let mut out = Vec::new();
    for _ in 0..classes {
        let class = binio::read_str(r)?;
        let n = binio::read_u32(r)?;
        let mut entries = Vec::new();
        for _ in 0..n {
            let name = binio::read_str(r)?;
            let len = binio::read_u16(r)? as usize;
            let phones = binio::read_u16s(r, len)?;
            let weight = binio::read_f32(r)? as f64;
            entries.push(ContactEntry { name, phones, weight });
        }
        out.push((class, entries));
    }
    Ok(out)
}

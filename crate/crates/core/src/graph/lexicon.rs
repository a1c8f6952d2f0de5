use std::collections::BTreeMap;
use std::io::BufRead;

use super::fst::{Arc, WeightedFst, EPSILON, NO_WORD};
use crate::error::{Error, Result};
use crate::ngram::{Vocabulary, WordId};

/// Graph input label of a phone; 0 is epsilon, phone `i` has label `i` and is
/// scored by posterior target `i` (target 0 is blank).
pub type PhoneId = u16;

const DEFAULT_PHONES: [&str; 41] = [
    "aa", "ae", "ah", "ao", "aw", "ay", "b", "ch", "d", "dh", "eh", "er", "ey", "f", "g", "hh", "ih", "iy", "jh", "k",
    "l", "m", "n", "ng", "ow", "oy", "p", "r", "s", "sh", "t", "th", "uh", "uw", "v", "w", "y", "z", "zh", "sil", "nsn",
];

/// Ordered phone symbol table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneSet {
    symbols: Vec<String>,
}

impl Default for PhoneSet {
    fn default() -> Self {
        Self::from_symbols(DEFAULT_PHONES.iter().map(|s| s.to_string()).collect()).expect("default inventory is valid")
    }
}

impl PhoneSet {
    pub fn from_symbols(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() || symbols.len() >= PhoneId::MAX as usize {
            return Err(Error::InvalidLexicon(format!("phone inventory size {} out of range", symbols.len())));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::InvalidLexicon(format!("invalid phone symbol {s:?}")));
            }
            if symbols[..i].contains(s) {
                return Err(Error::InvalidLexicon(format!("duplicate phone symbol {s:?}")));
            }
        }
        Ok(Self { symbols })
    }

    /// One symbol per line, or whitespace separated.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_symbols(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, symbol: &str) -> Option<PhoneId> {
        self.symbols.iter().position(|s| s == symbol).map(|i| i as PhoneId + 1)
    }

    pub fn symbol(&self, id: PhoneId) -> Option<&str> {
        (id as usize).checked_sub(1).and_then(|i| self.symbols.get(i)).map(String::as_str)
    }

    pub fn contains(&self, id: PhoneId) -> bool {
        id >= 1 && (id as usize) <= self.symbols.len()
    }

    /// Parses a space-separated phone string.
    pub fn parse_sequence(&self, text: &str) -> Result<Vec<PhoneId>> {
        let seq: Vec<PhoneId> = text
            .split_whitespace()
            .map(|s| {
                self.id(s)
                    .ok_or_else(|| Error::InvalidLexicon(format!("unknown phone {s:?}")))
            })
            .collect::<Result<_>>()?;
        if seq.is_empty() {
            return Err(Error::InvalidLexicon("empty pronunciation".into()));
        }
        Ok(seq)
    }

    pub fn check_sequence(&self, phones: &[PhoneId]) -> Result<()> {
        if phones.is_empty() {
            return Err(Error::InvalidLexicon("empty pronunciation".into()));
        }
        if let Some(p) = phones.iter().find(|&&p| !self.contains(p)) {
            return Err(Error::InvalidLexicon(format!("phone id {p} outside the inventory")));
        }
        Ok(())
    }
}

/// Word pronunciations over a phone inventory. Words are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    phones: PhoneSet,
    entries: BTreeMap<String, Vec<Vec<PhoneId>>>,
}

impl Lexicon {
    pub fn new(phones: PhoneSet) -> Self {
        Self {
            phones,
            entries: BTreeMap::new(),
        }
    }

    pub fn phones(&self) -> &PhoneSet {
        &self.phones
    }

    /// Adds one pronunciation. Duplicate pronunciations are ignored.
    pub fn add(&mut self, word: &str, pronunciation: Vec<PhoneId>) -> Result<()> {
        if word.is_empty() {
            return Err(Error::InvalidLexicon("empty word".into()));
        }
        self.phones
            .check_sequence(&pronunciation)
            .map_err(|e| Error::InvalidLexicon(format!("{word}: {e}")))?;
        let prons = self.entries.entry(word.to_string()).or_default();
        if !prons.contains(&pronunciation) {
            prons.push(pronunciation);
        }
        Ok(())
    }

    pub fn add_str(&mut self, word: &str, phones: &str) -> Result<()> {
        let seq = self
            .phones
            .parse_sequence(phones)
            .map_err(|e| Error::InvalidLexicon(format!("{word}: {e}")))?;
        self.add(word, seq)
    }

    pub fn pronunciations(&self, word: &str) -> &[Vec<PhoneId>] {
        self.entries.get(word).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Vec<PhoneId>])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    /// Output symbol table for a lexicon-only transducer: reserved tokens, then words in order.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let mut v = Vocabulary::new();
        for w in self.words() {
            v.add(w)?;
        }
        Ok(v)
    }
}

/// Reads a lexicon: one pronunciation per line, the word followed by its phones.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_lexicon(reader: impl BufRead, phones: PhoneSet) -> Result<Lexicon> {
    let mut lex = Lexicon::new(phones);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (word, rest) = t.split_once(char::is_whitespace).unwrap_or((t, ""));
        lex.add_str(word, rest)
            .map_err(|e| Error::InvalidLexicon(format!("line {}: {e}", i + 1)))?;
    }
    Ok(lex)
}

/// Lexicon transducer: from the start state, each pronunciation is its own phone
/// path ending in a shared final state that loops back to the start with an
/// epsilon arc. The word is emitted on the last phone arc.
pub fn build_lexicon_fst(lexicon: &Lexicon) -> Result<WeightedFst> {
    if lexicon.is_empty() {
        return Err(Error::InvalidLexicon("empty lexicon".into()));
    }
    let vocab = lexicon.vocabulary()?;
    let mut fst = WeightedFst::new(lexicon.phones().clone(), vocab.words().to_vec());
    let start = fst.add_state();
    let end = fst.add_state();
    fst.set_start(start);
    fst.set_final(end, 0.0);
    fst.add_arc(end, Arc::new(EPSILON, NO_WORD, 0.0, start));
    for (word, prons) in lexicon.iter() {
        let id: WordId = vocab.id(word).expect("word added above");
        for pron in prons {
            let mut from = start;
            for (k, &p) in pron.iter().enumerate() {
                if k + 1 == pron.len() {
                    fst.add_arc(from, Arc::new(p, id, 0.0, end));
                } else {
                    let next = fst.add_state();
                    fst.add_arc(from, Arc::new(p, NO_WORD, 0.0, next));
                    from = next;
                }
            }
        }
    }
    Ok(fst)
}

/// Word pronunciations spelled by a lexicon transducer: every path from the
/// start that reads phones and ends with the first word-emitting arc.
pub fn lexicon_paths(fst: &WeightedFst) -> Vec<(WordId, Vec<PhoneId>)> {
    let mut out = Vec::new();
    let mut stack = vec![(fst.start(), Vec::new())];
    while let Some((state, prefix)) = stack.pop() {
        if prefix.len() > fst.num_states() {
            continue;
        }
        for arc in fst.arcs(state) {
            if arc.ilabel == EPSILON {
                continue;
            }
            let mut seq = prefix.clone();
            seq.push(arc.ilabel);
            if arc.olabel != NO_WORD {
                out.push((arc.olabel, seq));
            } else {
                stack.push((arc.next, seq));
            }
        }
    }
    out.sort();
    out
}

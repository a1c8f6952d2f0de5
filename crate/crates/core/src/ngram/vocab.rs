use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

pub type WordId = u32;

pub const BOS: WordId = 0;
pub const EOS: WordId = 1;
pub const UNK: WordId = 2;

pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";
pub const CONTACTS_CLASS: &str = "$CONTACTS";

/// Ids must fit in 16 bits.
pub const MAX_VOCAB: usize = 1 << 16;

/// Word/id table. `<s>`, `</s>` and `<unk>` always hold ids 0, 1 and 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN] {
            v.add(w).expect("reserved tokens fit");
        }
        v
    }

    /// Rebuilds a vocabulary from its word list, which must start with the reserved tokens.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 3 || words[0] != BOS_TOKEN || words[1] != EOS_TOKEN || words[2] != UNK_TOKEN {
            return Err(Error::InvalidInput("word list must start with <s>, </s>, <unk>".into()));
        }
        let mut v = Self::new();
        for w in &words[3..] {
            let before = v.len();
            v.add(w)?;
            if v.len() == before {
                return Err(Error::InvalidInput(format!("duplicate word {w:?}")));
            }
        }
        Ok(v)
    }

    /// Builds a vocabulary from every token in `sentences`, in first-seen order.
    pub fn from_sentences(sentences: &[Vec<String>]) -> Result<Self> {
        let mut v = Self::new();
        for s in sentences {
            for w in s {
                v.add(w)?;
            }
        }
        Ok(v)
    }

    /// Returns the id of `word`, inserting it if needed.
    pub fn add(&mut self, word: &str) -> Result<WordId> {
        if let Some(&id) = self.index.get(word) {
            return Ok(id);
        }
        if self.words.len() >= MAX_VOCAB {
            return Err(Error::InvalidInput(format!(
                "vocabulary is full ({MAX_VOCAB} words), cannot add {word:?}"
            )));
        }
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("invalid word {word:?}")));
        }
        let id = self.words.len() as WordId;
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn id_or_unk(&self, word: &str) -> WordId {
        self.id(word).unwrap_or(UNK)
    }

    pub fn word(&self, id: WordId) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Class tokens such as `$CONTACTS` start with `$`.
    pub fn is_class(&self, id: WordId) -> bool {
        self.word(id).is_some_and(|w| w.starts_with('$'))
    }

    /// Maps tokens to ids, sending out-of-vocabulary words to `<unk>`.
    pub fn encode<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<WordId> {
        sentence.iter().map(|w| self.id_or_unk(w.as_ref())).collect()
    }
}

/// Reads a corpus with one whitespace-tokenized sentence per line. Blank lines are skipped.
pub fn read_corpus(reader: impl BufRead) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if !tokens.is_empty() {
            out.push(tokens);
        }
    }
    Ok(out)
}

pub fn parse_corpus(text: &str) -> Vec<Vec<String>> {
    read_corpus(text.as_bytes()).expect("reading from memory cannot fail")
}

use std::io::{BufRead, Write};

use super::model::{GramTable, NGramEntry, NGramModel, LOG_ZERO};
use super::vocab::{Vocabulary, WordId, BOS, EOS, UNK};
use crate::error::{Error, Result};

/// Writes the model in ARPA text format, n-grams sorted by id sequence.
pub fn write_arpa(model: &NGramModel, w: &mut impl Write) -> Result<()> {
    let vocab = model.vocab();
    writeln!(w)?;
    writeln!(w, "\\data\\")?;
    for (n, count) in model.counts().iter().enumerate() {
        writeln!(w, "ngram {}={}", n + 1, count)?;
    }
    for n in 1..=model.order() {
        writeln!(w)?;
        writeln!(w, "\\{n}-grams:")?;
        let with_backoff = n < model.order();
        for (key, e) in model.sorted_ngrams(n) {
            write!(w, "{:.7}\t", e.log_prob.max(LOG_ZERO))?;
            for (i, &id) in key.iter().enumerate() {
                if i > 0 {
                    write!(w, " ")?;
                }
                write!(w, "{}", vocab.word(id).unwrap_or("<unk>"))?;
            }
            if with_backoff {
                write!(w, "\t{:.7}", e.backoff.max(LOG_ZERO))?;
            }
            writeln!(w)?;
        }
    }
    writeln!(w)?;
    writeln!(w, "\\end\\")?;
    Ok(())
}

pub fn arpa_string(model: &NGramModel) -> String {
    let mut buf = Vec::new();
    write_arpa(model, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("ARPA output is UTF-8")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::format(format!("ARPA line {line}: bad number {s:?}")))
}

/// Reads an ARPA file. The vocabulary holds the reserved tokens first, then the
/// remaining unigrams in file order. Reserved tokens missing from the file get
/// a log10 probability of -99.
pub fn read_arpa(r: impl BufRead) -> Result<NGramModel> {
    let mut declared: Vec<usize> = Vec::new();
    let mut raw: Vec<Vec<(f64, Vec<String>, f64)>> = Vec::new();
    let mut section: Option<usize> = None;
    let mut in_data = false;
    let mut ended = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t == "\\data\\" {
            in_data = true;
            continue;
        }
        if t == "\\end\\" {
            ended = true;
            break;
        }
        if let Some(rest) = t.strip_prefix('\\').and_then(|s| s.strip_suffix("-grams:")) {
            let n: usize = rest
                .parse()
                .map_err(|_| Error::format(format!("ARPA line {lineno}: bad section header {t:?}")))?;
            if n == 0 || n > declared.len() {
                return Err(Error::format(format!("ARPA line {lineno}: undeclared section {n}")));
            }
            section = Some(n);
            in_data = false;
            continue;
        }
        if in_data {
            let spec = t
                .strip_prefix("ngram ")
                .ok_or_else(|| Error::format(format!("ARPA line {lineno}: expected ngram count")))?;
            let (n, c) = spec
                .split_once('=')
                .ok_or_else(|| Error::format(format!("ARPA line {lineno}: bad ngram count")))?;
            let n: usize = n.trim().parse().map_err(|_| Error::format(format!("ARPA line {lineno}: bad order")))?;
            let c: usize = c.trim().parse().map_err(|_| Error::format(format!("ARPA line {lineno}: bad count")))?;
            if n != declared.len() + 1 {
                return Err(Error::format(format!("ARPA line {lineno}: orders must be declared in sequence")));
            }
            declared.push(c);
            raw.push(Vec::with_capacity(c));
            continue;
        }
        let n = section.ok_or_else(|| Error::format(format!("ARPA line {lineno}: content outside a section")))?;
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() < n + 1 || fields.len() > n + 2 {
            return Err(Error::format(format!("ARPA line {lineno}: expected {n} words")));
        }
        let lp = parse_f64(fields[0], lineno)?;
        let words = fields[1..=n].iter().map(|s| s.to_string()).collect();
        let bo = match fields.get(n + 1) {
            Some(s) => parse_f64(s, lineno)?,
            None => 0.0,
        };
        raw[n - 1].push((lp, words, bo));
    }
    if !ended {
        return Err(Error::format("ARPA file has no \\end\\ marker"));
    }
    if declared.is_empty() {
        return Err(Error::format("ARPA file declares no n-grams"));
    }
    for (n, (d, got)) in declared.iter().zip(&raw).enumerate() {
        if *d != got.len() {
            return Err(Error::format(format!(
                "{}-gram count declared {d} but found {}",
                n + 1,
                got.len()
            )));
        }
    }

    let mut vocab = Vocabulary::new();
    for (_, words, _) in &raw[0] {
        vocab.add(&words[0])?;
    }
    let mut tables: Vec<GramTable> = vec![GramTable::new(); declared.len()];
    for (n, entries) in raw.iter().enumerate() {
        for (lp, words, bo) in entries {
            let key: Vec<WordId> = words
                .iter()
                .map(|w| {
                    vocab
                        .id(w)
                        .ok_or_else(|| Error::format(format!("{}-gram uses word {w:?} with no unigram", n + 1)))
                })
                .collect::<Result<_>>()?;
            tables[n].insert(key, NGramEntry::new(*lp, *bo));
        }
    }
    for id in [BOS, EOS, UNK] {
        tables[0].entry(vec![id]).or_insert(NGramEntry::new(LOG_ZERO, 0.0));
    }
    NGramModel::from_tables(vocab, tables)
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use tinyasr::am::{lstm_forward, read_features, stack_frames, AcousticModel, Posteriorgram};
use tinyasr::decoder::RescoringLm;
use tinyasr::graph::{read_contacts, read_overlay, ContactEntry, PhoneSet, WeightedFst};
use tinyasr::louds::LoudsNGramModel;
use tinyasr::ngram::{read_arpa, NGramModel, Vocabulary, WordId};

pub const FRAME_SECONDS: f64 = 0.01;

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn magic(path: &Path) -> Result<[u8; 4]> {
    let mut m = [0u8; 4];
    let mut f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let n = f.read(&mut m)?;
    if n < 4 {
        m[n..].fill(0);
    }
    Ok(m)
}

/// Writes to a temporary sibling and renames, so a failed run leaves no partial file.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> tinyasr::Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    let mut w = BufWriter::new(File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    drop(w);
    std::fs::rename(&tmp, path).with_context(|| format!("cannot move output to {}", path.display()))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<AcousticModel> {
    AcousticModel::read_from(&mut open(path)?).with_context(|| format!("reading acoustic model {}", path.display()))
}

pub fn read_graph(path: &Path) -> Result<WeightedFst> {
    WeightedFst::read_from(&mut open(path)?).with_context(|| format!("reading decoder graph {}", path.display()))
}

pub fn read_lm(path: &Path) -> Result<NGramModel> {
    read_arpa(open(path)?).with_context(|| format!("reading ARPA model {}", path.display()))
}

pub fn read_phones(path: Option<&Path>) -> Result<PhoneSet> {
    match path {
        None => Ok(PhoneSet::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            PhoneSet::parse(&text).with_context(|| format!("reading phone set {}", p.display()))
        }
    }
}

/// A rescoring LM loaded from either a LOUDS binary or ARPA text.
pub enum AnyLm {
    Louds(LoudsNGramModel),
    Arpa(NGramModel),
}

impl AnyLm {
    pub fn load(path: &Path) -> Result<Self> {
        if &magic(path)? == b"ELD1" {
            let m = LoudsNGramModel::read_from(&mut open(path)?)
                .with_context(|| format!("reading LOUDS model {}", path.display()))?;
            Ok(Self::Louds(m))
        } else {
            Ok(Self::Arpa(read_lm(path)?))
        }
    }

    pub fn as_dyn(&self) -> &dyn RescoringLm {
        match self {
            Self::Louds(m) => m,
            Self::Arpa(m) => m,
        }
    }
}

impl RescoringLm for AnyLm {
    fn order(&self) -> usize {
        self.as_dyn().order()
    }

    fn vocab(&self) -> &Vocabulary {
        self.as_dyn().vocab()
    }

    fn log_prob(&self, word: WordId, history: &[WordId]) -> f64 {
        self.as_dyn().log_prob(word, history)
    }
}

/// Contacts from an overlay file, or from a TSV file assigned to `class`.
pub fn read_contact_sets(path: &Path, class: &str, phones: &PhoneSet) -> Result<Vec<(String, Vec<ContactEntry>)>> {
    if &magic(path)? == b"ECO1" {
        read_overlay(&mut open(path)?).with_context(|| format!("reading contacts overlay {}", path.display()))
    } else {
        let entries = read_contacts(open(path)?, phones).with_context(|| format!("reading contacts {}", path.display()))?;
        Ok(vec![(class.to_string(), entries)])
    }
}

/// Posteriors from an EPG1 file, or computed from EFT1 features with `model`.
/// Also returns the audio seconds per posterior step.
pub fn read_posteriors(path: &Path, model: Option<&AcousticModel>, default_step: f64) -> Result<(Posteriorgram, f64)> {
    match &magic(path)? {
        b"EPG1" => {
            let p = Posteriorgram::read_from(&mut open(path)?)
                .with_context(|| format!("reading posteriors {}", path.display()))?;
            Ok((p, default_step))
        }
        b"EFT1" => {
            let Some(model) = model else {
                bail!("{} holds features; --model is required to score them", path.display());
            };
            let feats = read_features(&mut open(path)?).with_context(|| format!("reading features {}", path.display()))?;
            let stacked = stack_frames(&feats, model.frontend())?;
            let post = lstm_forward(model, &stacked)?;
            Ok((post, model.frontend().skip as f64 * FRAME_SECONDS))
        }
        m => bail!(
            "format error: {} is neither posteriors (EPG1) nor features (EFT1), found magic {:?}",
            path.display(),
            String::from_utf8_lossy(m)
        ),
    }
}

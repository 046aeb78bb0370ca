//! Utterance data model, manifest and feature-file I/O, and the synthetic
//! two-dialect corpus used for oracle-checked training and evaluation.

pub mod alvf;
pub mod manifest;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mat;

pub use manifest::{load_manifest, save_manifest};
pub use synth::{generate_synthetic_corpus, SpeakerSpec, SyntheticCorpus, SyntheticCorpusConfig};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DialectId(String);

impl DialectId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!("invalid dialect id `{id}`")));
        }
        Ok(DialectId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DialectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Accent {
    H,
    L,
}

impl Accent {
    pub fn symbol(self) -> char {
        match self {
            Accent::H => 'H',
            Accent::L => 'L',
        }
    }
}

/// Parse an `H`/`L` string such as `"HLL"`.
pub fn parse_accents(s: &str) -> Result<Vec<Accent>> {
    s.chars()
        .map(|c| match c {
            'H' => Ok(Accent::H),
            'L' => Ok(Accent::L),
            other => Err(Error::Validation(format!("accent symbol `{other}` is not H or L"))),
        })
        .collect()
}

pub fn format_accents(a: &[Accent]) -> String {
    a.iter().map(|x| x.symbol()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub phoneme: usize,
    pub start: usize,
    pub end: usize,
}

/// Phoneme-to-frame alignment; `end` is exclusive.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub spans: Vec<Span>,
}

impl Alignment {
    /// Contiguous alignment built from per-phoneme frame counts, starting at frame 0.
    pub fn from_durations(durations: &[usize]) -> Result<Self> {
        let mut spans = Vec::with_capacity(durations.len());
        let mut start = 0;
        for (i, &d) in durations.iter().enumerate() {
            if d == 0 {
                return Err(Error::Duration(format!("phoneme {i} has zero frames")));
            }
            spans.push(Span {
                phoneme: i,
                start,
                end: start + d,
            });
            start += d;
        }
        Ok(Alignment { spans })
    }

    pub fn durations(&self) -> Vec<usize> {
        self.spans.iter().map(|s| s.end - s.start).collect()
    }

    pub fn total_frames(&self) -> usize {
        self.spans.last().map_or(0, |s| s.end)
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Checks ordering, contiguity and coverage of `phoneme_count` phonemes.
    pub fn validate(&self, phoneme_count: usize) -> Result<()> {
        if self.spans.len() != phoneme_count {
            return Err(Error::Validation(format!(
                "alignment has {} spans for {} phonemes",
                self.spans.len(),
                phoneme_count
            )));
        }
        for (i, s) in self.spans.iter().enumerate() {
            if s.phoneme != i {
                return Err(Error::Validation(format!(
                    "span {i} carries phoneme index {} (expected {i})",
                    s.phoneme
                )));
            }
            if s.start >= s.end {
                return Err(Error::Validation(format!("span {i} is empty or reversed ({}:{})", s.start, s.end)));
            }
            if i > 0 {
                let prev = &self.spans[i - 1];
                if s.start < prev.end {
                    return Err(Error::Validation(format!("span {i} overlaps span {}", i - 1)));
                }
                if s.start > prev.end {
                    return Err(Error::Validation(format!("gap between span {} and span {i}", i - 1)));
                }
            }
        }
        Ok(())
    }
}

/// Where an utterance's frame features live.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureRef {
    Path(PathBuf),
    Inline(Arc<Mat>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub utt_id: String,
    pub speaker_id: String,
    pub dialect: DialectId,
    pub graphemes: Vec<String>,
    pub phonemes: Vec<String>,
    pub alignment: Alignment,
    pub feature: FeatureRef,
    pub oracle_accent: Option<Vec<Accent>>,
}

impl Utterance {
    pub fn validate(&self) -> Result<()> {
        self.alignment.validate(self.phonemes.len())
    }

    /// Frame matrix, read from disk when stored by path.
    pub fn frames(&self) -> Result<Arc<Mat>> {
        match &self.feature {
            FeatureRef::Inline(m) => Ok(m.clone()),
            FeatureRef::Path(p) => Ok(Arc::new(alvf::read_alvf(p)?)),
        }
    }
}

/// Pronunciation dictionary: word → phoneme symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Phoneme inventory in sorted order.
    pub fn phoneme_inventory(&self) -> Vec<String> {
        let mut set: Vec<String> = self.entries.values().flatten().cloned().collect();
        set.sort();
        set.dedup();
        set
    }
}

/// Dictionary-lookup grapheme-to-phoneme conversion.
pub fn g2p_lookup<S: AsRef<str>>(graphemes: &[S], lexicon: &Lexicon) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for w in graphemes {
        let w = w.as_ref();
        let ph = lexicon.get(w).ok_or_else(|| Error::OutOfVocabulary(w.to_string()))?;
        out.extend_from_slice(ph);
    }
    Ok(out)
}

/// Per-word `[start, end)` phoneme ranges for a grapheme sequence.
pub fn word_spans<S: AsRef<str>>(graphemes: &[S], lexicon: &Lexicon) -> Result<Vec<(usize, usize)>> {
    let mut spans = Vec::with_capacity(graphemes.len());
    let mut start = 0;
    for w in graphemes {
        let n = lexicon
            .get(w.as_ref())
            .ok_or_else(|| Error::OutOfVocabulary(w.as_ref().to_string()))?
            .len();
        spans.push((start, start + n));
        start += n;
    }
    Ok(spans)
}

/// A dialect's word → accent-pattern table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccentRuleTable {
    pub dialect: DialectId,
    pub rules: BTreeMap<String, Vec<Accent>>,
}

impl AccentRuleTable {
    pub fn pattern(&self, word: &str) -> Option<&[Accent]> {
        self.rules.get(word).map(Vec::as_slice)
    }

    /// Every lexicon word has a rule whose length equals its mora count.
    pub fn validate(&self, lexicon: &Lexicon, morae_of: impl Fn(&[String]) -> usize) -> Result<()> {
        for (w, ph) in &lexicon.entries {
            let rule = self
                .rules
                .get(w)
                .ok_or_else(|| Error::Validation(format!("dialect {} has no accent rule for `{w}`", self.dialect)))?;
            if rule.len() != morae_of(ph) {
                return Err(Error::Validation(format!(
                    "rule for `{w}` has {} symbols but the word has {} morae",
                    rule.len(),
                    morae_of(ph)
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for DialectId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DialectId::new(s)
    }
}

//! Synthetic two-dialect pitch-accent language.
//!
//! Words are 2–4 morae, each mora a consonant–vowel pair. Every word carries an
//! H/L pattern per dialect; a configurable fraction of the lexicon differs
//! between the two dialects. Utterances are rendered as frame-level log-F0
//! (mora target + speaker offset + declination + noise) followed by an
//! 8-channel spectral proxy that depends only on the phoneme.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::alvf::{quantize_to_f32, write_alvf};
use super::manifest::{load_manifest, save_manifest};
use super::{AccentRuleTable, Accent, Alignment, DialectId, FeatureRef, Lexicon, Utterance};
use crate::error::{Error, Result};
use crate::nn::Mat;

pub const CONSONANTS: [&str; 12] = ["k", "s", "t", "n", "h", "m", "r", "g", "d", "b", "p", "z"];
pub const VOWELS: [&str; 5] = ["a", "i", "u", "e", "o"];
pub const SPECTRAL_CHANNELS: usize = 8;
/// Log-F0 channel plus the spectral proxy.
pub const FRAME_DIM: usize = 1 + SPECTRAL_CHANNELS;
/// Declination slope in log-Hz per second.
pub const DECLINATION: f64 = -0.1;
const MIN_MORAE: usize = 2;
const MAX_MORAE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSpec {
    pub speaker_id: String,
    pub native_dialect: String,
    pub log_f0_offset: f64,
    pub duration_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusConfig {
    pub lexicon_size: usize,
    pub sentence_count: usize,
    /// Inclusive `[min, max]` words per sentence.
    pub words_per_sentence: (usize, usize),
    pub divergent_fraction: f64,
    /// The first dialect is the standard one; text augmentation translates out of it.
    pub dialects: Vec<String>,
    /// Number of standard words that have a distinct second-dialect form.
    pub variant_pairs: usize,
    pub speakers: Vec<SpeakerSpec>,
    pub frame_rate: f64,
    pub high_logf0: f64,
    pub low_logf0: f64,
    pub noise_std: f64,
    pub consonant_frames: usize,
    pub vowel_frames: usize,
    /// Each phoneme gets `0..=duration_jitter` extra frames.
    pub duration_jitter: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        SyntheticCorpusConfig {
            lexicon_size: 40,
            sentence_count: 2000,
            words_per_sentence: (3, 6),
            divergent_fraction: 0.5,
            dialects: vec!["DLA".into(), "DLB".into()],
            variant_pairs: 4,
            speakers: vec![
                SpeakerSpec {
                    speaker_id: "spkA".into(),
                    native_dialect: "DLA".into(),
                    log_f0_offset: 0.0,
                    duration_scale: 1.0,
                },
                SpeakerSpec {
                    speaker_id: "spkB".into(),
                    native_dialect: "DLB".into(),
                    log_f0_offset: 0.25,
                    duration_scale: 1.2,
                },
            ],
            frame_rate: 100.0,
            high_logf0: 5.5,
            low_logf0: 5.0,
            noise_std: 0.05,
            consonant_frames: 3,
            vowel_frames: 5,
            duration_jitter: 1,
            seed: 1234,
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.divergent_fraction) {
            return bad(format!("divergent_fraction {} outside [0, 1]", self.divergent_fraction));
        }
        if self.high_logf0 <= self.low_logf0 {
            return bad("high_logf0 must exceed low_logf0".into());
        }
        if self.lexicon_size < 2 {
            return bad("lexicon_size must be at least 2".into());
        }
        let (lo, hi) = self.words_per_sentence;
        if lo == 0 || lo > hi {
            return bad(format!("invalid words_per_sentence range ({lo}, {hi})"));
        }
        if self.dialects.len() != 2 {
            return bad("the synthetic corpus has exactly two dialects".into());
        }
        if self.dialects[0] == self.dialects[1] {
            return bad("dialect ids must differ".into());
        }
        for d in &self.dialects {
            DialectId::new(d.clone()).map_err(|e| Error::Config(e.to_string()))?;
        }
        if 2 * self.variant_pairs >= self.lexicon_size {
            return bad("variant_pairs must leave standard-only words in the lexicon".into());
        }
        if self.speakers.is_empty() {
            return bad("at least one speaker is required".into());
        }
        for s in &self.speakers {
            if !self.dialects.contains(&s.native_dialect) {
                return bad(format!("speaker {} has undeclared dialect {}", s.speaker_id, s.native_dialect));
            }
            if !(s.duration_scale > 0.0) {
                return bad(format!("speaker {} needs a positive duration_scale", s.speaker_id));
            }
        }
        if !(self.frame_rate > 0.0) || !(self.noise_std >= 0.0) {
            return bad("frame_rate must be positive and noise_std nonnegative".into());
        }
        if self.consonant_frames == 0 || self.vowel_frames == 0 {
            return bad("phoneme frame counts must be positive".into());
        }
        Ok(())
    }
}

/// A generated corpus together with everything needed to score it.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub config: SyntheticCorpusConfig,
    pub utterances: Vec<Utterance>,
    pub lexicon: Lexicon,
    pub rule_tables: BTreeMap<DialectId, AccentRuleTable>,
    /// Standard word → second-dialect form.
    pub variants: BTreeMap<String, String>,
    pub spectral: BTreeMap<String, Vec<f64>>,
}

/// Corpus metadata stored next to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub config: SyntheticCorpusConfig,
    pub lexicon: Lexicon,
    pub rule_tables: BTreeMap<DialectId, AccentRuleTable>,
    pub variants: BTreeMap<String, String>,
    pub spectral: BTreeMap<String, Vec<f64>>,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const INFO_FILE: &str = "corpus.json";

impl SyntheticCorpus {
    pub fn standard_dialect(&self) -> DialectId {
        DialectId(self.config.dialects[0].clone())
    }

    pub fn other_dialect(&self) -> DialectId {
        DialectId(self.config.dialects[1].clone())
    }

    pub fn dialects(&self) -> Vec<DialectId> {
        self.config.dialects.iter().map(|d| DialectId(d.clone())).collect()
    }

    /// Words that can appear in standard-dialect text.
    pub fn standard_vocabulary(&self) -> Vec<String> {
        let variant_forms: BTreeSet<&String> = self.variants.values().collect();
        self.lexicon.words().filter(|w| !variant_forms.contains(w)).cloned().collect()
    }

    /// Rewrite a standard-dialect sentence into `dialect` by substituting variant forms.
    pub fn to_dialect(&self, words: &[String], dialect: &DialectId) -> Vec<String> {
        if *dialect == self.standard_dialect() {
            return words.to_vec();
        }
        words
            .iter()
            .map(|w| self.variants.get(w).cloned().unwrap_or_else(|| w.clone()))
            .collect()
    }

    /// Oracle H/L per mora for a word sequence in `dialect`.
    pub fn oracle_for(&self, words: &[String], dialect: &DialectId) -> Result<Vec<Accent>> {
        let table = self
            .rule_tables
            .get(dialect)
            .ok_or_else(|| Error::Vocabulary {
                kind: "dialect",
                token: dialect.to_string(),
            })?;
        let mut out = Vec::new();
        for w in words {
            let p = table.pattern(w).ok_or_else(|| Error::OutOfVocabulary(w.clone()))?;
            out.extend_from_slice(p);
        }
        Ok(out)
    }

    /// Words whose accent pattern differs between the two dialects.
    pub fn divergent_words(&self) -> BTreeSet<String> {
        let a = &self.rule_tables[&self.standard_dialect()];
        let b = &self.rule_tables[&self.other_dialect()];
        a.rules
            .iter()
            .filter(|(w, p)| b.rules.get(*w) != Some(*p))
            .map(|(w, _)| w.clone())
            .collect()
    }

    /// Standard-dialect text sentences drawn from the same grammar as the speech corpus.
    pub fn generate_text_sentences(&self, count: usize, seed: u64) -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = self.standard_vocabulary();
        let (lo, hi) = self.config.words_per_sentence;
        (0..count)
            .map(|_| {
                let n = rng.gen_range(lo..=hi);
                (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect()
            })
            .collect()
    }

    /// Render one sentence for a speaker (used for held-out evaluation material).
    pub fn render(&self, utt_id: &str, speaker: &SpeakerSpec, words: &[String], rng: &mut ChaCha8Rng) -> Result<Utterance> {
        let dialect = DialectId::new(speaker.native_dialect.clone())?;
        render_utterance(self, utt_id, speaker, &dialect, words, rng)
    }

    pub fn speaker(&self, speaker_id: &str) -> Option<&SpeakerSpec> {
        self.config.speakers.iter().find(|s| s.speaker_id == speaker_id)
    }

    pub fn info(&self) -> CorpusInfo {
        CorpusInfo {
            config: self.config.clone(),
            lexicon: self.lexicon.clone(),
            rule_tables: self.rule_tables.clone(),
            variants: self.variants.clone(),
            spectral: self.spectral.clone(),
        }
    }

    /// Write features, manifest and metadata under `dir`, switching the
    /// utterances to on-disk feature references.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        let feat_dir = dir.join("features");
        fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
        for u in &mut self.utterances {
            let frames = u.frames()?;
            let path = feat_dir.join(format!("{}.alvf", u.utt_id));
            write_alvf(&path, &frames)?;
            u.feature = FeatureRef::Path(path);
        }
        let manifest = dir.join(MANIFEST_FILE);
        save_manifest(&self.utterances, &manifest)?;
        let info = dir.join(INFO_FILE);
        let json = serde_json::to_string_pretty(&self.info())?;
        fs::write(&info, json).map_err(|e| Error::io(&info, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let info_path = dir.join(INFO_FILE);
        let text = fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
        let info: CorpusInfo = serde_json::from_str(&text)?;
        let utterances = load_manifest(&dir.join(MANIFEST_FILE))?;
        Ok(SyntheticCorpus {
            config: info.config,
            utterances,
            lexicon: info.lexicon,
            rule_tables: info.rule_tables,
            variants: info.variants,
            spectral: info.spectral,
        })
    }
}

/// Morae of a consonant–vowel language: consecutive phoneme pairs.
pub fn mora_groups(phoneme_count: usize) -> Vec<(usize, usize)> {
    (0..phoneme_count / 2).map(|m| (2 * m, 2 * m + 2)).collect()
}

fn random_pattern(rng: &mut ChaCha8Rng, morae: usize, exclude: Option<&[Accent]>) -> Vec<Accent> {
    loop {
        let p: Vec<Accent> = (0..morae)
            .map(|_| if rng.gen_bool(0.5) { Accent::H } else { Accent::L })
            .collect();
        let mixed = p.contains(&Accent::H) && p.contains(&Accent::L);
        if mixed && exclude != Some(p.as_slice()) {
            return p;
        }
    }
}

pub fn generate_synthetic_corpus(config: &SyntheticCorpusConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut words: Vec<(String, Vec<String>)> = Vec::with_capacity(config.lexicon_size);
    let mut seen = BTreeSet::new();
    while words.len() < config.lexicon_size {
        let morae = rng.gen_range(MIN_MORAE..=MAX_MORAE);
        let mut ph = Vec::with_capacity(2 * morae);
        for _ in 0..morae {
            ph.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())].to_string());
            ph.push(VOWELS[rng.gen_range(0..VOWELS.len())].to_string());
        }
        let grapheme = ph.concat();
        if seen.insert(grapheme.clone()) {
            words.push((grapheme, ph));
        }
    }
    let lexicon = Lexicon {
        entries: words.iter().cloned().collect(),
    };

    let mut order: Vec<usize> = (0..words.len()).collect();
    order.shuffle(&mut rng);
    let variants: BTreeMap<String, String> = (0..config.variant_pairs)
        .map(|i| (words[order[i]].0.clone(), words[order[config.variant_pairs + i]].0.clone()))
        .collect();

    let dia_a = DialectId::new(config.dialects[0].clone())?;
    let dia_b = DialectId::new(config.dialects[1].clone())?;
    let mut rules_a = BTreeMap::new();
    for (w, ph) in &words {
        rules_a.insert(w.clone(), random_pattern(&mut rng, ph.len() / 2, None));
    }
    let n_div = (config.divergent_fraction * config.lexicon_size as f64).floor() as usize;
    let mut div_order: Vec<usize> = (0..words.len()).collect();
    div_order.shuffle(&mut rng);
    let divergent: BTreeSet<usize> = div_order[..n_div].iter().copied().collect();
    let mut rules_b = BTreeMap::new();
    for (i, (w, ph)) in words.iter().enumerate() {
        let a = &rules_a[w];
        let b = if divergent.contains(&i) {
            random_pattern(&mut rng, ph.len() / 2, Some(a))
        } else {
            a.clone()
        };
        rules_b.insert(w.clone(), b);
    }
    let mut rule_tables = BTreeMap::new();
    rule_tables.insert(
        dia_a.clone(),
        AccentRuleTable {
            dialect: dia_a.clone(),
            rules: rules_a,
        },
    );
    rule_tables.insert(
        dia_b.clone(),
        AccentRuleTable {
            dialect: dia_b,
            rules: rules_b,
        },
    );

    let mut spectral = BTreeMap::new();
    for p in CONSONANTS.iter().chain(VOWELS.iter()) {
        let v: Vec<f64> = (0..SPECTRAL_CHANNELS).map(|_| rng.gen_range(-1.0..1.0)).collect();
        spectral.insert(p.to_string(), v);
    }

    let mut corpus = SyntheticCorpus {
        config: config.clone(),
        utterances: Vec::with_capacity(config.sentence_count),
        lexicon,
        rule_tables,
        variants,
        spectral,
    };

    let vocab = corpus.standard_vocabulary();
    let (lo, hi) = config.words_per_sentence;
    for i in 0..config.sentence_count {
        let speaker = &config.speakers[i % config.speakers.len()];
        let dialect = DialectId::new(speaker.native_dialect.clone())?;
        let n = rng.gen_range(lo..=hi);
        let standard: Vec<String> = (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect();
        let words = corpus.to_dialect(&standard, &dialect);
        let utt = render_utterance(&corpus, &format!("utt{i:05}"), speaker, &dialect, &words, &mut rng)?;
        corpus.utterances.push(utt);
    }
    Ok(corpus)
}

fn render_utterance(
    corpus: &SyntheticCorpus,
    utt_id: &str,
    speaker: &SpeakerSpec,
    dialect: &DialectId,
    words: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Utterance> {
    let cfg = &corpus.config;
    let phonemes = super::g2p_lookup(words, &corpus.lexicon)?;
    let accents = corpus.oracle_for(words, dialect)?;
    let durations: Vec<usize> = phonemes
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let base = if i % 2 == 0 { cfg.consonant_frames } else { cfg.vowel_frames };
            let scaled = (base as f64 * speaker.duration_scale).round() as usize;
            (scaled + rng.gen_range(0..=cfg.duration_jitter)).max(1)
        })
        .collect();
    let alignment = Alignment::from_durations(&durations)?;
    let total = alignment.total_frames();
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut frames = Mat::zeros(total, FRAME_DIM);
    for span in &alignment.spans {
        let target = match accents[span.phoneme / 2] {
            Accent::H => cfg.high_logf0,
            Accent::L => cfg.low_logf0,
        };
        let spec = &corpus.spectral[&phonemes[span.phoneme]];
        for t in span.start..span.end {
            let time = (t as f64 + 0.5) / cfg.frame_rate;
            let row = frames.row_mut(t);
            row[0] = target + speaker.log_f0_offset + DECLINATION * time + sample(&noise, rng);
            for (c, s) in spec.iter().enumerate() {
                row[1 + c] = s + sample(&noise, rng);
            }
        }
    }
    quantize_to_f32(&mut frames);
    Ok(Utterance {
        utt_id: utt_id.to_string(),
        speaker_id: speaker.speaker_id.clone(),
        dialect: dialect.clone(),
        graphemes: words.to_vec(),
        phonemes,
        alignment,
        feature: FeatureRef::Inline(Arc::new(frames)),
        oracle_accent: Some(accents),
    })
}

fn sample(noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> f64 {
    if noise.std_dev() == 0.0 {
        0.0
    } else {
        noise.sample(rng)
    }
}

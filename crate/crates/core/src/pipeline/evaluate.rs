//! Objective evaluation of a trained run, summarised as one metrics JSON file.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::run::Pipeline;
use super::{make_provider, write_json, Splits};
use crate::alvpredictor::AlvPredictor;
use crate::augment::TranslationRecord;
use crate::backbone::{Backbone, Mode, Synthesis};
use crate::checkpoint::config_hash;
use crate::corpus::synth::{mora_groups, SyntheticCorpus};
use crate::corpus::{g2p_lookup, Accent, Alignment, DialectId, Utterance};
use crate::error::{Error, Result};
use crate::evalkit::{
    alv_oracle_accuracy, corpus_bleu4, implied_accents, logf0_by_alv, mora_alvs, optimal_mapping, phoneme_log_f0,
    speaker_similarity, AcousticSample, ClassMapping, ClassStats, DeskEmbedder, LogF0Report, MappingMode,
    ScoredUtterance,
};
use crate::features::ProsodyProvider;
use crate::quantizer::{AlvSequence, ReferenceEncoder};

/// JSON schema of the metrics file.
pub const METRICS_SCHEMA: &str = include_str!("../../schemas/metrics.schema.json");

/// A metric block that either ran or was skipped for a stated reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Block<T> {
    Ok(T),
    Skipped { reason: String },
}

impl<T> Block<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Block::Ok(t) => Some(t),
            Block::Skipped { .. } => None,
        }
    }

    fn from_result(r: Result<T>) -> Result<Self> {
        match r {
            Ok(t) => Ok(Block::Ok(t)),
            Err(Error::Config(reason)) => Ok(Block::Skipped { reason }),
            Err(e) => Err(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdAlvMetrics {
    /// Reference-encoder ALVs on the test split against the oracle.
    pub reference_accuracy: f64,
    pub reference_morae: usize,
    /// Predicted ALVs for the native dialect, when a predictor exists.
    pub predicted_accuracy: Option<f64>,
    pub mapping: Vec<Accent>,
    pub calibration_utterances: usize,
    pub test_utterances: usize,
    pub codebook_perplexity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CdScore {
    /// Morae inside divergent words.
    pub morae: usize,
    pub predicted_alv_accuracy: Option<f64>,
    /// Accents implied by log-F0 synthesised from the predicted ALVs.
    pub predicted_alv_f0_accuracy: Option<f64>,
    /// Accents implied by log-F0 synthesised without ALVs.
    pub no_alv_f0_accuracy: Option<f64>,
    /// `predicted_alv_accuracy - no_alv_f0_accuracy`.
    pub improvement: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DialectSensitivity {
    pub divergent_occurrences: usize,
    pub differing_occurrences: usize,
    pub differ_rate: Option<f64>,
    pub phonemes: usize,
    pub agreeing_phonemes: usize,
    pub agreement_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdAlvMetrics {
    pub sentences: usize,
    pub overall: CdScore,
    /// Keyed by `<speaker>-><target dialect>`.
    pub by_speaker: BTreeMap<String, CdScore>,
    pub dialect_sensitivity: DialectSensitivity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogF0Metrics {
    /// Mean synthesised log-F0 with every phoneme forced to one class.
    pub forced_means: Vec<Option<f64>>,
    pub forced_ordering: Vec<usize>,
    pub forced_increasing_exists: bool,
    pub forced_min_gap: Option<f64>,
    /// Ground-truth log-F0 of test phonemes bucketed by extracted ALV.
    pub reference_classes: Vec<ClassStats>,
    pub reference_ordering: Vec<usize>,
    pub reference_min_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSimilarity {
    pub id: Option<f64>,
    pub cd: Option<f64>,
    /// Similarity of this speaker's synthesis to the other speakers' references.
    pub cross_speaker: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMetrics {
    pub embedder: String,
    pub alv_source: String,
    pub speakers: BTreeMap<String, SpeakerSimilarity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuMetrics {
    pub bleu4: f64,
    pub candidates: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Hash of the run configuration with `paths` reset to defaults.
    pub config_hash: String,
    pub seed: u64,
    pub checkpoints: BTreeMap<String, String>,
    pub id_alv: Block<IdAlvMetrics>,
    pub cd_alv: Block<CdAlvMetrics>,
    pub logf0_by_alv: Block<LogF0Metrics>,
    pub speaker_similarity: Block<SimilarityMetrics>,
    pub bleu4: Block<BleuMetrics>,
}

pub fn score_reference(
    encoder: &ReferenceEncoder,
    provider: &dyn ProsodyProvider,
    utterances: &[&Utterance],
) -> Result<Vec<ScoredUtterance>> {
    utterances
        .iter()
        .map(|u| {
            Ok(ScoredUtterance {
                alvs: encoder.extract_alv(u, provider)?.0,
                oracle: u.oracle_accent.clone(),
            })
        })
        .collect()
}

/// Per-mora flags marking morae that belong to divergent words.
pub fn divergent_mora_mask(words: &[String], corpus: &SyntheticCorpus, divergent: &BTreeSet<String>) -> Result<Vec<bool>> {
    let mut mask = Vec::new();
    for w in words {
        let ph = corpus
            .lexicon
            .get(w)
            .ok_or_else(|| Error::OutOfVocabulary(w.clone()))?;
        mask.extend(std::iter::repeat(divergent.contains(w)).take(mora_groups(ph.len()).len()));
    }
    Ok(mask)
}

/// Accents implied by a synthesis: phoneme-mean log-F0 of the voiced frames,
/// falling back to the predicted phoneme pitch where no frame is voiced.
pub fn synthesis_accents(syn: &Synthesis) -> Result<Vec<Accent>> {
    let alignment = Alignment::from_durations(&syn.durations)?;
    let per_phoneme = phoneme_log_f0(&syn.frames, &alignment)?;
    let values: Vec<f64> = per_phoneme
        .iter()
        .zip(&syn.pitch)
        .map(|(v, p)| v.unwrap_or(*p))
        .collect();
    Ok(implied_accents(&values))
}

#[derive(Default)]
struct Tally {
    morae: usize,
    alv: usize,
    alv_f0: usize,
    no_alv_f0: usize,
    with_synthesis: bool,
}

impl Tally {
    fn score(&self) -> CdScore {
        let rate = |c: usize| (self.morae > 0).then(|| c as f64 / self.morae as f64);
        let alv = rate(self.alv);
        let (alv_f0, no_alv) = if self.with_synthesis {
            (rate(self.alv_f0), rate(self.no_alv_f0))
        } else {
            (None, None)
        };
        CdScore {
            morae: self.morae,
            predicted_alv_accuracy: alv,
            predicted_alv_f0_accuracy: alv_f0,
            no_alv_f0_accuracy: no_alv,
            improvement: alv.zip(no_alv).map(|(a, b)| a - b),
        }
    }
}

/// Cross-dialect scoring: each speaker reads every sentence in the dialect it
/// was not trained on, and divergent-word morae are compared with that
/// dialect's oracle.
pub fn cd_scores(
    corpus: &SyntheticCorpus,
    predictor: &AlvPredictor,
    backbone: Option<&Backbone>,
    mapping: &ClassMapping,
    standard_sentences: &[Vec<String>],
) -> Result<(CdScore, BTreeMap<String, CdScore>)> {
    let divergent = corpus.divergent_words();
    let mut overall = Tally {
        with_synthesis: backbone.is_some(),
        ..Tally::default()
    };
    let mut by_speaker = BTreeMap::new();
    for spk in &corpus.config.speakers {
        let target = corpus
            .dialects()
            .into_iter()
            .find(|d| d.as_str() != spk.native_dialect)
            .ok_or_else(|| Error::Config("corpus needs a second dialect".into()))?;
        let mut t = Tally {
            with_synthesis: backbone.is_some(),
            ..Tally::default()
        };
        for s in standard_sentences {
            let words = corpus.to_dialect(s, &target);
            let phonemes = g2p_lookup(&words, &corpus.lexicon)?;
            let oracle = corpus.oracle_for(&words, &target)?;
            let mask = divergent_mora_mask(&words, corpus, &divergent)?;
            let (alvs, _) = predictor.predict_alv(&phonemes, &target)?;
            let predicted: Vec<Accent> = mora_alvs(&alvs.0)
                .into_iter()
                .map(|a| mapping.label(a))
                .collect::<Result<_>>()?;
            let synth = match backbone {
                Some(b) => Some((
                    synthesis_accents(&b.synthesize(&phonemes, &spk.speaker_id, Some(&alvs), Mode::FreeRunning, None)?)?,
                    synthesis_accents(&b.synthesize(&phonemes, &spk.speaker_id, None, Mode::FreeRunning, None)?)?,
                )),
                None => None,
            };
            for (m, &on) in mask.iter().enumerate() {
                if !on {
                    continue;
                }
                t.morae += 1;
                t.alv += usize::from(predicted[m] == oracle[m]);
                if let Some((with, without)) = &synth {
                    t.alv_f0 += usize::from(with[m] == oracle[m]);
                    t.no_alv_f0 += usize::from(without[m] == oracle[m]);
                }
            }
        }
        overall.morae += t.morae;
        overall.alv += t.alv;
        overall.alv_f0 += t.alv_f0;
        overall.no_alv_f0 += t.no_alv_f0;
        by_speaker.insert(format!("{}->{}", spk.speaker_id, target), t.score());
    }
    Ok((overall.score(), by_speaker))
}

/// Compares predictions for the same phonemes under every pair of dialect tokens.
pub fn dialect_sensitivity(
    corpus: &SyntheticCorpus,
    predictor: &AlvPredictor,
    standard_sentences: &[Vec<String>],
) -> Result<DialectSensitivity> {
    let divergent = corpus.divergent_words();
    let dialects = corpus.dialects();
    let mut out = DialectSensitivity::default();
    for s in standard_sentences {
        let phonemes = g2p_lookup(s, &corpus.lexicon)?;
        let preds: Vec<AlvSequence> = dialects
            .iter()
            .map(|d| predictor.predict_alv(&phonemes, d).map(|p| p.0))
            .collect::<Result<_>>()?;
        for a in 0..preds.len() {
            for b in a + 1..preds.len() {
                let (pa, pb) = (&preds[a].0, &preds[b].0);
                out.phonemes += pa.len();
                out.agreeing_phonemes += pa.iter().zip(pb).filter(|(x, y)| x == y).count();
                let mut start = 0;
                for w in s {
                    let len = corpus.lexicon.get(w).map_or(0, <[String]>::len);
                    if divergent.contains(w) {
                        out.divergent_occurrences += 1;
                        out.differing_occurrences += usize::from(pa[start..start + len] != pb[start..start + len]);
                    }
                    start += len;
                }
            }
        }
    }
    out.differ_rate =
        (out.divergent_occurrences > 0).then(|| out.differing_occurrences as f64 / out.divergent_occurrences as f64);
    out.agreement_rate = (out.phonemes > 0).then(|| out.agreeing_phonemes as f64 / out.phonemes as f64);
    Ok(out)
}

/// Synthesises `items` with every phoneme forced to each class in turn and
/// buckets the synthesised phoneme log-F0 by class.
pub fn forced_class_logf0(backbone: &Backbone, items: &[(Vec<String>, String)]) -> Result<LogF0Report> {
    let k = backbone.config.codes;
    let mut rows = Vec::new();
    for class in 0..k {
        for (phonemes, speaker) in items {
            let alvs = AlvSequence::constant(class, phonemes.len());
            let syn = backbone.synthesize(phonemes, speaker, Some(&alvs), Mode::FreeRunning, None)?;
            let alignment = Alignment::from_durations(&syn.durations)?;
            rows.push((phoneme_log_f0(&syn.frames, &alignment)?, alvs.0));
        }
    }
    logf0_by_alv(&rows, k)
}

fn acoustic(u: &Utterance) -> Result<AcousticSample> {
    Ok(AcousticSample {
        frames: (*u.frames()?).clone(),
        durations: u.alignment.durations(),
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

const SIMILARITY_REFERENCES: usize = 50;
const SIMILARITY_SYNTHESES: usize = 20;

impl Pipeline {
    /// Runs every metric whose checkpoints exist, writes `metrics.json` and
    /// the log-F0 plot data, and returns the summary.
    pub fn evaluate(&self) -> Result<Metrics> {
        let corpus = self.corpus()?;
        let splits = self.splits(&corpus);
        let provider = make_provider(&self.config)?;
        let ev = &self.config.evaluation;
        let cd_text = corpus.generate_text_sentences(ev.cd_sentences, ev.text_seed);
        let mut checkpoints = BTreeMap::new();

        let quantizer = self.load_quantizer();
        let quantizer = match quantizer {
            Ok(q) => Some(q),
            Err(Error::Config(_)) => None,
            Err(e) => return Err(e),
        };
        let backbone = match &quantizer {
            Some((_, qh)) => match self.load_backbone(qh) {
                Ok(b) => Some(b),
                Err(Error::Config(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        let predictor = match &quantizer {
            Some((_, qh)) => match self.load_predictor(None, qh) {
                Ok(p) => Some(p),
                Err(Error::Config(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        if let Some((_, h)) = &quantizer {
            checkpoints.insert("quantizer".to_string(), h.clone());
        }
        if let Some((_, h)) = &backbone {
            checkpoints.insert("backbone".to_string(), h.clone());
        }
        if let Some((_, h)) = &predictor {
            checkpoints.insert("predictor".to_string(), h.clone());
        }

        let calibration = Splits::select(&corpus.utterances, &splits.calibration);
        let test = Splits::select(&corpus.utterances, &splits.test);

        let mapping: Option<ClassMapping> = match &quantizer {
            Some((enc, _)) => Some(optimal_mapping(
                &score_reference(enc, provider.as_ref(), &calibration)?,
                enc.config.codes,
            )?),
            None => None,
        };

        let id_alv = Block::from_result((|| {
            let (enc, _) = quantizer.as_ref().ok_or_else(|| Error::Config("no quantizer checkpoint (run `train-stage1`)".into()))?;
            let mapping = mapping.clone().expect("mapping follows the quantizer");
            let scored = score_reference(enc, provider.as_ref(), &test)?;
            let r = alv_oracle_accuracy(&scored, MappingMode::Given(mapping.clone()))?;
            let predicted_accuracy = match &predictor {
                Some((p, _)) => {
                    let scored: Vec<ScoredUtterance> = test
                        .iter()
                        .map(|u| {
                            Ok(ScoredUtterance {
                                alvs: p.predict_alv(&u.phonemes, &u.dialect)?.0 .0,
                                oracle: u.oracle_accent.clone(),
                            })
                        })
                        .collect::<Result<_>>()?;
                    Some(alv_oracle_accuracy(&scored, MappingMode::Given(mapping.clone()))?.accuracy)
                }
                None => None,
            };
            Ok(IdAlvMetrics {
                reference_accuracy: r.accuracy,
                reference_morae: r.morae,
                predicted_accuracy,
                mapping: mapping.0.clone(),
                calibration_utterances: calibration.len(),
                test_utterances: test.len(),
                codebook_perplexity: enc.perplexity(),
            })
        })())?;

        let cd_alv = Block::from_result((|| {
            let (p, _) = predictor
                .as_ref()
                .ok_or_else(|| Error::Config("no ALV predictor checkpoint (run `train-stage2`)".into()))?;
            let mapping = mapping.as_ref().expect("predictor implies quantizer");
            let (overall, by_speaker) = cd_scores(&corpus, p, backbone.as_ref().map(|b| &b.0), mapping, &cd_text)?;
            Ok(CdAlvMetrics {
                sentences: cd_text.len(),
                overall,
                by_speaker,
                dialect_sensitivity: dialect_sensitivity(&corpus, p, &cd_text)?,
            })
        })())?;

        let logf0 = Block::from_result((|| {
            let (enc, _) = quantizer.as_ref().ok_or_else(|| Error::Config("no quantizer checkpoint (run `train-stage1`)".into()))?;
            let (bb, _) = backbone
                .as_ref()
                .ok_or_else(|| Error::Config("no backbone checkpoint (run `train-stage1`)".into()))?;
            let items: Vec<(Vec<String>, String)> = test
                .iter()
                .take(ev.forced_sentences)
                .map(|u| (u.phonemes.clone(), u.speaker_id.clone()))
                .collect();
            let forced = forced_class_logf0(bb, &items)?;
            let mut rows = Vec::new();
            for u in &test {
                let frames = u.frames()?;
                rows.push((phoneme_log_f0(&frames, &u.alignment)?, enc.extract_alv(u, provider.as_ref())?.0));
            }
            let reference = logf0_by_alv(&rows, enc.config.codes)?;
            let dir = self.layout.eval_dir();
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            reference.write_points_csv(&dir.join("logf0_reference_points.csv"))?;
            reference.write_stats_tsv(&dir.join("logf0_reference_stats.tsv"))?;
            forced.write_points_csv(&dir.join("logf0_forced_points.csv"))?;
            forced.write_stats_tsv(&dir.join("logf0_forced_stats.tsv"))?;
            Ok(LogF0Metrics {
                forced_means: forced.classes.iter().map(|c| c.mean).collect(),
                forced_ordering: forced.ordering.clone(),
                forced_increasing_exists: forced.increasing_exists,
                forced_min_gap: forced.min_adjacent_gap,
                reference_classes: reference.classes.clone(),
                reference_ordering: reference.ordering.clone(),
                reference_min_gap: reference.min_adjacent_gap,
            })
        })())?;

        let similarity = Block::from_result((|| {
            let (enc, _) = quantizer.as_ref().ok_or_else(|| Error::Config("no quantizer checkpoint (run `train-stage1`)".into()))?;
            let (bb, _) = backbone
                .as_ref()
                .ok_or_else(|| Error::Config("no backbone checkpoint (run `train-stage1`)".into()))?;
            let train = Splits::select(&corpus.utterances, &splits.train);
            let mut refs: BTreeMap<String, Vec<AcousticSample>> = BTreeMap::new();
            for spk in &corpus.config.speakers {
                let r: Vec<AcousticSample> = train
                    .iter()
                    .filter(|u| u.speaker_id == spk.speaker_id)
                    .take(SIMILARITY_REFERENCES)
                    .map(|u| acoustic(u))
                    .collect::<Result<_>>()?;
                refs.insert(spk.speaker_id.clone(), r);
            }
            let embedder = DeskEmbedder;
            let mut speakers = BTreeMap::new();
            for spk in &corpus.config.speakers {
                let sid = &spk.speaker_id;
                let native = DialectId::new(spk.native_dialect.clone())?;
                let mut id_s = Vec::new();
                let mut cross = Vec::new();
                for u in test.iter().filter(|u| &u.speaker_id == sid).take(SIMILARITY_SYNTHESES) {
                    let alvs = match &predictor {
                        Some((p, _)) => p.predict_alv(&u.phonemes, &native)?.0,
                        None => enc.extract_alv(u, provider.as_ref())?,
                    };
                    let syn = bb.synthesize(&u.phonemes, sid, Some(&alvs), Mode::FreeRunning, None)?;
                    let sample = AcousticSample {
                        frames: syn.frames,
                        durations: syn.durations,
                    };
                    id_s.push(speaker_similarity(&sample, &refs[sid], &embedder)?);
                    for (other, r) in &refs {
                        if other != sid {
                            cross.push(speaker_similarity(&sample, r, &embedder)?);
                        }
                    }
                }
                let mut cd_s = Vec::new();
                if let Some((p, _)) = &predictor {
                    let target = corpus
                        .dialects()
                        .into_iter()
                        .find(|d| d.as_str() != spk.native_dialect)
                        .expect("two dialects");
                    for s in cd_text.iter().take(SIMILARITY_SYNTHESES) {
                        let words = corpus.to_dialect(s, &target);
                        let phonemes = g2p_lookup(&words, &corpus.lexicon)?;
                        let alvs = p.predict_alv(&phonemes, &target)?.0;
                        let syn = bb.synthesize(&phonemes, sid, Some(&alvs), Mode::FreeRunning, None)?;
                        let sample = AcousticSample {
                            frames: syn.frames,
                            durations: syn.durations,
                        };
                        cd_s.push(speaker_similarity(&sample, &refs[sid], &embedder)?);
                    }
                }
                speakers.insert(
                    sid.clone(),
                    SpeakerSimilarity {
                        id: mean(&id_s),
                        cd: mean(&cd_s),
                        cross_speaker: mean(&cross),
                    },
                );
            }
            Ok(SimilarityMetrics {
                embedder: "desk".into(),
                alv_source: if predictor.is_some() { "predicted" } else { "reference" }.into(),
                speakers,
            })
        })())?;

        let bleu = Block::from_result((|| {
            let records: Vec<TranslationRecord> = self
                .translations()?
                .ok_or_else(|| Error::Config("no translations (run `augment`)".into()))?;
            let mut candidates = Vec::new();
            let mut references = Vec::new();
            let mut failed = 0;
            for r in &records {
                let Some(text) = &r.translated else {
                    failed += 1;
                    continue;
                };
                let original: Vec<String> = r.original.split_whitespace().map(str::to_string).collect();
                let target = DialectId::new(r.target_dialect.clone())?;
                candidates.push(text.split_whitespace().map(str::to_string).collect());
                references.push(vec![corpus.to_dialect(&original, &target)]);
            }
            Ok(BleuMetrics {
                bleu4: corpus_bleu4(&candidates, &references)?,
                candidates: candidates.len(),
                failed,
            })
        })())?;

        // Output locations do not affect results, so they stay out of the hash.
        let mut hashed = self.config.clone();
        hashed.paths = Default::default();
        let metrics = Metrics {
            config_hash: config_hash(&hashed),
            seed: self.config.seed,
            checkpoints,
            id_alv,
            cd_alv,
            logf0_by_alv: logf0,
            speaker_similarity: similarity,
            bleu4: bleu,
        };
        write_json(&self.layout.metrics(), &metrics)?;
        Ok(metrics)
    }
}

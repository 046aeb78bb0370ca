//! Disk-backed stage drivers used by the command-line tool.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stage1::{init_models, prepare_items, train_stage1, Stage1Report};
use super::{ensure_parent, make_provider, read_json, write_json, Layout, Splits};
use crate::alvpredictor::{AlvExample, AlvPredictor, FinetuneReport};
use crate::augment::{
    assemble_multidialect_corpus, translate_corpus, write_audit_log, PromptTemplate, RemoteLlm, RuleBased,
    TranslationRecord, TranslatorBackend,
};
use crate::backbone::{render_wav, Backbone, Mode};
use crate::checkpoint::Checkpoint;
use crate::config::{BackendKind, PretrainText, RunConfig};
use crate::corpus::alvf::write_alvf;
use crate::corpus::synth::{generate_synthetic_corpus, SyntheticCorpus, INFO_FILE};
use crate::corpus::{g2p_lookup, DialectId, Utterance};
use crate::error::{Error, Result};
use crate::mdplbert::{dialect_counts, read_text_corpus, write_text_corpus, BertVocab, MdPlBert, PretrainLog};
use crate::nn::Mat;
use crate::quantizer::{self, AlvSequence, ReferenceEncoder};

/// Phoneme-level ALVs extracted by one quantizer, keyed by utterance id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlvCache {
    pub quantizer_hash: String,
    pub alvs: BTreeMap<String, AlvSequence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub manifest: PathBuf,
    pub utterances: usize,
    pub lexicon_size: usize,
    pub divergent_words: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub backend: String,
    pub target_dialect: String,
    pub sentences: usize,
    pub translated: usize,
    pub skipped_oov: usize,
    pub skipped_failed: usize,
    pub lines_by_dialect: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BertReport {
    pub text: PretrainText,
    pub lines_by_dialect: BTreeMap<String, usize>,
    pub steps: usize,
    pub log: Vec<PretrainLog>,
    pub checkpoint: PathBuf,
    pub checkpoint_hash: String,
}

/// Options of one pre-training run beyond the configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BertOptions {
    /// Overrides the configured seed.
    pub seed: Option<u64>,
    /// Checkpoint path; defaults to the work directory's `bert` checkpoint.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Outcome {
    pub report: Stage1Report,
    pub quantizer_hash: String,
    pub backbone_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Outcome {
    pub report: FinetuneReport,
    pub checkpoint: PathBuf,
    pub checkpoint_hash: String,
}

/// Options of one stage-2 run beyond the configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stage2Options {
    pub from_scratch: bool,
    /// Replaces the configured seed for initialisation and batching.
    pub seed: Option<u64>,
    /// Pre-trained MD-PL-BERT checkpoint; defaults to the run's own.
    pub bert: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SynthMode {
    PredictedAlv,
    /// ALVs extracted from this corpus utterance.
    ReferenceAlv(String),
    NoAlv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRequest {
    /// Words of the text, in the target dialect's surface forms.
    pub words: Vec<String>,
    pub speaker: String,
    pub dialect: String,
    pub mode: SynthMode,
    /// Feature file to write (ALVF); ALVs go to `<out>.json`.
    pub out: PathBuf,
    pub wav: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthOutput {
    pub phonemes: Vec<String>,
    pub alvs: Option<AlvSequence>,
    pub durations: Vec<usize>,
    #[serde(skip)]
    pub frames: Mat,
}

fn missing(what: &str, path: &Path, hint: &str) -> Error {
    Error::Config(format!("missing {what} checkpoint {} (run `{hint}` first)", path.display()))
}

/// The whole pipeline bound to one configuration.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: RunConfig,
    pub layout: Layout,
}

impl Pipeline {
    /// Validates the configuration and checks that the work directory is writable.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let root = config.paths.work_dir.clone();
        fs::create_dir_all(&root)
            .map_err(|e| Error::Config(format!("work directory {} is not writable: {e}", root.display())))?;
        let probe = root.join(".write-probe");
        fs::write(&probe, b"")
            .map_err(|e| Error::Config(format!("work directory {} is not writable: {e}", root.display())))?;
        let _ = fs::remove_file(&probe);
        Ok(Pipeline {
            config,
            layout: Layout::new(root),
        })
    }

    pub fn splits(&self, corpus: &SyntheticCorpus) -> Splits {
        Splits::new(
            corpus.utterances.len(),
            self.config.training.holdout_every,
            self.config.training.calibration_fraction,
        )
    }

    pub fn corpus(&self) -> Result<SyntheticCorpus> {
        let dir = self.layout.corpus_dir();
        if !dir.join(INFO_FILE).exists() {
            return Err(Error::Config(format!(
                "no corpus under {} (run `gen-corpus` first)",
                dir.display()
            )));
        }
        SyntheticCorpus::load(&dir)
    }

    pub fn vocab(corpus: &SyntheticCorpus) -> Result<BertVocab> {
        BertVocab::new(
            corpus.lexicon.phoneme_inventory(),
            corpus.config.dialects.clone(),
            corpus.lexicon.words().cloned().collect(),
        )
    }

    pub fn gen_corpus(&self) -> Result<CorpusSummary> {
        let mut corpus = generate_synthetic_corpus(&self.config.corpus)?;
        let manifest = corpus.write(&self.layout.corpus_dir())?;
        Ok(CorpusSummary {
            manifest,
            utterances: corpus.utterances.len(),
            lexicon_size: corpus.lexicon.len(),
            divergent_words: corpus.divergent_words().len(),
        })
    }

    fn backend(&self, corpus: &SyntheticCorpus) -> Result<Box<dyn TranslatorBackend>> {
        let a = &self.config.augment;
        Ok(match a.backend {
            BackendKind::Rule => {
                let mut tables = BTreeMap::new();
                tables.insert(corpus.other_dialect().to_string(), corpus.variants.clone());
                Box::new(RuleBased::new(tables))
            }
            BackendKind::Remote => {
                let mut llm = RemoteLlm::new(a.remote.clone())?;
                llm.template = PromptTemplate::new(&a.template)?;
                Box::new(llm)
            }
        })
    }

    /// Generates standard-dialect text, translates it and writes both text corpora.
    pub fn augment(&self) -> Result<AugmentSummary> {
        let corpus = self.corpus()?;
        let source = corpus.standard_dialect();
        let target = corpus.other_dialect();
        let sentences: Vec<String> = corpus
            .generate_text_sentences(self.config.augment.text_sentences, self.config.seed.wrapping_add(8))
            .into_iter()
            .map(|w| w.join(" "))
            .collect();
        let backend = self.backend(&corpus)?;
        let records = translate_corpus(&sentences, target.as_str(), backend.as_ref(), self.config.augment.concurrency);
        ensure_parent(&self.layout.audit_log())?;
        write_audit_log(&records, &self.layout.audit_log())?;
        write_json(&self.layout.translations(), &records)?;
        let standard = assemble_multidialect_corpus(&sentences, &source, &[], &corpus.lexicon)?;
        write_text_corpus(&standard.lines, &self.layout.standard_text())?;
        let multi = assemble_multidialect_corpus(&sentences, &source, &records, &corpus.lexicon)?;
        write_text_corpus(&multi.lines, &self.layout.multidialect_text())?;
        Ok(AugmentSummary {
            backend: backend.name().to_string(),
            target_dialect: target.to_string(),
            sentences: sentences.len(),
            translated: records.iter().filter(|r| r.translated.is_some()).count(),
            skipped_oov: multi.skipped_oov,
            skipped_failed: multi.skipped_failed,
            lines_by_dialect: dialect_counts(&multi.lines),
        })
    }

    pub fn translations(&self) -> Result<Option<Vec<TranslationRecord>>> {
        let p = self.layout.translations();
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }

    pub fn pretrain_bert(&self) -> Result<BertReport> {
        self.pretrain_bert_with(&BertOptions::default())
    }

    pub fn pretrain_bert_with(&self, opts: &BertOptions) -> Result<BertReport> {
        let corpus = self.corpus()?;
        let mut config = self.config.clone();
        if let Some(seed) = opts.seed {
            config.seed = seed;
        }
        let path = match self.config.bert.text {
            PretrainText::Multidialect => self.layout.multidialect_text(),
            PretrainText::Standard => self.layout.standard_text(),
        };
        if !path.exists() {
            return Err(Error::Config(format!(
                "missing text corpus {} (run `augment` first)",
                path.display()
            )));
        }
        let lines = read_text_corpus(&path)?;
        let mut bert = MdPlBert::new(config.bert_config(), Self::vocab(&corpus)?)?;
        let pre = config.pretrain_options();
        let log = bert.pretrain(&lines, &pre)?;
        let out = opts.out.clone().unwrap_or_else(|| self.layout.checkpoint("bert"));
        let hash = bert.to_checkpoint(pre.steps).save(&ensure_file(&out)?)?;
        let every = self.config.training.log_every;
        let report = BertReport {
            text: self.config.bert.text,
            lines_by_dialect: dialect_counts(&lines),
            steps: pre.steps,
            log: log.into_iter().filter(|l| l.step % every == 0 || l.step == pre.steps).collect(),
            checkpoint: out,
            checkpoint_hash: hash,
        };
        let name = match opts.seed {
            Some(seed) => format!("bert_seed{seed}"),
            None => "bert".to_string(),
        };
        write_json(&self.layout.report(&name), &report)?;
        Ok(report)
    }

    pub fn train_stage1(&self) -> Result<Stage1Outcome> {
        let corpus = self.corpus()?;
        let provider = make_provider(&self.config)?;
        let splits = self.splits(&corpus);
        let train = Splits::select(&corpus.utterances, &splits.train);
        let items = prepare_items(&train, provider.as_ref())?;
        let speakers = corpus.config.speakers.iter().map(|s| s.speaker_id.clone()).collect();
        let (mut encoder, mut backbone) = init_models(
            &self.config,
            provider.dim(),
            corpus.lexicon.phoneme_inventory(),
            speakers,
            &items,
        )?;
        let report = train_stage1(&self.config, &mut encoder, &mut backbone, &items)?;
        let quantizer_hash = encoder
            .to_checkpoint(provider.name())
            .save(&ensure_file(&self.layout.checkpoint("quantizer"))?)?;
        let backbone_hash = backbone
            .to_checkpoint()
            .with_upstream(quantizer::MODULE_ID, &quantizer_hash)
            .save(&ensure_file(&self.layout.checkpoint("backbone"))?)?;
        let outcome = Stage1Outcome {
            report,
            quantizer_hash,
            backbone_hash,
        };
        write_json(&self.layout.report("stage1"), &outcome)?;
        Ok(outcome)
    }

    pub fn load_quantizer(&self) -> Result<(ReferenceEncoder, String)> {
        let p = self.layout.checkpoint("quantizer");
        if !p.exists() {
            return Err(missing("quantizer", &p, "train-stage1"));
        }
        ReferenceEncoder::load(&p)
    }

    /// The backbone, checked against the quantizer it was trained with.
    pub fn load_backbone(&self, quantizer_hash: &str) -> Result<(Backbone, String)> {
        let p = self.layout.checkpoint("backbone");
        if !p.exists() {
            return Err(missing("backbone", &p, "train-stage1"));
        }
        let (b, ckpt, hash) = Backbone::load(&p)?;
        ckpt.require_upstream(quantizer::MODULE_ID, quantizer_hash)?;
        Ok((b, hash))
    }

    pub fn load_bert(&self, path: Option<&Path>) -> Result<(MdPlBert, String)> {
        let p = path.map(Path::to_path_buf).unwrap_or_else(|| self.layout.checkpoint("bert"));
        if !p.exists() {
            return Err(missing("MD-PL-BERT", &p, "pretrain-bert"));
        }
        MdPlBert::load(&p)
    }

    pub fn predictor_path(&self, from_scratch: bool) -> PathBuf {
        self.layout
            .checkpoint(if from_scratch { "predictor_scratch" } else { "predictor" })
    }

    pub fn load_predictor(&self, path: Option<&Path>, quantizer_hash: &str) -> Result<(AlvPredictor, String)> {
        let p = path.map(Path::to_path_buf).unwrap_or_else(|| self.predictor_path(false));
        if !p.exists() {
            return Err(missing("ALV predictor", &p, "train-stage2"));
        }
        let (pred, _, hash) = AlvPredictor::load(&p, quantizer_hash)?;
        Ok((pred, hash))
    }

    /// ALVs of every corpus utterance under the current quantizer, cached on disk.
    pub fn extracted_alvs(&self, corpus: &SyntheticCorpus) -> Result<AlvCache> {
        let (encoder, hash) = self.load_quantizer()?;
        let path = self.layout.alv_cache();
        if path.exists() {
            let cache: AlvCache = read_json(&path)?;
            if cache.quantizer_hash == hash && corpus.utterances.iter().all(|u| cache.alvs.contains_key(&u.utt_id)) {
                return Ok(cache);
            }
            log::info!("ALV cache is stale; re-extracting");
        }
        let provider = make_provider(&self.config)?;
        let mut alvs = BTreeMap::new();
        for u in &corpus.utterances {
            alvs.insert(u.utt_id.clone(), encoder.extract_alv(u, provider.as_ref())?);
        }
        let cache = AlvCache {
            quantizer_hash: hash,
            alvs,
        };
        write_json(&path, &cache)?;
        Ok(cache)
    }

    pub fn alv_examples(corpus: &SyntheticCorpus, idx: &[usize], cache: &AlvCache) -> Vec<AlvExample> {
        idx.iter()
            .map(|&i| {
                let u = &corpus.utterances[i];
                AlvExample {
                    utt_id: u.utt_id.clone(),
                    phonemes: u.phonemes.clone(),
                    dialect: u.dialect.clone(),
                    alvs: cache.alvs[&u.utt_id].clone(),
                }
            })
            .collect()
    }

    pub fn train_stage2(&self, opts: &Stage2Options) -> Result<Stage2Outcome> {
        let corpus = self.corpus()?;
        let cache = self.extracted_alvs(&corpus)?;
        let splits = self.splits(&corpus);
        let train = Self::alv_examples(&corpus, &splits.train, &cache);
        let val = Self::alv_examples(&corpus, &splits.val, &cache);
        let seed = opts.seed.unwrap_or(self.config.seed);
        let mut ft = self.config.finetune_options();
        ft.seed = seed.wrapping_add(6);
        let codes = self.config.quantizer.codes;
        let (mut predictor, bert_hash) = if opts.from_scratch {
            let cfg = crate::mdplbert::BertConfig {
                seed: seed.wrapping_add(3),
                ..self.config.bert_config()
            };
            (AlvPredictor::new(cfg, Self::vocab(&corpus)?, codes, seed.wrapping_add(9))?, None)
        } else {
            let (bert, h) = self.load_bert(opts.bert.as_deref())?;
            if bert.vocab != Self::vocab(&corpus)? {
                return Err(Error::Config("MD-PL-BERT vocabulary does not match the corpus".into()));
            }
            (AlvPredictor::from_pretrained(&bert, codes, seed.wrapping_add(9))?, Some(h))
        };
        let report = predictor.finetune(&train, &val, &ft, opts.from_scratch)?;
        let out = opts.out.clone().unwrap_or_else(|| self.predictor_path(opts.from_scratch));
        let hash = predictor
            .to_checkpoint(&cache.quantizer_hash, bert_hash.as_deref(), Some(&report))
            .save(&ensure_file(&out)?)?;
        let outcome = Stage2Outcome {
            report,
            checkpoint: out,
            checkpoint_hash: hash,
        };
        let name = if opts.from_scratch { "stage2_scratch" } else { "stage2" };
        write_json(&self.layout.report(name), &outcome)?;
        Ok(outcome)
    }

    pub fn synthesize(&self, req: &SynthRequest) -> Result<SynthOutput> {
        let corpus = self.corpus()?;
        let dialect = DialectId::new(req.dialect.clone())?;
        if !corpus.config.dialects.contains(&req.dialect) {
            return Err(Error::Vocabulary {
                kind: "dialect",
                token: req.dialect.clone(),
            });
        }
        let phonemes = g2p_lookup(&req.words, &corpus.lexicon)?;
        let (encoder, qhash) = self.load_quantizer()?;
        let (backbone, _) = self.load_backbone(&qhash)?;
        backbone.speaker_id(&req.speaker)?;
        let alvs = match &req.mode {
            SynthMode::NoAlv => None,
            SynthMode::PredictedAlv => {
                let (pred, _) = self.load_predictor(None, &qhash)?;
                Some(pred.predict_alv(&phonemes, &dialect)?.0)
            }
            SynthMode::ReferenceAlv(utt_id) => {
                let reference = find_utterance(&corpus, utt_id)?;
                if reference.phonemes.len() != phonemes.len() {
                    return Err(Error::Contract(format!(
                        "reference {utt_id} has {} phonemes but the text has {}",
                        reference.phonemes.len(),
                        phonemes.len()
                    )));
                }
                let provider = make_provider(&self.config)?;
                Some(encoder.extract_alv(reference, provider.as_ref())?)
            }
        };
        let syn = backbone.synthesize(&phonemes, &req.speaker, alvs.as_ref(), Mode::FreeRunning, None)?;
        let out = SynthOutput {
            phonemes,
            alvs,
            durations: syn.durations,
            frames: syn.frames,
        };
        ensure_parent(&req.out)?;
        write_alvf(&req.out, &out.frames)?;
        write_json(&sidecar(&req.out), &out)?;
        if let Some(w) = &req.wav {
            ensure_parent(w)?;
            render_wav(&out.frames, syn.frame_rate, w)?;
        }
        Ok(out)
    }

    /// ALVs for the given utterances (all when empty), in request order.
    pub fn extract_alv(&self, utt_ids: &[String]) -> Result<Vec<(String, AlvSequence)>> {
        let corpus = self.corpus()?;
        let (encoder, _) = self.load_quantizer()?;
        let provider = make_provider(&self.config)?;
        let chosen: Vec<&Utterance> = if utt_ids.is_empty() {
            corpus.utterances.iter().collect()
        } else {
            utt_ids.iter().map(|id| find_utterance(&corpus, id)).collect::<Result<_>>()?
        };
        chosen
            .into_iter()
            .map(|u| Ok((u.utt_id.clone(), encoder.extract_alv(u, provider.as_ref())?)))
            .collect()
    }
}

pub fn find_utterance<'a>(corpus: &'a SyntheticCorpus, utt_id: &str) -> Result<&'a Utterance> {
    corpus
        .utterances
        .iter()
        .find(|u| u.utt_id == utt_id)
        .ok_or_else(|| Error::Vocabulary {
            kind: "utterance",
            token: utt_id.to_string(),
        })
}

/// `<out>.json` next to a synthesised feature file.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn ensure_file(path: &Path) -> Result<PathBuf> {
    ensure_parent(path)?;
    Ok(path.to_path_buf())
}

/// Loads a checkpoint of any module without type checks, for inspection.
pub fn inspect_checkpoint(path: &Path, module: &str) -> Result<(Checkpoint, String)> {
    Checkpoint::load(path, module)
}

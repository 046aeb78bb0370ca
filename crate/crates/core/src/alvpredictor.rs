//! ALV predictor: MD-PL-BERT final-layer vectors → one linear layer over K codes,
//! trained with cross-entropy against reference-encoder ALVs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_hash, Checkpoint};
use crate::corpus::DialectId;
use crate::error::{Error, Result};
use crate::mdplbert::{phoneme_tokens, BertBody, BertConfig, BertVocab, MdPlBert};
use crate::nn::layers::Linear;
use crate::nn::{clip_grad_norm, softmax_rows_in_place, Adam, Graph, Mat, ParamStore, Var, WarmupLinear};
use crate::quantizer::{self, AlvSequence};

pub const MODULE_ID: &str = "alvpredictor";
pub const PROB_FLOOR: f64 = 1e-9;

/// Mean over positions of `-ln max(zhat[p][z[p]], 1e-9)`.
pub fn celoss(z: &AlvSequence, zhat: &Mat) -> Result<f64> {
    if z.len() != zhat.rows {
        return Err(Error::Shape(format!("{} targets but {} distributions", z.len(), zhat.rows)));
    }
    z.check_range(zhat.cols)?;
    if z.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = z.0.iter().enumerate().map(|(p, &k)| -zhat.get(p, k).max(PROB_FLOOR).ln()).sum();
    Ok(s / z.len() as f64)
}

/// Row-wise argmax, ties to the lowest index.
pub fn argmax_rows(m: &Mat) -> Vec<usize> {
    (0..m.rows)
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlvExample {
    pub utt_id: String,
    pub phonemes: Vec<String>,
    pub dialect: DialectId,
    pub alvs: AlvSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup: usize,
    pub clip: f64,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions {
            steps: 1000,
            batch_size: 16,
            lr: 5e-4,
            warmup: 200,
            clip: 1.0,
            eval_every: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub step: usize,
    pub train_ce: f64,
    pub val_ce: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub from_scratch: bool,
    pub initial_val_ce: f64,
    pub initial_val_accuracy: f64,
    pub best_step: usize,
    pub best_val_ce: f64,
    pub best_val_accuracy: f64,
    pub curve: Vec<ValidationPoint>,
}

#[derive(Clone, Debug)]
pub struct AlvPredictor {
    pub config: BertConfig,
    pub vocab: BertVocab,
    pub codes: usize,
    pub store: ParamStore,
    pub body: BertBody,
    pub head: Linear,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: BertConfig,
    vocab: BertVocab,
    codes: usize,
    report: Option<FinetuneReport>,
}

impl AlvPredictor {
    /// Randomly initialised predictor (the from-scratch variant).
    pub fn new(config: BertConfig, vocab: BertVocab, codes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if codes < 2 {
            return Err(Error::Config("predictor needs at least 2 ALV classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let body = BertBody::new(&mut store, &config, &vocab, &mut rng);
        let head = Linear::new(&mut store, "alv_head", config.hidden, codes, &mut rng);
        Ok(AlvPredictor {
            config,
            vocab,
            codes,
            store,
            body,
            head,
        })
    }

    /// Predictor whose body starts from pre-trained MD-PL-BERT weights.
    pub fn from_pretrained(bert: &MdPlBert, codes: usize, seed: u64) -> Result<Self> {
        let mut p = Self::new(bert.config.clone(), bert.vocab.clone(), codes, seed)?;
        let copied = p.store.load_prefix_from(&bert.store, "bert.")?;
        debug_assert_eq!(copied, p.store.names().iter().filter(|n| n.starts_with("bert.")).count());
        Ok(p)
    }

    fn logits(&self, g: &mut Graph, seqs: &[&[usize]]) -> Result<Var> {
        let (h, _) = self.body.forward(g, &self.store, seqs)?;
        Ok(self.head.forward(g, &self.store, h))
    }

    /// Indices and per-phoneme distributions; the dialect position is dropped.
    pub fn predict_alv(&self, phonemes: &[String], dialect: &DialectId) -> Result<(AlvSequence, Mat)> {
        let seq = phoneme_tokens(&self.vocab, phonemes, dialect)?;
        let mut g = Graph::new();
        let l = self.logits(&mut g, &[&seq.tokens])?;
        let all = g.value(l);
        let mut probs = Mat::zeros(phonemes.len(), self.codes);
        for p in 0..phonemes.len() {
            probs.row_mut(p).copy_from_slice(all.row(p + 1));
        }
        softmax_rows_in_place(&mut probs);
        Ok((AlvSequence(argmax_rows(&probs)), probs))
    }

    /// (mean CE, accuracy) over examples.
    pub fn evaluate(&self, examples: &[AlvExample]) -> Result<(f64, f64)> {
        let mut ce = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        for ex in examples {
            let (pred, probs) = self.predict_alv(&ex.phonemes, &ex.dialect)?;
            ce += celoss(&ex.alvs, &probs)? * ex.alvs.len() as f64;
            correct += pred.0.iter().zip(&ex.alvs.0).filter(|(a, b)| a == b).count();
            total += ex.alvs.len();
        }
        let n = total.max(1) as f64;
        Ok((ce / n, correct as f64 / n))
    }

    fn batch_loss(&self, g: &mut Graph, batch: &[&AlvExample]) -> Result<Var> {
        let mut seqs = Vec::with_capacity(batch.len());
        for ex in batch {
            if ex.phonemes.len() != ex.alvs.len() {
                return Err(Error::Shape(format!("{}: phoneme and ALV lengths differ", ex.utt_id)));
            }
            ex.alvs.check_range(self.codes)?;
            seqs.push(phoneme_tokens(&self.vocab, &ex.phonemes, &ex.dialect)?.tokens);
        }
        let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
        let l = self.logits(g, &refs)?;
        let mut targets = Vec::new();
        let mut start = 0;
        for (ex, s) in batch.iter().zip(&seqs) {
            for (p, &k) in ex.alvs.0.iter().enumerate() {
                targets.push((start + 1 + p, k));
            }
            start += s.len();
        }
        Ok(g.cross_entropy(l, &targets))
    }

    /// End-to-end fine-tuning; the parameters with the best validation CE are kept.
    pub fn finetune(
        &mut self,
        train: &[AlvExample],
        val: &[AlvExample],
        opts: &FinetuneOptions,
        from_scratch: bool,
    ) -> Result<FinetuneReport> {
        let (ce0, acc0) = self.evaluate(val)?;
        let mut report = FinetuneReport {
            from_scratch,
            initial_val_ce: ce0,
            initial_val_accuracy: acc0,
            best_step: 0,
            best_val_ce: ce0,
            best_val_accuracy: acc0,
            curve: Vec::new(),
        };
        if opts.steps == 0 {
            return Ok(report);
        }
        if train.is_empty() {
            return Err(Error::Input("no fine-tuning examples".into()));
        }
        let schedule = WarmupLinear {
            peak: opts.lr,
            warmup: opts.warmup,
            total: opts.steps,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut adam = Adam::new(&self.store);
        let mut best = self.store.clone();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut cursor = order.len();
        let mut running = 0.0;
        let mut running_n = 0usize;
        let every = opts.eval_every.max(1);
        for step in 1..=opts.steps {
            let mut batch = Vec::with_capacity(opts.batch_size);
            for _ in 0..opts.batch_size.max(1) {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                batch.push(&train[order[cursor]]);
                cursor += 1;
            }
            let mut g = Graph::new();
            let loss = self.batch_loss(&mut g, &batch)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: "non-finite predictor loss".into(),
                });
            }
            running += value;
            running_n += 1;
            let mut grads = g.backward(loss, &self.store);
            clip_grad_norm(&mut grads, opts.clip);
            adam.step(&mut self.store, &grads, schedule.lr(step));
            if step % every == 0 || step == opts.steps {
                let (ce, acc) = self.evaluate(val)?;
                report.curve.push(ValidationPoint {
                    step,
                    train_ce: running / running_n as f64,
                    val_ce: ce,
                    val_accuracy: acc,
                });
                running = 0.0;
                running_n = 0;
                if ce < report.best_val_ce {
                    report.best_val_ce = ce;
                    report.best_val_accuracy = acc;
                    report.best_step = step;
                    best = self.store.clone();
                }
            }
        }
        self.store.load_from(&best)?;
        Ok(report)
    }

    pub fn to_checkpoint(&self, quantizer_hash: &str, bert_hash: Option<&str>, report: Option<&FinetuneReport>) -> Checkpoint {
        let meta = Meta {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            codes: self.codes,
            report: report.cloned(),
        };
        let mut c = Checkpoint::new(
            MODULE_ID,
            config_hash(&(&self.config, self.codes)),
            serde_json::to_value(meta).expect("meta serialises"),
            self.store.clone(),
        )
        .with_upstream(quantizer::MODULE_ID, quantizer_hash);
        if let Some(h) = bert_hash {
            c = c.with_upstream(crate::mdplbert::MODULE_ID, h);
        }
        c
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, Option<FinetuneReport>)> {
        let meta: Meta = ckpt.meta_as()?;
        let mut p = AlvPredictor::new(meta.config, meta.vocab, meta.codes, 0)?;
        p.store.load_from(&ckpt.params)?;
        Ok((p, meta.report))
    }

    /// Loads a predictor, failing unless it was trained against `quantizer_hash`.
    pub fn load(path: &Path, quantizer_hash: &str) -> Result<(Self, Option<FinetuneReport>, String)> {
        let (ckpt, hash) = Checkpoint::load(path, MODULE_ID)?;
        ckpt.require_upstream(quantizer::MODULE_ID, quantizer_hash)?;
        let (p, r) = Self::from_checkpoint(&ckpt)?;
        Ok((p, r, hash))
    }
}

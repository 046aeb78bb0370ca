//! Stage 1: the reference encoder, codebook and acoustic backbone trained jointly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, Mode, TargetStats, TtsExample};
use crate::config::RunConfig;
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::features::{phoneme_features, ProsodyProvider};
use crate::nn::{segments_from_lengths, Adam, Graph, Mat, WarmupLinear};
use crate::quantizer::{usage_perplexity, ReferenceEncoder};

/// Codes below this share of a logging window's assignments count as dead.
pub const DEAD_CODE_SHARE: f64 = 0.01;

/// Training material for one utterance.
#[derive(Clone, Debug)]
pub struct Stage1Item {
    pub example: TtsExample,
    /// Phoneme-pooled prosody features.
    pub pooled: Mat,
}

pub fn prepare_items(utterances: &[&Utterance], provider: &dyn ProsodyProvider) -> Result<Vec<Stage1Item>> {
    utterances
        .iter()
        .map(|u| {
            Ok(Stage1Item {
                example: TtsExample::from_utterance(u)?,
                pooled: phoneme_features(provider, u)?.vectors,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Log {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub acoustic: f64,
    pub duration: f64,
    pub pitch: f64,
    pub codebook: f64,
    pub commitment: f64,
    /// Code-usage perplexity over the logging window.
    pub perplexity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub steps: usize,
    /// Total loss of the first step (before any update), if any step ran.
    pub first_total: Option<f64>,
    /// Mean total loss over the final logging window.
    pub final_total: Option<f64>,
    pub curve: Vec<Stage1Log>,
    pub usage_counts: Vec<u64>,
    /// (step, code) of every dead-code restart.
    pub restarts: Vec<(usize, usize)>,
}

/// Unscaled loss terms of one batch.
#[derive(Clone, Copy, Debug, Default)]
struct Terms {
    total: f64,
    acoustic: f64,
    duration: f64,
    pitch: f64,
    codebook: f64,
    commitment: f64,
}

impl Terms {
    fn add(&mut self, o: &Terms) {
        self.total += o.total;
        self.acoustic += o.acoustic;
        self.duration += o.duration;
        self.pitch += o.pitch;
        self.codebook += o.codebook;
        self.commitment += o.commitment;
    }

    fn scaled(&self, s: f64) -> Terms {
        Terms {
            total: self.total * s,
            acoustic: self.acoustic * s,
            duration: self.duration * s,
            pitch: self.pitch * s,
            codebook: self.codebook * s,
            commitment: self.commitment * s,
        }
    }
}

/// Fresh models for a corpus. The backbone's ALV table starts as a copy of the codebook.
pub fn init_models(
    config: &RunConfig,
    input_dim: usize,
    phonemes: Vec<String>,
    speakers: Vec<String>,
    items: &[Stage1Item],
) -> Result<(ReferenceEncoder, Backbone)> {
    let examples: Vec<TtsExample> = items.iter().map(|i| i.example.clone()).collect();
    let stats = TargetStats::from_examples(&examples)?;
    let out_dim = stats.frame_mean.len();
    let encoder = ReferenceEncoder::new(config.quantizer_config(input_dim))?;
    let mut backbone = Backbone::new(config.tts_config(out_dim), phonemes, speakers, stats)?;
    backbone.set_alv_table(encoder.store.get(encoder.codebook))?;
    Ok((encoder, backbone))
}

fn batch_terms(
    encoder: &ReferenceEncoder,
    backbone: &Backbone,
    batch: &[&Stage1Item],
) -> Result<(Graph, crate::nn::Var, Terms, Vec<usize>, Mat)> {
    let mut g = Graph::new();
    let lengths: Vec<usize> = batch.iter().map(|b| b.pooled.rows).collect();
    let mut rows = Vec::new();
    for b in batch {
        rows.extend(b.pooled.to_rows());
    }
    let x = g.input(Mat::from_rows(&rows));
    let segs = segments_from_lengths(&lengths);
    let z_e = encoder.encode_graph(&mut g, x, &segs);
    let q = encoder.quantize_graph(&mut g, z_e)?;
    let z_e_value = g.value(z_e).clone();
    let items: Vec<(&[String], &str)> = batch
        .iter()
        .map(|b| (b.example.phonemes.as_slice(), b.example.speaker.as_str()))
        .collect();
    let targets: Vec<&TtsExample> = batch.iter().map(|b| &b.example).collect();
    let tb = backbone.batch(&items, Some(&targets))?;
    let out = backbone.forward_graph(&mut g, &tb, q.z_q, Mode::TeacherForced)?;
    let (ac, du, pi) = backbone.loss_graph(&mut g, &tb, &out)?;
    let beta = encoder.config.beta;
    let total = g.weighted_sum(&[(ac, 1.0), (du, 1.0), (pi, 1.0), (q.codebook_term, 1.0), (q.commitment_term, beta)]);
    let terms = Terms {
        total: g.scalar(total),
        acoustic: g.scalar(ac),
        duration: g.scalar(du),
        pitch: g.scalar(pi),
        codebook: g.scalar(q.codebook_term),
        commitment: g.scalar(q.commitment_term),
    };
    Ok((g, total, terms, q.alvs, z_e_value))
}

/// Joint optimisation of `tts_loss + codebook + beta * commitment`.
pub fn train_stage1(
    config: &RunConfig,
    encoder: &mut ReferenceEncoder,
    backbone: &mut Backbone,
    items: &[Stage1Item],
) -> Result<Stage1Report> {
    let budget = &config.training.stage1;
    let mut report = Stage1Report {
        steps: budget.steps,
        first_total: None,
        final_total: None,
        curve: Vec::new(),
        usage_counts: encoder.usage_counts.clone(),
        restarts: Vec::new(),
    };
    if budget.steps == 0 {
        return Ok(report);
    }
    if items.is_empty() {
        return Err(Error::Input("stage 1 needs training utterances".into()));
    }
    let schedule = WarmupLinear {
        peak: budget.lr,
        warmup: config.training.warmup,
        total: budget.steps,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(7));
    let mut adam_e = Adam::new(&encoder.store);
    let mut adam_b = Adam::new(&backbone.store);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut cursor = order.len();
    let mut window = Terms::default();
    let mut window_n = 0usize;
    let mut window_usage = vec![0u64; encoder.config.codes];
    let log_every = config.training.log_every;
    for step in 1..=budget.steps {
        let mut batch = Vec::with_capacity(budget.batch_size);
        for _ in 0..budget.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&items[order[cursor]]);
            cursor += 1;
        }
        let (g, total, terms, alvs, z_e) = batch_terms(encoder, backbone, &batch)?;
        if !terms.total.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!(
                    "non-finite stage-1 loss (acoustic {}, duration {}, pitch {}, codebook {}, commitment {})",
                    terms.acoustic, terms.duration, terms.pitch, terms.codebook, terms.commitment
                ),
            });
        }
        if step == 1 {
            report.first_total = Some(terms.total);
        }
        let mut grads = g.backward_multi(total, &[&encoder.store, &backbone.store]);
        let norm = grads.iter().map(|gr| gr.global_norm().powi(2)).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: "non-finite gradient norm".into(),
            });
        }
        if norm > config.training.clip {
            let s = config.training.clip / norm;
            grads.iter_mut().for_each(|gr| gr.scale(s));
        }
        let lr = schedule.lr(step);
        adam_e.step(&mut encoder.store, &grads[0], lr);
        adam_b.step(&mut backbone.store, &grads[1], lr);
        for &a in &alvs {
            encoder.usage_counts[a] += 1;
            window_usage[a] += 1;
        }
        window.add(&terms);
        window_n += 1;
        if step % log_every == 0 || step == budget.steps {
            let m = window.scaled(1.0 / window_n as f64);
            let entry = Stage1Log {
                step,
                lr,
                total: m.total,
                acoustic: m.acoustic,
                duration: m.duration,
                pitch: m.pitch,
                codebook: m.codebook,
                commitment: m.commitment,
                perplexity: usage_perplexity(&window_usage),
            };
            log::info!(
                "stage1 step {step}: total {:.4} (ac {:.4} dur {:.4} pitch {:.4} cb {:.4} commit {:.4}) ppl {:.2}",
                entry.total,
                entry.acoustic,
                entry.duration,
                entry.pitch,
                entry.codebook,
                entry.commitment,
                entry.perplexity
            );
            report.final_total = Some(m.total);
            report.curve.push(entry);
            let restart_limit = (config.quantizer.restart_until * budget.steps as f64) as usize;
            if step <= restart_limit {
                let assigned: u64 = window_usage.iter().sum();
                for code in 0..window_usage.len() {
                    if (window_usage[code] as f64) < DEAD_CODE_SHARE * assigned as f64 {
                        let row = z_e.row(rng.gen_range(0..z_e.rows)).to_vec();
                        encoder.store.get_mut(encoder.codebook).row_mut(code).copy_from_slice(&row);
                        report.restarts.push((step, code));
                        log::info!("stage1 step {step}: restarted dead code {code}");
                    }
                }
            }
            window = Terms::default();
            window_n = 0;
            window_usage.iter_mut().for_each(|c| *c = 0);
        }
    }
    backbone.set_alv_table(encoder.store.get(encoder.codebook))?;
    report.usage_counts = encoder.usage_counts.clone();
    Ok(report)
}

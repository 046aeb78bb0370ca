//! Non-autoregressive acoustic model.
//!
//! Phoneme, ALV and speaker embeddings are summed and encoded by a transformer
//! stack. A variance adaptor predicts log-durations and phoneme-level pitch,
//! the length regulator expands phonemes to frames and a second stack decodes
//! frames of `[log-F0, spectral...]`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_hash, Checkpoint};
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::features::{interpolate_unvoiced, pool_phoneme_level, FrameSequence};
use crate::nn::layers::{sinusoidal_positions, Conv1d3, Embedding, LayerNorm, Linear, TransformerStack};
use crate::nn::{segments_from_lengths, Graph, Mat, ParamId, ParamStore, Segments, Var};
use crate::quantizer::AlvSequence;

pub const MODULE_ID: &str = "backbone";
const POSITION_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsConfig {
    pub width: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    /// Output channels: log-F0 followed by the spectral proxy.
    pub out_dim: usize,
    /// Number of ALV codes.
    pub codes: usize,
    pub predictor_width: usize,
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for TtsConfig {
    fn default() -> Self {
        TtsConfig {
            width: 256,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 2,
            ff_width: 512,
            out_dim: 9,
            codes: 4,
            predictor_width: 256,
            frame_rate: 100.0,
            seed: 0,
        }
    }
}

impl TtsConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.width,
            self.encoder_layers,
            self.decoder_layers,
            self.heads,
            self.ff_width,
            self.out_dim,
            self.codes,
            self.predictor_width,
        ];
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("backbone sizes must all be at least 1".into()));
        }
        if self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::Config("frame rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TeacherForced,
    FreeRunning,
}

/// Training-set statistics used to normalise targets and initialise output biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub pitch_mean: f64,
    pub pitch_std: f64,
    pub log_duration_mean: f64,
    pub frame_mean: Vec<f64>,
}

impl TargetStats {
    pub fn neutral(out_dim: usize) -> Self {
        TargetStats {
            pitch_mean: 0.0,
            pitch_std: 1.0,
            log_duration_mean: 0.0,
            frame_mean: vec![0.0; out_dim],
        }
    }

    pub fn from_examples(examples: &[TtsExample]) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::Input("no training examples".into()))?;
        let d = first.frames.cols;
        let mut frame_sum = vec![0.0; d];
        let mut frame_n = 0usize;
        let mut pitch = Vec::new();
        let mut logd = Vec::new();
        for ex in examples {
            for r in 0..ex.frames.rows {
                for (s, v) in frame_sum.iter_mut().zip(ex.frames.row(r)) {
                    *s += v;
                }
            }
            frame_n += ex.frames.rows;
            pitch.extend_from_slice(&ex.pitch);
            logd.extend(ex.durations.iter().map(|&d| (d as f64).ln()));
        }
        let n = pitch.len() as f64;
        let pm = pitch.iter().sum::<f64>() / n;
        let var = pitch.iter().map(|p| (p - pm) * (p - pm)).sum::<f64>() / n;
        Ok(TargetStats {
            pitch_mean: pm,
            pitch_std: var.sqrt().max(1e-3),
            log_duration_mean: logd.iter().sum::<f64>() / logd.len() as f64,
            frame_mean: frame_sum.into_iter().map(|s| s / frame_n.max(1) as f64).collect(),
        })
    }
}

/// One utterance prepared for the acoustic model.
#[derive(Clone, Debug, PartialEq)]
pub struct TtsExample {
    pub utt_id: String,
    pub phonemes: Vec<String>,
    pub speaker: String,
    pub durations: Vec<usize>,
    /// Phoneme-mean log-F0 (unnormalised).
    pub pitch: Vec<f64>,
    pub frames: Mat,
}

impl TtsExample {
    pub fn from_utterance(utt: &Utterance) -> Result<Self> {
        utt.validate()?;
        let frames = utt.frames()?;
        if frames.rows != utt.alignment.total_frames() {
            return Err(Error::Alignment(format!(
                "{}: alignment covers {} frames, features have {}",
                utt.utt_id,
                utt.alignment.total_frames(),
                frames.rows
            )));
        }
        let f0: Vec<f64> = (0..frames.rows).map(|t| frames.get(t, 0)).collect();
        let contour = interpolate_unvoiced(&FrameSequence::f0_contour(f0, 100.0)?)?;
        let pitch = pool_phoneme_level(&contour, &utt.alignment)?.vectors.data;
        Ok(TtsExample {
            utt_id: utt.utt_id.clone(),
            phonemes: utt.phonemes.clone(),
            speaker: utt.speaker_id.clone(),
            durations: utt.alignment.durations(),
            pitch,
            frames: (*frames).clone(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct VariancePredictor {
    pub conv: Conv1d3,
    pub norm: LayerNorm,
    pub out: Linear,
}

impl VariancePredictor {
    fn new(store: &mut ParamStore, name: &str, width: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        VariancePredictor {
            conv: Conv1d3::new(store, &format!("{name}.conv"), width, hidden, rng),
            norm: LayerNorm::new(store, &format!("{name}.norm"), hidden),
            out: Linear::new(store, &format!("{name}.out"), hidden, 1, rng),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, segments: &Segments) -> Var {
        let h = self.conv.forward(g, store, x, segments);
        let h = g.relu(h);
        let h = self.norm.forward(g, store, h);
        self.out.forward(g, store, h)
    }
}

/// Stacked inputs for a batch of utterances.
#[derive(Clone, Debug)]
pub struct TtsBatch {
    pub phoneme_ids: Vec<usize>,
    /// Speaker index for every phoneme row.
    pub speaker_rows: Vec<usize>,
    pub lengths: Vec<usize>,
    pub segments: Segments,
    /// Ground-truth durations (teacher forcing only).
    pub durations: Option<Vec<usize>>,
    /// Normalised phoneme pitch targets (teacher forcing only).
    pub pitch: Option<Vec<f64>>,
    /// Stacked target frames (teacher forcing only).
    pub frames: Option<Mat>,
}

/// Graph handles of a forward pass.
pub struct ForwardVars {
    pub frames: Var,
    pub log_durations: Var,
    pub pitch: Var,
    pub durations_used: Vec<usize>,
    pub frame_lengths: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsLossParts {
    pub acoustic: f64,
    pub duration: f64,
    pub pitch: f64,
    pub total: f64,
}

/// Output of a single-utterance forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub frames: Mat,
    pub frame_rate: f64,
    pub durations: Vec<usize>,
    /// Predicted phoneme-level log-F0 (denormalised).
    pub pitch: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: TtsConfig,
    pub phonemes: Vec<String>,
    pub speakers: Vec<String>,
    pub stats: TargetStats,
    pub store: ParamStore,
    pub phoneme_emb: Embedding,
    pub alv_table: ParamId,
    pub speaker_emb: Embedding,
    pub encoder: TransformerStack,
    pub duration: VariancePredictor,
    pub pitch: VariancePredictor,
    pub pitch_emb: Linear,
    pub decoder: TransformerStack,
    pub output: Linear,
    phoneme_index: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TtsConfig,
    phonemes: Vec<String>,
    speakers: Vec<String>,
    stats: TargetStats,
}

impl Backbone {
    pub fn new(config: TtsConfig, phonemes: Vec<String>, speakers: Vec<String>, stats: TargetStats) -> Result<Self> {
        config.validate()?;
        if phonemes.is_empty() || speakers.is_empty() {
            return Err(Error::Config("backbone needs a phoneme inventory and at least one speaker".into()));
        }
        if stats.frame_mean.len() != config.out_dim {
            return Err(Error::Config(format!(
                "frame statistics have {} channels, config says {}",
                stats.frame_mean.len(),
                config.out_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let w = config.width;
        let phoneme_emb = Embedding::new(&mut store, "phoneme_embedding", phonemes.len(), w, &mut rng);
        let alv_table = store.uniform("alv_embedding", config.codes, w, 0.05, &mut rng);
        let speaker_emb = Embedding::new(&mut store, "speaker_embedding", speakers.len(), w, &mut rng);
        let encoder = TransformerStack::new(
            &mut store,
            "encoder",
            config.encoder_layers,
            w,
            config.heads,
            config.ff_width,
            &mut rng,
        );
        let duration = VariancePredictor::new(&mut store, "duration_predictor", w, config.predictor_width, &mut rng);
        let pitch = VariancePredictor::new(&mut store, "pitch_predictor", w, config.predictor_width, &mut rng);
        let pitch_emb = Linear::new(&mut store, "pitch_embedding", 1, w, &mut rng);
        let decoder = TransformerStack::new(
            &mut store,
            "decoder",
            config.decoder_layers,
            w,
            config.heads,
            config.ff_width,
            &mut rng,
        );
        let output = Linear::new(&mut store, "output", w, config.out_dim, &mut rng);
        store.get_mut(output.bias).data.copy_from_slice(&stats.frame_mean);
        store.get_mut(duration.out.bias).data[0] = stats.log_duration_mean;
        let phoneme_index = phonemes.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        Ok(Backbone {
            config,
            phonemes,
            speakers,
            stats,
            store,
            phoneme_emb,
            alv_table,
            speaker_emb,
            encoder,
            duration,
            pitch,
            pitch_emb,
            decoder,
            output,
            phoneme_index,
        })
    }

    pub fn phoneme_ids(&self, phonemes: &[String]) -> Result<Vec<usize>> {
        phonemes
            .iter()
            .map(|p| {
                self.phoneme_index.get(p).copied().ok_or_else(|| Error::Vocabulary {
                    kind: "phoneme".into(),
                    token: p.clone(),
                })
            })
            .collect()
    }

    pub fn speaker_id(&self, speaker: &str) -> Result<usize> {
        self.speakers.iter().position(|s| s == speaker).ok_or_else(|| Error::Vocabulary {
            kind: "speaker".into(),
            token: speaker.to_string(),
        })
    }

    /// Replace the ALV embedding table, e.g. with a trained codebook.
    pub fn set_alv_table(&mut self, table: &Mat) -> Result<()> {
        let cur = self.store.get(self.alv_table);
        if cur.shape() != table.shape() {
            return Err(Error::Shape(format!(
                "ALV table {:?} does not match {:?}",
                table.shape(),
                cur.shape()
            )));
        }
        *self.store.get_mut(self.alv_table) = table.clone();
        Ok(())
    }

    /// Row `p` = phoneme embedding + ALV embedding.
    pub fn embed_inputs(&self, phonemes: &[String], alvs: &AlvSequence) -> Result<Mat> {
        if phonemes.len() != alvs.len() {
            return Err(Error::Shape(format!(
                "{} phonemes but {} ALVs",
                phonemes.len(),
                alvs.len()
            )));
        }
        alvs.check_range(self.config.codes)?;
        let ids = self.phoneme_ids(phonemes)?;
        let pt = self.store.get(self.phoneme_emb.table);
        let at = self.store.get(self.alv_table);
        let mut out = Mat::zeros(ids.len(), self.config.width);
        for (p, (&i, &a)) in ids.iter().zip(&alvs.0).enumerate() {
            for ((o, x), y) in out.row_mut(p).iter_mut().zip(pt.row(i)).zip(at.row(a)) {
                *o = x + y;
            }
        }
        Ok(out)
    }

    pub fn normalize_pitch(&self, p: f64) -> f64 {
        (p - self.stats.pitch_mean) / self.stats.pitch_std
    }

    pub fn denormalize_pitch(&self, z: f64) -> f64 {
        z * self.stats.pitch_std + self.stats.pitch_mean
    }

    /// Stack examples into a batch. Targets are included when `with_targets`.
    pub fn batch(&self, items: &[(&[String], &str)], targets: Option<&[&TtsExample]>) -> Result<TtsBatch> {
        let mut phoneme_ids = Vec::new();
        let mut speaker_rows = Vec::new();
        let mut lengths = Vec::new();
        for (phonemes, speaker) in items {
            if phonemes.is_empty() {
                return Err(Error::Input("cannot synthesise an empty phoneme sequence".into()));
            }
            let s = self.speaker_id(speaker)?;
            phoneme_ids.extend(self.phoneme_ids(phonemes)?);
            speaker_rows.extend(std::iter::repeat(s).take(phonemes.len()));
            lengths.push(phonemes.len());
        }
        let (durations, pitch, frames) = match targets {
            None => (None, None, None),
            Some(exs) => {
                if exs.len() != items.len() {
                    return Err(Error::Shape("targets do not match batch items".into()));
                }
                let mut d = Vec::new();
                let mut p = Vec::new();
                let mut rows = Vec::new();
                for (ex, len) in exs.iter().zip(&lengths) {
                    if ex.durations.len() != *len || ex.pitch.len() != *len {
                        return Err(Error::Shape(format!("{}: target lengths differ from phonemes", ex.utt_id)));
                    }
                    if ex.frames.cols != self.config.out_dim {
                        return Err(Error::Shape(format!(
                            "{}: frames have {} channels, model emits {}",
                            ex.utt_id, ex.frames.cols, self.config.out_dim
                        )));
                    }
                    d.extend_from_slice(&ex.durations);
                    p.extend(ex.pitch.iter().map(|&v| self.normalize_pitch(v)));
                    rows.extend(ex.frames.to_rows());
                }
                (Some(d), Some(p), Some(Mat::from_rows(&rows)))
            }
        };
        Ok(TtsBatch {
            segments: segments_from_lengths(&lengths),
            phoneme_ids,
            speaker_rows,
            lengths,
            durations,
            pitch,
            frames,
        })
    }

    /// ALV rows gathered from the embedding table.
    pub fn alv_rows(&self, g: &mut Graph, alvs: &[usize]) -> Var {
        let t = g.param(&self.store, self.alv_table);
        g.gather(t, alvs)
    }

    /// Full forward pass; `alv_rows` is a P×W matrix (e.g. straight-through
    /// quantised vectors, gathered table rows or zeros).
    pub fn forward_graph(&self, g: &mut Graph, batch: &TtsBatch, alv_rows: Var, mode: Mode) -> Result<ForwardVars> {
        let s = &self.store;
        let p_total = batch.phoneme_ids.len();
        if g.value(alv_rows).shape() != (p_total, self.config.width) {
            return Err(Error::Shape(format!(
                "ALV rows {:?} do not match {} phonemes of width {}",
                g.value(alv_rows).shape(),
                p_total,
                self.config.width
            )));
        }
        let ph = self.phoneme_emb.forward(g, s, &batch.phoneme_ids);
        let x = g.add(ph, alv_rows);
        let sp = self.speaker_emb.forward(g, s, &batch.speaker_rows);
        let x = g.add(x, sp);
        let mut pos = sinusoidal_positions(&batch.segments, self.config.width);
        pos.scale_in_place(POSITION_SCALE);
        let pos = g.input(pos);
        let x = g.add(x, pos);
        let h = self.encoder.forward(g, s, x, &batch.segments);

        let log_durations = self.duration.forward(g, s, h, &batch.segments);
        let pitch = self.pitch.forward(g, s, h, &batch.segments);

        let (durations_used, pitch_in) = match mode {
            Mode::TeacherForced => {
                let d = batch
                    .durations
                    .clone()
                    .ok_or_else(|| Error::Contract("teacher forcing needs ground-truth durations".into()))?;
                let p = batch
                    .pitch
                    .clone()
                    .ok_or_else(|| Error::Contract("teacher forcing needs pitch targets".into()))?;
                (d, Mat::from_vec(p_total, 1, p))
            }
            Mode::FreeRunning => {
                let ld = g.value(log_durations);
                let d = ld.data.iter().map(|v| rounded_duration(*v)).collect();
                (d, g.value(pitch).clone())
            }
        };
        let pitch_in = g.input(pitch_in);
        let pe = self.pitch_emb.forward(g, s, pitch_in);
        let adapted = g.add(h, pe);

        let frames_h = length_regulate_graph(g, adapted, &durations_used)?;
        let mut frame_lengths = Vec::with_capacity(batch.lengths.len());
        let mut o = 0;
        for &len in &batch.lengths {
            frame_lengths.push(durations_used[o..o + len].iter().sum());
            o += len;
        }
        let frame_segs = segments_from_lengths(&frame_lengths);
        let mut fpos = sinusoidal_positions(&frame_segs, self.config.width);
        fpos.scale_in_place(POSITION_SCALE);
        let fpos = g.input(fpos);
        let y = g.add(frames_h, fpos);
        let y = self.decoder.forward(g, s, y, &frame_segs);
        let frames = self.output.forward(g, s, y);
        Ok(ForwardVars {
            frames,
            log_durations,
            pitch,
            durations_used,
            frame_lengths,
        })
    }

    /// Teacher-forced loss terms inside a graph: (acoustic, duration, pitch).
    pub fn loss_graph(&self, g: &mut Graph, batch: &TtsBatch, out: &ForwardVars) -> Result<(Var, Var, Var)> {
        let frames = batch
            .frames
            .as_ref()
            .ok_or_else(|| Error::Contract("loss needs target frames".into()))?;
        let durations = batch.durations.as_ref().expect("teacher forcing checked");
        let pitch = batch.pitch.as_ref().expect("teacher forcing checked");
        if g.value(out.frames).shape() != frames.shape() {
            return Err(Error::Shape(format!(
                "predicted frames {:?} vs target {:?}",
                g.value(out.frames).shape(),
                frames.shape()
            )));
        }
        let n = durations.len();
        let log_d = Mat::from_vec(n, 1, durations.iter().map(|&d| (d as f64).ln()).collect());
        let acoustic = g.mean_abs_err(out.frames, frames);
        let dur = g.mean_sq_err(out.log_durations, &log_d);
        let pt = Mat::from_vec(n, 1, pitch.clone());
        let pitch_loss = g.mean_sq_err(out.pitch, &pt);
        Ok((acoustic, dur, pitch_loss))
    }

    /// Single-utterance synthesis. `alvs = None` feeds zero ALV embeddings.
    pub fn synthesize(
        &self,
        phonemes: &[String],
        speaker: &str,
        alvs: Option<&AlvSequence>,
        mode: Mode,
        target: Option<&TtsExample>,
    ) -> Result<Synthesis> {
        if let Some(a) = alvs {
            if a.len() != phonemes.len() {
                return Err(Error::Shape(format!("{} phonemes but {} ALVs", phonemes.len(), a.len())));
            }
            a.check_range(self.config.codes)?;
        }
        let targets = target.map(|t| vec![t]);
        let batch = self.batch(&[(phonemes, speaker)], targets.as_deref())?;
        let mut g = Graph::new();
        let rows = match alvs {
            Some(a) => self.alv_rows(&mut g, &a.0),
            None => g.input(Mat::zeros(phonemes.len(), self.config.width)),
        };
        let out = self.forward_graph(&mut g, &batch, rows, mode)?;
        let frames = g.value(out.frames).clone();
        if !frames.is_finite() {
            return Err(Error::Numeric("non-finite synthesised frames".into()));
        }
        Ok(Synthesis {
            frames,
            frame_rate: self.config.frame_rate,
            durations: out.durations_used,
            pitch: g.value(out.pitch).data.iter().map(|&z| self.denormalize_pitch(z)).collect(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Meta {
            config: self.config.clone(),
            phonemes: self.phonemes.clone(),
            speakers: self.speakers.clone(),
            stats: self.stats.clone(),
        };
        Checkpoint::new(
            MODULE_ID,
            config_hash(&self.config),
            serde_json::to_value(meta).expect("meta serialises"),
            self.store.clone(),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: Meta = ckpt.meta_as()?;
        let mut b = Backbone::new(meta.config, meta.phonemes, meta.speakers, meta.stats)?;
        b.store.load_from(&ckpt.params)?;
        Ok(b)
    }

    pub fn load(path: &Path) -> Result<(Self, Checkpoint, String)> {
        let (ckpt, hash) = Checkpoint::load(path, MODULE_ID)?;
        Ok((Self::from_checkpoint(&ckpt)?, ckpt, hash))
    }
}

pub fn rounded_duration(log_duration: f64) -> usize {
    let d = log_duration.exp().round();
    if d.is_finite() && d >= 1.0 {
        (d as usize).min(1000)
    } else {
        1
    }
}

fn check_durations(durations: &[usize]) -> Result<()> {
    if let Some(p) = durations.iter().position(|&d| d == 0) {
        return Err(Error::Duration(format!("phoneme {p} has zero duration")));
    }
    Ok(())
}

fn length_regulate_graph(g: &mut Graph, x: Var, durations: &[usize]) -> Result<Var> {
    check_durations(durations)?;
    if g.value(x).rows != durations.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} durations",
            g.value(x).rows,
            durations.len()
        )));
    }
    Ok(g.repeat_rows(x, durations))
}

/// Repeat row `p` `durations[p]` times.
pub fn length_regulate(encoded: &Mat, durations: &[usize]) -> Result<Mat> {
    let mut g = Graph::new();
    let x = g.input(encoded.clone());
    let y = length_regulate_graph(&mut g, x, durations)?;
    Ok(g.value(y).clone())
}

/// MAE(frames) + MSE(log-durations) + MSE(pitch), unweighted.
pub fn tts_loss(
    pred: &Mat,
    target: &Mat,
    pred_log_dur: &[f64],
    true_dur: &[usize],
    pred_pitch: &[f64],
    true_pitch: &[f64],
) -> Result<TtsLossParts> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("frames {:?} vs {:?}", pred.shape(), target.shape())));
    }
    if pred_log_dur.len() != true_dur.len() || pred_pitch.len() != true_pitch.len() {
        return Err(Error::Shape("duration or pitch lengths differ".into()));
    }
    let mean = |it: &mut dyn Iterator<Item = f64>, n: usize| it.sum::<f64>() / n.max(1) as f64;
    let acoustic = mean(
        &mut pred.data.iter().zip(&target.data).map(|(a, b)| (a - b).abs()),
        pred.data.len(),
    );
    let duration = mean(
        &mut pred_log_dur
            .iter()
            .zip(true_dur)
            .map(|(p, &d)| (p - (d as f64).ln()).powi(2)),
        true_dur.len(),
    );
    let pitch = mean(
        &mut pred_pitch.iter().zip(true_pitch).map(|(a, b)| (a - b).powi(2)),
        true_pitch.len(),
    );
    Ok(TtsLossParts {
        acoustic,
        duration,
        pitch,
        total: acoustic + duration + pitch,
    })
}

/// Writes a 16 kHz mono 16-bit WAV from log-F0 frames with a harmonic
/// sinusoidal voice. For listening only.
pub fn render_wav(frames: &Mat, frame_rate: f64, path: &Path) -> Result<usize> {
    const SAMPLE_RATE: u32 = 16_000;
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let per_frame = (SAMPLE_RATE as f64 / frame_rate).round() as usize;
    let harmonics = frames.cols.saturating_sub(1).max(1);
    let mut phase = 0.0f64;
    let mut count = 0;
    for t in 0..frames.rows {
        let row = frames.row(t);
        let voiced = row[0] > 0.0;
        let f0 = if voiced { row[0].exp().clamp(40.0, 1000.0) } else { 0.0 };
        for _ in 0..per_frame {
            let mut s = 0.0;
            if voiced {
                phase += 2.0 * std::f64::consts::PI * f0 / SAMPLE_RATE as f64;
                for h in 0..harmonics {
                    let amp = row.get(h + 1).map(|v| 0.5 * (1.0 + v.tanh())).unwrap_or(1.0);
                    s += amp * ((h + 1) as f64 * phase).sin() / (h + 1) as f64;
                }
            }
            let v = (0.25 * s).clamp(-1.0, 1.0);
            w.write_sample((v * i16::MAX as f64) as i16)
                .map_err(|e| Error::Format(e.to_string()))?;
            count += 1;
        }
    }
    w.finalize().map_err(|e| Error::Format(e.to_string()))?;
    Ok(count)
}

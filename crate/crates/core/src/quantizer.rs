//! Reference encoder: phoneme-level prosody features are projected, passed
//! through two kernel-3 convolutions and vector-quantised into K accent latent
//! variable (ALV) codes.
//!
//! Training uses the VQ objective
//! `|sg(z_e) - e|^2 + beta * |z_e - sg(e)|^2` (mean over phonemes) and the
//! straight-through estimator across the quantisation step.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_hash, Checkpoint};
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::features::{phoneme_features, PhonemeFeatureSequence, ProsodyProvider};
use crate::nn::layers::{Conv1d3, Linear};
use crate::nn::{single_segment, Graph, Mat, ParamId, ParamStore, Segments, Var};

pub const MODULE_ID: &str = "quantizer";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    /// Provider dimensionality (D_in).
    pub input_dim: usize,
    /// Encoder channel width W; equals the acoustic model's embedding width.
    pub width: usize,
    /// Number of codes K.
    pub codes: usize,
    /// Commitment weight.
    pub beta: f64,
    /// Codebook rows are drawn uniformly from `[-init_limit, init_limit]`.
    pub init_limit: f64,
    pub seed: u64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig {
            input_dim: 1,
            width: 256,
            codes: 4,
            beta: 4.0,
            init_limit: 0.05,
            seed: 0,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.codes < 2 {
            return Err(Error::Config("the codebook needs at least 2 codes".into()));
        }
        if self.width == 0 || self.input_dim == 0 {
            return Err(Error::Config("quantizer widths must be positive".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("commitment weight must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-phoneme ALV indices in `0..K`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlvSequence(pub Vec<usize>);

impl AlvSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn constant(value: usize, len: usize) -> Self {
        AlvSequence(vec![value; len])
    }

    pub fn check_range(&self, k: usize) -> Result<()> {
        match self.0.iter().find(|&&a| a >= k) {
            Some(a) => Err(Error::Shape(format!("ALV index {a} outside 0..{k}"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub codes: Mat,
    pub usage_counts: Vec<u64>,
}

impl Codebook {
    pub fn new(codes: Mat) -> Self {
        let k = codes.rows;
        Codebook {
            codes,
            usage_counts: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.codes.rows
    }

    /// `exp(entropy)` of the usage distribution; 0 when nothing has been counted.
    pub fn perplexity(&self) -> f64 {
        usage_perplexity(&self.usage_counts)
    }
}

pub fn usage_perplexity(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h.exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqLossParts {
    pub codebook_term: f64,
    pub commitment_term: f64,
    pub total: f64,
    pub beta: f64,
}

/// Index of the nearest code to `v`; ties go to the lowest index.
pub fn nearest_code(v: &[f64], codes: &Mat) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for k in 0..codes.rows {
        let d: f64 = v.iter().zip(codes.row(k)).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Nearest-code quantisation of every row; updates the usage counts.
pub fn quantize(z_e: &Mat, codebook: &mut Codebook) -> Result<(AlvSequence, Mat)> {
    if z_e.cols != codebook.codes.cols {
        return Err(Error::Shape(format!(
            "encoder width {} does not match codebook width {}",
            z_e.cols, codebook.codes.cols
        )));
    }
    if !z_e.is_finite() || !codebook.codes.is_finite() {
        return Err(Error::Numeric("non-finite value entering the quantizer".into()));
    }
    let mut idx = Vec::with_capacity(z_e.rows);
    let mut z_q = Mat::zeros(z_e.rows, z_e.cols);
    for p in 0..z_e.rows {
        let k = nearest_code(z_e.row(p), &codebook.codes);
        codebook.usage_counts[k] += 1;
        z_q.row_mut(p).copy_from_slice(codebook.codes.row(k));
        idx.push(k);
    }
    Ok((AlvSequence(idx), z_q))
}

pub fn vq_loss(z_e: &Mat, z_q: &Mat, beta: f64) -> Result<VqLossParts> {
    if z_e.shape() != z_q.shape() {
        return Err(Error::Shape(format!("z_e {:?} vs z_q {:?}", z_e.shape(), z_q.shape())));
    }
    let p = z_e.rows.max(1) as f64;
    let sq: f64 = z_e.data.iter().zip(&z_q.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p;
    // The two terms share a value; they differ only in which side receives gradient.
    Ok(VqLossParts {
        codebook_term: sq,
        commitment_term: sq,
        total: sq + beta * sq,
        beta,
    })
}

/// Gradient arriving at the quantised vectors passes to the encoder unchanged.
pub fn straight_through_backward(z_e_grad_out: &Mat) -> Mat {
    z_e_grad_out.clone()
}

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub input: Linear,
    pub conv1: Conv1d3,
    pub conv2: Conv1d3,
}

/// Graph handles produced by quantising inside a training graph.
pub struct QuantizedVars {
    pub alvs: Vec<usize>,
    /// Quantised vectors with straight-through gradient to `z_e`.
    pub z_q: Var,
    pub codebook_term: Var,
    pub commitment_term: Var,
}

#[derive(Clone, Debug)]
pub struct ReferenceEncoder {
    pub config: QuantizerConfig,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub codebook: ParamId,
    pub usage_counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: QuantizerConfig,
    usage_counts: Vec<u64>,
    provider: String,
}

impl ReferenceEncoder {
    pub fn new(config: QuantizerConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let w = config.width;
        let encoder = EncoderParams {
            input: Linear::new(&mut store, "encoder.input", config.input_dim, w, &mut rng),
            conv1: Conv1d3::new(&mut store, "encoder.conv1", w, w, &mut rng),
            conv2: Conv1d3::new(&mut store, "encoder.conv2", w, w, &mut rng),
        };
        let codebook = store.uniform("codebook", config.codes, w, config.init_limit, &mut rng);
        Ok(ReferenceEncoder {
            usage_counts: vec![0; config.codes],
            config,
            store,
            encoder,
            codebook,
        })
    }

    pub fn codebook(&self) -> Codebook {
        Codebook {
            codes: self.store.get(self.codebook).clone(),
            usage_counts: self.usage_counts.clone(),
        }
    }

    pub fn perplexity(&self) -> f64 {
        usage_perplexity(&self.usage_counts)
    }

    /// Continuous encoder output for a stacked batch of pooled features.
    pub fn encode_graph(&self, g: &mut Graph, pooled: Var, segments: &Segments) -> Var {
        let s = &self.store;
        let h = self.encoder.input.forward(g, s, pooled);
        let h = self.encoder.conv1.forward(g, s, h, segments);
        let h = g.relu(h);
        self.encoder.conv2.forward(g, s, h, segments)
    }

    pub fn encode(&self, pooled: &PhonemeFeatureSequence) -> Result<Mat> {
        let m = &pooled.vectors;
        if m.cols != self.config.input_dim {
            return Err(Error::Shape(format!(
                "pooled features have {} columns, encoder expects {}",
                m.cols, self.config.input_dim
            )));
        }
        if m.rows == 0 {
            return Err(Error::Shape("cannot encode an empty phoneme sequence".into()));
        }
        let mut g = Graph::new();
        let x = g.input(m.clone());
        let out = self.encode_graph(&mut g, x, &single_segment(m.rows));
        Ok(g.value(out).clone())
    }

    /// Quantise `z_e` inside a graph, returning indices, the straight-through
    /// quantised vectors and the two VQ terms.
    pub fn quantize_graph(&self, g: &mut Graph, z_e: Var) -> Result<QuantizedVars> {
        let codes = self.store.get(self.codebook);
        let ze = g.value(z_e);
        if !ze.is_finite() {
            return Err(Error::Numeric("non-finite encoder output".into()));
        }
        let alvs: Vec<usize> = (0..ze.rows).map(|p| nearest_code(ze.row(p), codes)).collect();
        let table = g.param(&self.store, self.codebook);
        let gathered = g.gather(table, &alvs);
        let sg_ze = g.detach(z_e);
        let codebook_term = g.row_sq_dist_mean(sg_ze, gathered);
        let sg_zq = g.detach(gathered);
        let commitment_term = g.row_sq_dist_mean(z_e, sg_zq);
        let zq_value = g.value(gathered).clone();
        let z_q = g.straight_through(z_e, zq_value);
        Ok(QuantizedVars {
            alvs,
            z_q,
            codebook_term,
            commitment_term,
        })
    }

    pub fn quantize_features(&self, pooled: &PhonemeFeatureSequence) -> Result<AlvSequence> {
        let z_e = self.encode(pooled)?;
        let mut cb = self.codebook();
        Ok(quantize(&z_e, &mut cb)?.0)
    }

    /// provider → phoneme pooling → encoder → nearest code.
    pub fn extract_alv(&self, utterance: &Utterance, provider: &dyn ProsodyProvider) -> Result<AlvSequence> {
        if provider.dim() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "provider dimensionality {} does not match encoder input {}",
                provider.dim(),
                self.config.input_dim
            )));
        }
        let pooled = phoneme_features(provider, utterance)?;
        self.quantize_features(&pooled)
    }

    pub fn to_checkpoint(&self, provider: &str) -> Checkpoint {
        let meta = Meta {
            config: self.config.clone(),
            usage_counts: self.usage_counts.clone(),
            provider: provider.to_string(),
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
        let mut enc = ReferenceEncoder::new(meta.config)?;
        enc.store.load_from(&ckpt.params)?;
        enc.usage_counts = meta.usage_counts;
        Ok(enc)
    }

    /// Loads a quantizer checkpoint; returns the encoder and the file's content hash.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let (ckpt, hash) = Checkpoint::load(path, MODULE_ID)?;
        Ok((Self::from_checkpoint(&ckpt)?, hash))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-s..s)).collect())
    }

    fn small(width: usize) -> ReferenceEncoder {
        ReferenceEncoder::new(QuantizerConfig {
            width,
            input_dim: 2,
            ..Default::default()
        })
        .unwrap()
    }

    /// Independent sliding-window oracle for the encoder stack.
    fn encoder_oracle(enc: &ReferenceEncoder, x: &Mat) -> Mat {
        let s = &enc.store;
        let lin = |m: &Mat, l: &Linear| -> Mat {
            let w = s.get(l.weight);
            let b = s.get(l.bias);
            let mut out = Mat::zeros(m.rows, w.cols);
            for r in 0..m.rows {
                for c in 0..w.cols {
                    let mut acc = b.data[c];
                    for k in 0..m.cols {
                        acc += m.get(r, k) * w.get(k, c);
                    }
                    out.set(r, c, acc);
                }
            }
            out
        };
        let conv = |m: &Mat, conv: &Conv1d3| -> Mat {
            let w = s.get(conv.proj.weight);
            let b = s.get(conv.proj.bias);
            let cin = m.cols;
            let mut out = Mat::zeros(m.rows, w.cols);
            for t in 0..m.rows {
                for c in 0..w.cols {
                    let mut acc = b.data[c];
                    for (tap, dt) in [-1isize, 0, 1].iter().enumerate() {
                        let src = t as isize + dt;
                        if src < 0 || src >= m.rows as isize {
                            continue;
                        }
                        for k in 0..cin {
                            acc += m.get(src as usize, k) * w.get(tap * cin + k, c);
                        }
                    }
                    out.set(t, c, acc);
                }
            }
            out
        };
        let h = lin(x, &enc.encoder.input);
        let mut h = conv(&h, &enc.encoder.conv1);
        h.data.iter_mut().for_each(|v| *v = v.max(0.0));
        conv(&h, &enc.encoder.conv2)
    }

    #[test]
    fn encoder_matches_sliding_window_oracle() {
        let enc = small(6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in [1usize, 2, 5, 9] {
            let x = rand_mat(&mut rng, p, 2, 2.0);
            let got = enc.encode(&PhonemeFeatureSequence { vectors: x.clone() }).unwrap();
            let want = encoder_oracle(&enc, &x);
            assert_eq!(got.shape(), (p, 6));
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let enc = small(4);
        let out = enc.encode(&PhonemeFeatureSequence { vectors: Mat::zeros(3, 2) }).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let enc = small(4);
        assert!(matches!(
            enc.encode(&PhonemeFeatureSequence { vectors: Mat::zeros(3, 5) }),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn exact_match_and_tie_break() {
        let codes = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], vec![-1.0, 0.0]]);
        let mut cb = Codebook::new(codes.clone());
        let z = Mat::from_rows(&[vec![2.0, 2.0], vec![0.0, 0.0]]);
        let (idx, zq) = quantize(&z, &mut cb).unwrap();
        assert_eq!(idx.0[0], 2);
        assert_eq!(zq.row(0), codes.row(2));
        // Equidistant from codes 0, 1 and 3: lowest index wins.
        assert_eq!(idx.0[1], 0);
        assert_eq!(cb.usage_counts, vec![1, 0, 1, 0]);
    }

    #[test]
    fn quantize_rejects_bad_inputs() {
        let mut cb = Codebook::new(Mat::zeros(4, 2));
        assert!(matches!(quantize(&Mat::zeros(1, 3), &mut cb), Err(Error::Shape(_))));
        let nan = Mat::from_vec(1, 2, vec![f64::NAN, 0.0]);
        assert!(matches!(quantize(&nan, &mut cb), Err(Error::Numeric(_))));
    }

    #[test]
    fn quantize_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let codes = rand_mat(&mut rng, 4, 5, 1.0);
            let z = rand_mat(&mut rng, 7, 5, 1.5);
            let (idx, _) = quantize(&z, &mut Codebook::new(codes.clone())).unwrap();
            for p in 0..z.rows {
                let dists: Vec<f64> = (0..4)
                    .map(|k| (0..5).map(|c| (z.get(p, c) - codes.get(k, c)).powi(2)).sum())
                    .collect();
                let mut best = 0;
                for k in 1..4 {
                    if dists[k] < dists[best] {
                        best = k;
                    }
                }
                assert_eq!(idx.0[p], best);
            }
        }
    }

    #[test]
    fn vq_loss_examples() {
        let z = Mat::from_rows(&[vec![0.3, -0.2]]);
        let parts = vq_loss(&z, &z, 4.0).unwrap();
        assert_eq!(parts.total, 0.0);
        let ze = Mat::from_rows(&[vec![1.0, 0.0, 0.0]]);
        let zq = Mat::zeros(1, 3);
        let parts = vq_loss(&ze, &zq, 4.0).unwrap();
        assert!((parts.codebook_term - 1.0).abs() < 1e-6);
        assert!((parts.commitment_term - 1.0).abs() < 1e-6);
        assert!((parts.total - 5.0).abs() < 1e-6);
        assert!(matches!(vq_loss(&ze, &Mat::zeros(2, 3), 4.0), Err(Error::Shape(_))));
    }

    #[test]
    fn vq_loss_matches_norm_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = rand_mat(&mut rng, 6, 3, 1.0);
            let b = rand_mat(&mut rng, 6, 3, 1.0);
            let parts = vq_loss(&a, &b, 4.0).unwrap();
            let mut sum = 0.0;
            for p in 0..6 {
                let norm = (0..3).map(|c| (a.get(p, c) - b.get(p, c)).powi(2)).sum::<f64>().sqrt();
                sum += norm * norm;
            }
            let mean = sum / 6.0;
            assert!((parts.total - 5.0 * mean).abs() < 1e-6);
        }
    }

    #[test]
    fn graph_vq_terms_route_gradients() {
        let enc = small(3);
        let mut g = Graph::new();
        let x = g.input(Mat::from_rows(&[vec![0.5, -1.0], vec![1.0, 2.0]]));
        let segs = single_segment(2);
        let ze = enc.encode_graph(&mut g, x, &segs);
        let q = enc.quantize_graph(&mut g, ze).unwrap();
        // Codebook term only: gradient reaches the codebook but not the encoder.
        let grads = g.backward(q.codebook_term, &enc.store);
        assert!(grads.get(enc.codebook).sum_sq() > 0.0);
        assert_eq!(grads.get(enc.encoder.input.weight).sum_sq(), 0.0);
        // Commitment term only: the encoder moves, the codebook does not.
        let grads = g.backward(q.commitment_term, &enc.store);
        assert_eq!(grads.get(enc.codebook).sum_sq(), 0.0);
        assert!(grads.get(enc.encoder.conv2.proj.weight).sum_sq() > 0.0);
        // Values agree with the plain-matrix loss.
        let parts = vq_loss(g.value(ze), g.value(q.z_q), 4.0).unwrap();
        assert!((g.scalar(q.codebook_term) - parts.codebook_term).abs() < 1e-12);
    }

    #[test]
    fn straight_through_identity() {
        let g = Mat::from_rows(&[vec![0.25, -1.0], vec![3.0, 0.0]]);
        assert_eq!(straight_through_backward(&g), g);
        assert_eq!(straight_through_backward(&Mat::zeros(2, 2)), Mat::zeros(2, 2));
    }

    #[test]
    fn straight_through_matches_finite_differences() {
        // Downstream loss f(z_q) = sum(tanh(z_q . A)); the encoder sees df/dz_q.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let codes = rand_mat(&mut rng, 4, 3, 1.0);
        let a = rand_mat(&mut rng, 3, 2, 1.0);
        let z_e = rand_mat(&mut rng, 5, 3, 1.0);
        let mut cb = Codebook::new(codes);
        let (_, z_q) = quantize(&z_e, &mut cb).unwrap();
        let offset: Vec<f64> = z_q.data.iter().zip(&z_e.data).map(|(q, e)| q - e).collect();
        let downstream = |z: &[f64]| -> f64 {
            let mut s = 0.0;
            for p in 0..5 {
                for j in 0..2 {
                    let dot: f64 = (0..3).map(|c| z[p * 3 + c] * a.get(c, j)).sum();
                    s += dot.tanh();
                }
            }
            s
        };
        // Analytic gradient at z_q, passed through unchanged.
        let mut grad_zq = Mat::zeros(5, 3);
        for p in 0..5 {
            for j in 0..2 {
                let dot: f64 = (0..3).map(|c| z_q.get(p, c) * a.get(c, j)).sum();
                let d = 1.0 - dot.tanh().powi(2);
                for c in 0..3 {
                    let v = grad_zq.get(p, c) + d * a.get(c, j);
                    grad_zq.set(p, c, v);
                }
            }
        }
        let grad_ze = straight_through_backward(&grad_zq);
        // Surrogate z_e + sg(z_q - z_e), differentiated by central differences.
        let h = 1e-4;
        for i in 0..z_e.data.len() {
            let mut plus: Vec<f64> = z_e.data.iter().zip(&offset).map(|(e, o)| e + o).collect();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (downstream(&plus) - downstream(&minus)) / (2.0 * h);
            let an = grad_ze.data[i];
            assert!((fd - an).abs() <= 1e-3 * an.abs().max(1e-8), "{fd} vs {an}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut enc = small(4);
        enc.usage_counts = vec![3, 0, 1, 2];
        let path = dir.path().join("q.ckpt");
        let hash = enc.to_checkpoint("f0").save(&path).unwrap();
        let (loaded, h2) = ReferenceEncoder::load(&path).unwrap();
        assert_eq!(hash, h2);
        assert_eq!(loaded.store, enc.store);
        assert_eq!(loaded.usage_counts, enc.usage_counts);
    }

    #[test]
    fn perplexity_values() {
        assert_eq!(usage_perplexity(&[0, 0, 0, 0]), 0.0);
        assert!((usage_perplexity(&[5, 0, 0, 0]) - 1.0).abs() < 1e-12);
        assert!((usage_perplexity(&[2, 2, 2, 2]) - 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn nearest_code_properties(seed in any::<u64>(), shift in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let codes = rand_mat(&mut rng, 4, 3, 1.0);
            let z = rand_mat(&mut rng, 6, 3, 2.0);
            let (idx, zq) = quantize(&z, &mut Codebook::new(codes.clone())).unwrap();
            for p in 0..6 {
                let d = |row: &[f64]| -> f64 { (0..3).map(|c| (z.get(p, c) - row[c]).powi(2)).sum() };
                for k in 0..4 {
                    prop_assert!(d(zq.row(p)) <= d(codes.row(k)));
                }
            }
            // Idempotence.
            let (again, _) = quantize(&zq, &mut Codebook::new(codes.clone())).unwrap();
            prop_assert_eq!(&again, &idx);
            // Translation equivariance.
            let mut zs = z.clone();
            zs.data.iter_mut().for_each(|v| *v += shift);
            let mut cs = codes.clone();
            cs.data.iter_mut().for_each(|v| *v += shift);
            let (moved, _) = quantize(&zs, &mut Codebook::new(cs)).unwrap();
            prop_assert_eq!(moved, idx);
            // Zero loss iff every row sits on its code.
            prop_assert_eq!(vq_loss(&zq, &zq, 4.0).unwrap().total, 0.0);
            prop_assert!(vq_loss(&z, &zq, 4.0).unwrap().total > 0.0);
        }
    }
}

//! Multi-dialect phoneme-level BERT.
//!
//! Input is `[dialect] ++ phonemes`. Pre-training combines masked phoneme
//! prediction with per-phoneme prediction of the enclosing word id.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_hash, Checkpoint};
use crate::corpus::DialectId;
use crate::error::{Error, Result};
use crate::nn::layers::{Embedding, Linear, TransformerStack};
use crate::nn::{clip_grad_norm, segments_from_lengths, Adam, Graph, Mat, ParamId, ParamStore, Segments, Var, WarmupLinear};

pub const MODULE_ID: &str = "mdplbert";
pub const PAD: usize = 0;
pub const MASK: usize = 1;
const SPECIAL: usize = 2;
pub const UNK_GRAPHEME: &str = "<unk>";
/// Separator between words in the phoneme column of the text corpus.
pub const WORD_SEPARATOR: &str = "|";

/// Token and grapheme vocabularies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BertVocab {
    pub phonemes: Vec<String>,
    pub dialects: Vec<String>,
    pub graphemes: Vec<String>,
}

impl BertVocab {
    pub fn new(phonemes: Vec<String>, dialects: Vec<String>, mut words: Vec<String>) -> Result<Self> {
        if phonemes.is_empty() || dialects.is_empty() {
            return Err(Error::Config("BERT vocabulary needs phonemes and dialects".into()));
        }
        words.retain(|w| w != UNK_GRAPHEME);
        words.push(UNK_GRAPHEME.into());
        Ok(BertVocab {
            phonemes,
            dialects,
            graphemes: words,
        })
    }

    /// Token vocabulary size: PAD, MASK, phonemes, dialect tokens.
    pub fn token_count(&self) -> usize {
        SPECIAL + self.phonemes.len() + self.dialects.len()
    }

    pub fn phoneme_token(&self, p: &str) -> Result<usize> {
        self.phonemes
            .iter()
            .position(|x| x == p)
            .map(|i| SPECIAL + i)
            .ok_or_else(|| Error::Vocabulary {
                kind: "phoneme",
                token: p.to_string(),
            })
    }

    pub fn dialect_token(&self, d: &DialectId) -> Result<usize> {
        self.dialects
            .iter()
            .position(|x| x == d.as_str())
            .map(|i| SPECIAL + self.phonemes.len() + i)
            .ok_or_else(|| Error::Vocabulary {
                kind: "dialect",
                token: d.to_string(),
            })
    }

    pub fn is_phoneme_token(&self, t: usize) -> bool {
        (SPECIAL..SPECIAL + self.phonemes.len()).contains(&t)
    }

    /// Phoneme class index of a phoneme token.
    pub fn phoneme_class(&self, t: usize) -> Option<usize> {
        self.is_phoneme_token(t).then(|| t - SPECIAL)
    }

    pub fn grapheme_id(&self, w: &str) -> usize {
        self.graphemes
            .iter()
            .position(|x| x == w)
            .unwrap_or(self.graphemes.len() - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeTokenSequence {
    pub tokens: Vec<usize>,
    /// Word id per position; `None` at the dialect position.
    pub grapheme_ids: Vec<Option<usize>>,
}

impl PhonemeTokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// `[dialect] ++ phonemes`, with the id of the containing word at every phoneme.
pub fn build_inputs(
    vocab: &BertVocab,
    phonemes: &[String],
    dialect: &DialectId,
    word_spans: &[(usize, usize)],
    words: &[String],
) -> Result<PhonemeTokenSequence> {
    let d = vocab.dialect_token(dialect)?;
    if word_spans.len() != words.len() {
        return Err(Error::Alignment(format!(
            "{} word spans for {} words",
            word_spans.len(),
            words.len()
        )));
    }
    let mut cursor = 0;
    let mut grapheme_ids = vec![None];
    for (&(s, e), w) in word_spans.iter().zip(words) {
        if s != cursor || e <= s || e > phonemes.len() {
            return Err(Error::Alignment(format!(
                "word span {s}..{e} does not continue a partition at {cursor}"
            )));
        }
        let id = vocab.grapheme_id(w);
        grapheme_ids.extend(std::iter::repeat(Some(id)).take(e - s));
        cursor = e;
    }
    if cursor != phonemes.len() {
        return Err(Error::Alignment(format!(
            "word spans cover {cursor} of {} phonemes",
            phonemes.len()
        )));
    }
    let mut tokens = Vec::with_capacity(phonemes.len() + 1);
    tokens.push(d);
    for p in phonemes {
        tokens.push(vocab.phoneme_token(p)?);
    }
    Ok(PhonemeTokenSequence { tokens, grapheme_ids })
}

/// Token sequence without word information (inference).
pub fn phoneme_tokens(vocab: &BertVocab, phonemes: &[String], dialect: &DialectId) -> Result<PhonemeTokenSequence> {
    let mut tokens = vec![vocab.dialect_token(dialect)?];
    for p in phonemes {
        tokens.push(vocab.phoneme_token(p)?);
    }
    let n = tokens.len();
    Ok(PhonemeTokenSequence {
        tokens,
        grapheme_ids: vec![None; n],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    pub mask_ratio: f64,
    pub replace_mask_prob: f64,
    pub replace_random_prob: f64,
    pub keep_prob: f64,
    pub seed: u64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        MaskingPolicy {
            mask_ratio: 0.15,
            replace_mask_prob: 0.8,
            replace_random_prob: 0.1,
            keep_prob: 0.1,
            seed: 0,
        }
    }
}

impl MaskingPolicy {
    pub fn validate(&self) -> Result<()> {
        let sum = self.replace_mask_prob + self.replace_random_prob + self.keep_prob;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("masking probabilities sum to {sum}, not 1")));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config("mask ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Number of positions selected in a sequence of `len` tokens.
    pub fn mask_count(&self, len: usize) -> usize {
        let raw = self.mask_ratio * (len.saturating_sub(1)) as f64;
        // Guard against products like 0.15 * 20 = 3.0000000000000004.
        (raw - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSequence {
    pub seq: PhonemeTokenSequence,
    pub positions: Vec<usize>,
    /// Original phoneme class at each selected position.
    pub labels: Vec<usize>,
    pub actions: Vec<MaskAction>,
}

/// Selects ⌈ratio·(len−1)⌉ non-dialect positions and corrupts them.
pub fn apply_masking<R: Rng>(
    seq: &PhonemeTokenSequence,
    policy: &MaskingPolicy,
    vocab: &BertVocab,
    rng: &mut R,
) -> Result<MaskedSequence> {
    if seq.len() < 2 {
        return Err(Error::Input("masking needs at least one phoneme after the dialect token".into()));
    }
    let n = policy.mask_count(seq.len());
    let mut positions: Vec<usize> = sample(rng, seq.len() - 1, n).into_iter().map(|i| i + 1).collect();
    positions.sort_unstable();
    let mut out = seq.clone();
    let mut labels = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for &p in &positions {
        let class = vocab
            .phoneme_class(seq.tokens[p])
            .ok_or_else(|| Error::Shape(format!("position {p} does not hold a phoneme token")))?;
        labels.push(class);
        let u: f64 = rng.gen();
        let action = if u < policy.replace_mask_prob {
            MaskAction::Mask
        } else if u < policy.replace_mask_prob + policy.replace_random_prob {
            MaskAction::Random
        } else {
            MaskAction::Keep
        };
        match action {
            MaskAction::Mask => out.tokens[p] = MASK,
            MaskAction::Random => out.tokens[p] = SPECIAL + rng.gen_range(0..vocab.phonemes.len()),
            MaskAction::Keep => {}
        }
        actions.push(action);
    }
    Ok(MaskedSequence {
        seq: out,
        positions,
        labels,
        actions,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BertConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ff_width: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for BertConfig {
    fn default() -> Self {
        BertConfig {
            layers: 2,
            heads: 2,
            hidden: 64,
            ff_width: 256,
            max_len: 64,
            seed: 0,
        }
    }
}

impl BertConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.layers, self.heads, self.hidden, self.ff_width, self.max_len].contains(&0) {
            return Err(Error::Config("BERT sizes must be positive".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config("BERT hidden width must divide by the head count".into()));
        }
        Ok(())
    }
}

/// Token embeddings, learned positions and the transformer stack. Every
/// parameter name starts with `bert.`.
#[derive(Clone, Debug)]
pub struct BertBody {
    pub token_emb: Embedding,
    pub positions: ParamId,
    pub stack: TransformerStack,
    pub hidden: usize,
    pub max_len: usize,
}

impl BertBody {
    pub fn new<R: Rng>(store: &mut ParamStore, config: &BertConfig, vocab: &BertVocab, rng: &mut R) -> Self {
        BertBody {
            token_emb: Embedding::new(store, "bert.token_embedding", vocab.token_count(), config.hidden, rng),
            positions: store.uniform("bert.positions", config.max_len, config.hidden, 0.1, rng),
            stack: TransformerStack::new(
                store,
                "bert.encoder",
                config.layers,
                config.hidden,
                config.heads,
                config.ff_width,
                rng,
            ),
            hidden: config.hidden,
            max_len: config.max_len,
        }
    }

    /// Encodes a batch of token sequences stacked row-wise.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, seqs: &[&[usize]]) -> Result<(Var, Segments)> {
        let mut tokens = Vec::new();
        let mut pos_ids = Vec::new();
        let mut lengths = Vec::new();
        for s in seqs {
            if s.len() > self.max_len {
                return Err(Error::Length {
                    len: s.len(),
                    max: self.max_len,
                });
            }
            tokens.extend_from_slice(s);
            pos_ids.extend(0..s.len());
            lengths.push(s.len());
        }
        let segs = segments_from_lengths(&lengths);
        let x = self.token_emb.forward(g, store, &tokens);
        let table = g.param(store, self.positions);
        let p = g.gather(table, &pos_ids);
        let x = g.add(x, p);
        Ok((self.stack.forward(g, store, x, &segs), segs))
    }
}

/// One line of the multi-dialect text corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextLine {
    pub dialect: DialectId,
    pub graphemes: Vec<String>,
    /// Phonemes grouped per word.
    pub words: Vec<Vec<String>>,
}

impl TextLine {
    pub fn phonemes(&self) -> Vec<String> {
        self.words.iter().flatten().cloned().collect()
    }

    pub fn word_spans(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.words.len());
        let mut s = 0;
        for w in &self.words {
            out.push((s, s + w.len()));
            s += w.len();
        }
        out
    }

    pub fn to_line(&self) -> String {
        let ph: Vec<String> = self.words.iter().map(|w| w.join(" ")).collect();
        format!(
            "{}\t{}\t{}",
            self.dialect,
            self.graphemes.join(" "),
            ph.join(&format!(" {WORD_SEPARATOR} "))
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Validation(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let dialect = DialectId::new(fields[0])?;
        let graphemes: Vec<String> = fields[1].split_whitespace().map(str::to_string).collect();
        let words: Vec<Vec<String>> = fields[2]
            .split(WORD_SEPARATOR)
            .map(|w| w.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .collect();
        if graphemes.is_empty() || words.len() != graphemes.len() || words.iter().any(Vec::is_empty) {
            return Err(Error::Validation(format!(
                "{} words but {} phoneme groups",
                graphemes.len(),
                words.len()
            )));
        }
        Ok(TextLine {
            dialect,
            graphemes,
            words,
        })
    }
}

pub fn read_text_corpus(path: &Path) -> Result<Vec<TextLine>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            TextLine::parse(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_text_corpus(lines: &[TextLine], path: &Path) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.to_line());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup: usize,
    pub clip: f64,
    pub masking: MaskingPolicy,
    pub seed: u64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            steps: 1000,
            batch_size: 16,
            lr: 1e-3,
            warmup: 200,
            clip: 1.0,
            masking: MaskingPolicy::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub step: usize,
    pub masked_phoneme: f64,
    pub grapheme: f64,
    pub total: f64,
}

/// BERT body with the masked-phoneme and grapheme heads.
#[derive(Clone, Debug)]
pub struct MdPlBert {
    pub config: BertConfig,
    pub vocab: BertVocab,
    pub store: ParamStore,
    pub body: BertBody,
    pub mlm_head: Linear,
    pub grapheme_head: Linear,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: BertConfig,
    vocab: BertVocab,
    pretrain_steps: usize,
}

impl MdPlBert {
    pub fn new(config: BertConfig, vocab: BertVocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let body = BertBody::new(&mut store, &config, &vocab, &mut rng);
        let mlm_head = Linear::new(&mut store, "mlm_head", config.hidden, vocab.phonemes.len(), &mut rng);
        let grapheme_head = Linear::new(&mut store, "grapheme_head", config.hidden, vocab.graphemes.len(), &mut rng);
        Ok(MdPlBert {
            config,
            vocab,
            store,
            body,
            mlm_head,
            grapheme_head,
        })
    }

    /// Final-layer vectors, one row per token.
    pub fn encode_text(&self, seq: &PhonemeTokenSequence) -> Result<Mat> {
        let mut g = Graph::new();
        let (h, _) = self.body.forward(&mut g, &self.store, &[&seq.tokens])?;
        Ok(g.value(h).clone())
    }

    /// Loss graph for a batch: (masked phoneme CE, grapheme CE).
    pub fn losses(&self, g: &mut Graph, batch: &[MaskedSequence]) -> Result<(Var, Var)> {
        let seqs: Vec<&[usize]> = batch.iter().map(|m| m.seq.tokens.as_slice()).collect();
        let (h, segs) = self.body.forward(g, &self.store, &seqs)?;
        let mut mlm_targets = Vec::new();
        let mut g_targets = Vec::new();
        for (m, &(start, len)) in batch.iter().zip(segs.iter()) {
            if m.positions.len() != m.labels.len() || m.seq.grapheme_ids.len() != len {
                return Err(Error::Shape("masked labels and positions are misaligned".into()));
            }
            for (&p, &l) in m.positions.iter().zip(&m.labels) {
                if p == 0 || p >= len {
                    return Err(Error::Shape(format!("label position {p} outside 1..{len}")));
                }
                mlm_targets.push((start + p, l));
            }
            for (i, gid) in m.seq.grapheme_ids.iter().enumerate().skip(1) {
                if let Some(gid) = gid {
                    g_targets.push((start + i, *gid));
                }
            }
        }
        let logits = self.mlm_head.forward(g, &self.store, h);
        let mlm = g.cross_entropy(logits, &mlm_targets);
        let glog = self.grapheme_head.forward(g, &self.store, h);
        let gr = g.cross_entropy(glog, &g_targets);
        Ok((mlm, gr))
    }

    /// Evaluate both losses for a batch without updating.
    pub fn pretrain_step(&self, batch: &[MaskedSequence]) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let (a, b) = self.losses(&mut g, batch)?;
        Ok((g.scalar(a), g.scalar(b)))
    }

    pub fn prepare(&self, lines: &[TextLine]) -> Result<Vec<PhonemeTokenSequence>> {
        lines
            .iter()
            .map(|l| build_inputs(&self.vocab, &l.phonemes(), &l.dialect, &l.word_spans(), &l.graphemes))
            .collect()
    }

    /// Masked-LM plus grapheme pre-training over `lines`.
    pub fn pretrain(&mut self, lines: &[TextLine], opts: &PretrainOptions) -> Result<Vec<PretrainLog>> {
        opts.masking.validate()?;
        let seqs = self.prepare(lines)?;
        if seqs.is_empty() {
            return Err(Error::Input("empty pre-training corpus".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut mask_rng = ChaCha8Rng::seed_from_u64(opts.masking.seed ^ opts.seed.rotate_left(17));
        let schedule = WarmupLinear {
            peak: opts.lr,
            warmup: opts.warmup,
            total: opts.steps,
        };
        let mut adam = Adam::new(&self.store);
        let mut log = Vec::with_capacity(opts.steps);
        for step in 1..=opts.steps {
            let batch: Vec<MaskedSequence> = (0..opts.batch_size.max(1))
                .map(|_| {
                    let s = &seqs[rng.gen_range(0..seqs.len())];
                    apply_masking(s, &opts.masking, &self.vocab, &mut mask_rng)
                })
                .collect::<Result<_>>()?;
            let mut g = Graph::new();
            let (mlm, gr) = self.losses(&mut g, &batch)?;
            let total = g.weighted_sum(&[(mlm, 1.0), (gr, 1.0)]);
            let value = g.scalar(total);
            if !value.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: "non-finite pre-training loss".into(),
                });
            }
            let mut grads = g.backward(total, &self.store);
            clip_grad_norm(&mut grads, opts.clip);
            adam.step(&mut self.store, &grads, schedule.lr(step));
            log.push(PretrainLog {
                step,
                masked_phoneme: g.scalar(mlm),
                grapheme: g.scalar(gr),
                total: value,
            });
        }
        Ok(log)
    }

    pub fn to_checkpoint(&self, pretrain_steps: usize) -> Checkpoint {
        let meta = Meta {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            pretrain_steps,
        };
        Checkpoint::new(
            MODULE_ID,
            config_hash(&(&self.config, &self.vocab)),
            serde_json::to_value(meta).expect("meta serialises"),
            self.store.clone(),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: Meta = ckpt.meta_as()?;
        let mut m = MdPlBert::new(meta.config, meta.vocab)?;
        m.store.load_from(&ckpt.params)?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let (ckpt, hash) = Checkpoint::load(path, MODULE_ID)?;
        Ok((Self::from_checkpoint(&ckpt)?, hash))
    }
}

/// Per-dialect counts of a text corpus, for reports.
pub fn dialect_counts(lines: &[TextLine]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for l in lines {
        *out.entry(l.dialect.to_string()).or_insert(0) += 1;
    }
    out
}

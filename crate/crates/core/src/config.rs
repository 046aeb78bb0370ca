//! Run configuration: one TOML file drives every pipeline stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{RemoteLlmConfig, DEFAULT_TEMPLATE};
use crate::backbone::TtsConfig;
use crate::corpus::synth::SyntheticCorpusConfig;
use crate::error::{Error, Result};
use crate::mdplbert::{BertConfig, MaskingPolicy, PretrainOptions};
use crate::alvpredictor::FinetuneOptions;
use crate::quantizer::QuantizerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Log-F0 from channel 0 of the corpus frame files.
    F0,
    /// Precomputed `<utt_id>.alvf` files under `external_dir`.
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub provider: FeatureKind,
    pub external_dir: Option<PathBuf>,
    pub external_dim: usize,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            provider: FeatureKind::F0,
            external_dir: None,
            external_dim: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerSection {
    pub codes: usize,
    pub beta: f64,
    pub init_limit: f64,
    /// Codes (almost) unused over a logging window are moved onto a random
    /// encoder output until this fraction of stage 1 has run. 0 disables restarts.
    pub restart_until: f64,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        QuantizerSection {
            codes: 4,
            beta: 4.0,
            init_limit: 0.05,
            restart_until: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSection {
    /// Embedding width; the quantizer encoder uses the same width.
    pub width: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub predictor_width: usize,
}

impl Default for BackboneSection {
    fn default() -> Self {
        BackboneSection {
            width: 256,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 2,
            ff_width: 512,
            predictor_width: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainText {
    /// Standard-dialect text plus its translations.
    Multidialect,
    /// Standard-dialect text only.
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BertSection {
    pub text: PretrainText,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ff_width: usize,
    pub max_len: usize,
    pub mask_ratio: f64,
    pub replace_mask_prob: f64,
    pub replace_random_prob: f64,
    pub keep_prob: f64,
}

impl Default for BertSection {
    fn default() -> Self {
        let b = BertConfig::default();
        let m = MaskingPolicy::default();
        BertSection {
            text: PretrainText::Multidialect,
            layers: b.layers,
            heads: b.heads,
            hidden: b.hidden,
            ff_width: b.ff_width,
            max_len: b.max_len,
            mask_ratio: m.mask_ratio,
            replace_mask_prob: m.replace_mask_prob,
            replace_random_prob: m.replace_random_prob,
            keep_prob: m.keep_prob,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    /// Validation cadence during fine-tuning, in steps.
    pub eval_every: usize,
}

impl Default for PredictorSection {
    fn default() -> Self {
        PredictorSection { eval_every: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Deterministic word substitution from the corpus variant table.
    Rule,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub backend: BackendKind,
    /// Standard-dialect text sentences generated for pre-training.
    pub text_sentences: usize,
    pub concurrency: usize,
    pub template: String,
    pub remote: RemoteLlmConfig,
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection {
            backend: BackendKind::Rule,
            text_sentences: 4000,
            concurrency: 1,
            template: DEFAULT_TEMPLATE.into(),
            remote: RemoteLlmConfig::default(),
        }
    }
}

/// Iteration budget and peak learning rate of one training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageBudget {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for StageBudget {
    fn default() -> Self {
        StageBudget {
            steps: 1000,
            lr: 1e-3,
            batch_size: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub warmup: usize,
    pub clip: f64,
    /// One in `holdout_every` utterances goes to test and one to validation.
    pub holdout_every: usize,
    /// Share of the training split used to calibrate the ALV→H/L mapping.
    pub calibration_fraction: f64,
    /// Training loss is logged every this many steps.
    pub log_every: usize,
    pub stage1: StageBudget,
    pub bert: StageBudget,
    pub stage2: StageBudget,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            warmup: 200,
            clip: 1.0,
            holdout_every: 10,
            calibration_fraction: 0.1,
            log_every: 50,
            stage1: StageBudget {
                steps: 3000,
                lr: 1e-3,
                batch_size: 16,
            },
            bert: StageBudget {
                steps: 1000,
                lr: 1e-3,
                batch_size: 32,
            },
            stage2: StageBudget {
                steps: 1000,
                lr: 5e-4,
                batch_size: 16,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Held-out text sentences used for cross-dialect synthesis.
    pub cd_sentences: usize,
    /// Sentences synthesised per forced ALV class.
    pub forced_sentences: usize,
    pub text_seed: u64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            cd_sentences: 100,
            forced_sentences: 40,
            text_seed: 777,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub work_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            work_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: SyntheticCorpusConfig,
    pub features: FeaturesSection,
    pub quantizer: QuantizerSection,
    pub backbone: BackboneSection,
    pub bert: BertSection,
    pub predictor: PredictorSection,
    pub augment: AugmentSection,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::desk()
    }
}

impl RunConfig {
    /// Desk-scale preset: paper architecture, 3k/1k iterations, warmup 200.
    pub fn desk() -> Self {
        RunConfig {
            seed: 1234,
            corpus: SyntheticCorpusConfig::default(),
            features: FeaturesSection::default(),
            quantizer: QuantizerSection::default(),
            backbone: BackboneSection::default(),
            bert: BertSection::default(),
            predictor: PredictorSection::default(),
            augment: AugmentSection::default(),
            training: TrainingSection::default(),
            evaluation: EvaluationSection::default(),
            paths: PathsSection::default(),
        }
    }

    /// Paper budgets: 100k/10k iterations, warmup 4000.
    pub fn full() -> Self {
        let mut c = RunConfig::desk();
        c.training.warmup = 4000;
        c.training.stage1.steps = 100_000;
        c.training.bert.steps = 100_000;
        c.training.stage2.steps = 10_000;
        c.training.log_every = 500;
        c.predictor.eval_every = 500;
        c
    }

    /// Narrow models and short budgets sized for a single CPU core.
    pub fn compact() -> Self {
        let mut c = RunConfig::desk();
        c.backbone = BackboneSection {
            width: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 2,
            ff_width: 128,
            predictor_width: 64,
        };
        c.training.stage1 = StageBudget {
            steps: 1500,
            lr: 2e-3,
            batch_size: 8,
        };
        c.training.bert = StageBudget {
            steps: 600,
            lr: 1e-3,
            batch_size: 32,
        };
        c.training.stage2 = StageBudget {
            steps: 600,
            lr: 1e-3,
            batch_size: 16,
        };
        c.augment.text_sentences = 2000;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(RunConfig::desk()),
            "full" => Ok(RunConfig::full()),
            "compact" => Ok(RunConfig::compact()),
            other => Err(Error::Config(format!("unknown preset `{other}` (desk, full, compact)"))),
        }
    }

    /// Parses TOML; missing keys take desk defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Reads a config file. Relative `work_dir` paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut c = RunConfig::from_toml(&text)?;
        if c.paths.work_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            c.paths.work_dir = base.join(&c.paths.work_dir);
        }
        if let Some(d) = &c.features.external_dir {
            if d.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                c.features.external_dir = Some(base.join(d));
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.corpus.validate()?;
        for (name, b) in [
            ("stage1", &self.training.stage1),
            ("bert", &self.training.bert),
            ("stage2", &self.training.stage2),
        ] {
            if !(b.lr > 0.0) || !b.lr.is_finite() {
                return Err(Error::Config(format!("training.{name}.lr must be positive")));
            }
            if b.batch_size == 0 {
                return Err(Error::Config(format!("training.{name}.batch_size must be positive")));
            }
        }
        if !(self.training.clip > 0.0) {
            return bad("training.clip must be positive");
        }
        if self.training.holdout_every < 3 {
            return bad("training.holdout_every must be at least 3");
        }
        if !(0.0..1.0).contains(&self.training.calibration_fraction) || self.training.calibration_fraction == 0.0 {
            return bad("training.calibration_fraction must lie in (0, 1)");
        }
        if self.training.log_every == 0 || self.predictor.eval_every == 0 {
            return bad("logging and evaluation cadences must be positive");
        }
        if self.features.provider == FeatureKind::External && self.features.external_dir.is_none() {
            return bad("features.external_dir is required for the external provider");
        }
        if !(0.0..=1.0).contains(&self.quantizer.restart_until) {
            return bad("quantizer.restart_until must lie in [0, 1]");
        }
        if self.augment.concurrency == 0 {
            return bad("augment.concurrency must be positive");
        }
        self.tts_config(1).validate()?;
        self.quantizer_config(1).validate()?;
        self.bert_config().validate()?;
        self.masking().validate()?;
        Ok(())
    }

    pub fn tts_config(&self, out_dim: usize) -> TtsConfig {
        let b = &self.backbone;
        TtsConfig {
            width: b.width,
            encoder_layers: b.encoder_layers,
            decoder_layers: b.decoder_layers,
            heads: b.heads,
            ff_width: b.ff_width,
            out_dim,
            codes: self.quantizer.codes,
            predictor_width: b.predictor_width,
            frame_rate: self.corpus.frame_rate,
            seed: self.seed.wrapping_add(1),
        }
    }

    pub fn quantizer_config(&self, input_dim: usize) -> QuantizerConfig {
        QuantizerConfig {
            input_dim,
            width: self.backbone.width,
            codes: self.quantizer.codes,
            beta: self.quantizer.beta,
            init_limit: self.quantizer.init_limit,
            seed: self.seed.wrapping_add(2),
        }
    }

    pub fn bert_config(&self) -> BertConfig {
        let b = &self.bert;
        BertConfig {
            layers: b.layers,
            heads: b.heads,
            hidden: b.hidden,
            ff_width: b.ff_width,
            max_len: b.max_len,
            seed: self.seed.wrapping_add(3),
        }
    }

    pub fn masking(&self) -> MaskingPolicy {
        let b = &self.bert;
        MaskingPolicy {
            mask_ratio: b.mask_ratio,
            replace_mask_prob: b.replace_mask_prob,
            replace_random_prob: b.replace_random_prob,
            keep_prob: b.keep_prob,
            seed: self.seed.wrapping_add(4),
        }
    }

    pub fn pretrain_options(&self) -> PretrainOptions {
        let t = &self.training;
        PretrainOptions {
            steps: t.bert.steps,
            batch_size: t.bert.batch_size,
            lr: t.bert.lr,
            warmup: t.warmup,
            clip: t.clip,
            masking: self.masking(),
            seed: self.seed.wrapping_add(5),
        }
    }

    pub fn finetune_options(&self) -> FinetuneOptions {
        let t = &self.training;
        FinetuneOptions {
            steps: t.stage2.steps,
            batch_size: t.stage2.batch_size,
            lr: t.stage2.lr,
            warmup: t.warmup,
            clip: t.clip,
            eval_every: self.predictor.eval_every,
            seed: self.seed.wrapping_add(6),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::desk());
        assert_eq!(c.training.warmup, 200);
        assert_eq!(c.training.stage1.steps, 3000);
        assert_eq!(c.training.stage2.steps, 1000);
        assert_eq!(c.quantizer.codes, 4);
        assert_eq!(c.quantizer.beta, 4.0);
    }

    #[test]
    fn full_preset_uses_paper_budgets() {
        let c = RunConfig::full();
        assert_eq!(c.training.warmup, 4000);
        assert_eq!(c.training.stage1.steps, 100_000);
        assert_eq!(c.training.stage2.steps, 10_000);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        for name in ["desk", "full", "compact"] {
            let c = RunConfig::preset(name).unwrap();
            assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
    }

    #[test]
    fn partial_override() {
        let c = RunConfig::from_toml("seed = 9\n[training.stage1]\nsteps = 5\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.training.stage1.steps, 5);
        assert_eq!(c.training.stage1.batch_size, 16);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            RunConfig::from_toml("[training.stage2]\nlr = 0.0\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::from_toml("bogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_toml("[backbone]\nwidth = 65\nheads = 2\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("[features]\nprovider = \"external\"\n"),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::preset("huge").is_err());
    }

    #[test]
    fn module_configs_share_width_and_codes() {
        let c = RunConfig::compact();
        assert_eq!(c.tts_config(9).width, c.quantizer_config(1).width);
        assert_eq!(c.tts_config(9).codes, c.quantizer_config(1).codes);
    }
}

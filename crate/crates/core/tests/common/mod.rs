#![allow(dead_code)]

use std::path::{Path, PathBuf};

use alvtts::config::RunConfig;

/// A configuration small enough to run every stage in a few seconds.
pub fn tiny_config() -> RunConfig {
    let mut c = RunConfig::compact();
    c.corpus.sentence_count = 60;
    c.backbone.width = 16;
    c.backbone.ff_width = 32;
    c.backbone.predictor_width = 16;
    c.bert.hidden = 16;
    c.bert.ff_width = 32;
    c.augment.text_sentences = 40;
    c.training.warmup = 2;
    c.training.log_every = 2;
    c.training.stage1.steps = 4;
    c.training.stage1.batch_size = 2;
    c.training.bert.steps = 4;
    c.training.bert.batch_size = 4;
    c.training.stage2.steps = 4;
    c.training.stage2.batch_size = 4;
    c.predictor.eval_every = 2;
    c.evaluation.cd_sentences = 6;
    c.evaluation.forced_sentences = 3;
    c
}

/// Writes `config` into `dir` with a relative work directory and returns its path.
pub fn write_config(dir: &Path, mut config: RunConfig) -> PathBuf {
    config.paths.work_dir = "work".into();
    let path = dir.join("config.toml");
    std::fs::write(&path, config.to_toml()).unwrap();
    path
}

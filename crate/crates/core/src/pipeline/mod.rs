//! End-to-end orchestration of the training and evaluation stages.

pub mod evaluate;
pub mod run;
pub mod stage1;

pub use run::{BertOptions, Pipeline, Stage2Options, SynthMode, SynthRequest, SynthOutput};

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{FeatureKind, RunConfig};
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::features::{ExternalFeatureProvider, F0Provider, ProsodyProvider};

/// File locations under the run's work directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn text_dir(&self) -> PathBuf {
        self.root.join("text")
    }

    pub fn standard_text(&self) -> PathBuf {
        self.text_dir().join("standard.tsv")
    }

    pub fn multidialect_text(&self) -> PathBuf {
        self.text_dir().join("multidialect.tsv")
    }

    pub fn translations(&self) -> PathBuf {
        self.text_dir().join("translations.json")
    }

    pub fn audit_log(&self) -> PathBuf {
        self.text_dir().join("audit.jsonl")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.ckpt"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(format!("{name}.json"))
    }

    pub fn alv_cache(&self) -> PathBuf {
        self.root.join("alv").join("extracted.json")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn metrics(&self) -> PathBuf {
        self.eval_dir().join("metrics.json")
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.root.join("synth")
    }
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Indices of the train, validation and test utterances, plus the
/// calibration subset (a prefix of train).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub calibration: Vec<usize>,
}

impl Splits {
    /// A fixed hash of the index picks the bucket: one in `every` utterances
    /// goes to test and one in `every` to validation.
    pub fn new(count: usize, every: usize, calibration_fraction: f64) -> Self {
        let mut s = Splits {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            calibration: Vec::new(),
        };
        for i in 0..count {
            match split_hash(i as u64) % every as u64 {
                0 => s.test.push(i),
                1 => s.val.push(i),
                _ => s.train.push(i),
            }
        }
        let n = ((s.train.len() as f64 * calibration_fraction).ceil() as usize).min(s.train.len());
        s.calibration = s.train[..n].to_vec();
        s
    }

    pub fn select<'a>(utterances: &'a [Utterance], idx: &[usize]) -> Vec<&'a Utterance> {
        idx.iter().map(|&i| &utterances[i]).collect()
    }
}

/// splitmix64 finaliser.
fn split_hash(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn make_provider(config: &RunConfig) -> Result<Box<dyn ProsodyProvider>> {
    Ok(match config.features.provider {
        FeatureKind::F0 => Box::new(F0Provider {
            frame_rate: config.corpus.frame_rate,
        }),
        FeatureKind::External => Box::new(ExternalFeatureProvider {
            dir: config
                .features
                .external_dir
                .clone()
                .ok_or_else(|| Error::Config("features.external_dir is not set".into()))?,
            dim: config.features.external_dim,
            frame_rate: config.corpus.frame_rate,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_partition_indices() {
        let s = Splits::new(2000, 10, 0.1);
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..2000).collect::<Vec<_>>());
        let n = s.train.len();
        assert_eq!(s.calibration, s.train[..(n as f64 * 0.1).ceil() as usize].to_vec());
        for part in [&s.test, &s.val] {
            assert!((150..250).contains(&part.len()), "{}", part.len());
            let even = part.iter().filter(|&&i| i % 2 == 0).count();
            assert!(even > part.len() / 3 && even < 2 * part.len() / 3);
        }
        assert_eq!(Splits::new(2000, 10, 0.1), s);
    }
}

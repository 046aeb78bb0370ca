//! Phoneme-level prosody features: the F0 pipeline (unvoiced-gap
//! interpolation, utterance-wise z-normalisation), phoneme-level average
//! pooling, and pluggable frame-feature providers.

use std::path::PathBuf;

use crate::corpus::alvf::read_alvf;
use crate::corpus::{Alignment, Utterance};
use crate::error::{Error, Result};
use crate::nn::Mat;

/// Frames at or below this log-F0 value are treated as unvoiced.
pub const UNVOICED_CEILING: f64 = 0.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Mat,
    pub frame_rate: f64,
    /// Per-frame voicing; only meaningful for F0 contours.
    pub voicing: Option<Vec<bool>>,
}

impl FrameSequence {
    pub fn new(frames: Mat, frame_rate: f64, voicing: Option<Vec<bool>>) -> Result<Self> {
        if frames.rows == 0 {
            return Err(Error::Shape("frame sequence must have at least one frame".into()));
        }
        if !frames.is_finite() {
            return Err(Error::Numeric("frame sequence contains non-finite values".into()));
        }
        if let Some(v) = &voicing {
            if v.len() != frames.rows {
                return Err(Error::Shape(format!("{} voicing flags for {} frames", v.len(), frames.rows)));
            }
        }
        Ok(FrameSequence {
            frames,
            frame_rate,
            voicing,
        })
    }

    /// A one-dimensional contour with voicing derived from the value sign.
    pub fn f0_contour(values: Vec<f64>, frame_rate: f64) -> Result<Self> {
        let voicing = values.iter().map(|&v| v > UNVOICED_CEILING).collect();
        let n = values.len();
        FrameSequence::new(Mat::from_vec(n, 1, values), frame_rate, Some(voicing))
    }

    fn voicing_or_all(&self) -> Vec<bool> {
        self.voicing.clone().unwrap_or_else(|| vec![true; self.frames.rows])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhonemeFeatureSequence {
    pub vectors: Mat,
}

/// Source of frame-level prosody features for an utterance.
///
/// Implementations must be deterministic: the same utterance yields the same frames.
pub trait ProsodyProvider: Send + Sync {
    fn provide(&self, utterance: &Utterance) -> Result<FrameSequence>;
    fn dim(&self) -> usize;
    fn name(&self) -> &'static str;
}

fn check_contour(contour: &FrameSequence) -> Result<()> {
    if contour.frames.cols != 1 {
        return Err(Error::Shape(format!("F0 contour must be one-dimensional, got D={}", contour.frames.cols)));
    }
    Ok(())
}

/// Z-normalise the voiced frames of a contour (population variance).
pub fn normalize_f0(contour: &FrameSequence) -> Result<FrameSequence> {
    check_contour(contour)?;
    let voicing = contour.voicing_or_all();
    let voiced: Vec<f64> = contour
        .frames
        .data
        .iter()
        .zip(&voicing)
        .filter(|(_, &v)| v)
        .map(|(x, _)| *x)
        .collect();
    if voiced.len() < 2 {
        return Err(Error::DegenerateContour(format!("{} voiced frames; need at least 2", voiced.len())));
    }
    let n = voiced.len() as f64;
    let mean = voiced.iter().sum::<f64>() / n;
    let var = voiced.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 1e-12 {
        return Err(Error::DegenerateContour("voiced frames have zero variance".into()));
    }
    let sd = var.sqrt();
    let mut out = contour.clone();
    for (x, &v) in out.frames.data.iter_mut().zip(&voicing) {
        if v {
            *x = (*x - mean) / sd;
        }
    }
    Ok(out)
}

/// Fill unvoiced frames by linear interpolation between the nearest voiced
/// neighbours; leading and trailing gaps hold the nearest voiced value.
pub fn interpolate_unvoiced(contour: &FrameSequence) -> Result<FrameSequence> {
    check_contour(contour)?;
    let voicing = contour.voicing_or_all();
    let voiced_idx: Vec<usize> = (0..voicing.len()).filter(|&i| voicing[i]).collect();
    let (Some(&first), Some(&last)) = (voiced_idx.first(), voiced_idx.last()) else {
        return Err(Error::DegenerateContour("no voiced frames".into()));
    };
    let x = &contour.frames.data;
    let mut y = x.clone();
    for v in y.iter_mut().take(first) {
        *v = x[first];
    }
    for v in y.iter_mut().skip(last + 1) {
        *v = x[last];
    }
    for w in voiced_idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (i, v) in y.iter_mut().enumerate().take(b).skip(a + 1) {
            let t = (i - a) as f64 / (b - a) as f64;
            *v = x[a] + t * (x[b] - x[a]);
        }
    }
    let n = y.len();
    Ok(FrameSequence {
        frames: Mat::from_vec(n, 1, y),
        frame_rate: contour.frame_rate,
        voicing: Some(vec![true; n]),
    })
}

/// Average frames over each phoneme's aligned span.
pub fn pool_phoneme_level(frames: &FrameSequence, alignment: &Alignment) -> Result<PhonemeFeatureSequence> {
    let m = &frames.frames;
    let mut out = Mat::zeros(alignment.len(), m.cols);
    for (p, span) in alignment.spans.iter().enumerate() {
        if span.start >= span.end || span.end > m.rows {
            return Err(Error::Alignment(format!(
                "span {}:{} of phoneme {p} lies outside {} frames",
                span.start, span.end, m.rows
            )));
        }
        let row = out.row_mut(p);
        for t in span.start..span.end {
            for (o, v) in row.iter_mut().zip(m.row(t)) {
                *o += v;
            }
        }
        let n = (span.end - span.start) as f64;
        row.iter_mut().for_each(|o| *o /= n);
    }
    Ok(PhonemeFeatureSequence { vectors: out })
}

/// Log-F0 from column 0 of the utterance's frame file, gap-filled then z-normalised.
#[derive(Clone, Debug)]
pub struct F0Provider {
    pub frame_rate: f64,
}

impl ProsodyProvider for F0Provider {
    fn provide(&self, utterance: &Utterance) -> Result<FrameSequence> {
        let frames = utterance.frames()?;
        if frames.cols == 0 {
            return Err(Error::Format(format!("{}: frame file has no channels", utterance.utt_id)));
        }
        let values: Vec<f64> = (0..frames.rows).map(|t| frames.get(t, 0)).collect();
        let contour = FrameSequence::f0_contour(values, self.frame_rate)?;
        normalize_f0(&interpolate_unvoiced(&contour)?)
    }

    fn dim(&self) -> usize {
        1
    }

    fn name(&self) -> &'static str {
        "f0"
    }
}

/// Precomputed features read verbatim from `<dir>/<utt_id>.alvf`.
#[derive(Clone, Debug)]
pub struct ExternalFeatureProvider {
    pub dir: PathBuf,
    pub dim: usize,
    pub frame_rate: f64,
}

impl ProsodyProvider for ExternalFeatureProvider {
    fn provide(&self, utterance: &Utterance) -> Result<FrameSequence> {
        let path = self.dir.join(format!("{}.alvf", utterance.utt_id));
        let frames = read_alvf(&path)?;
        if frames.cols != self.dim {
            return Err(Error::Format(format!(
                "{}: file declares D={}, provider expects D={}",
                path.display(),
                frames.cols,
                self.dim
            )));
        }
        FrameSequence::new(frames, self.frame_rate, None)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &'static str {
        "external"
    }
}

/// Provider output pooled to one vector per phoneme.
pub fn phoneme_features(provider: &dyn ProsodyProvider, utterance: &Utterance) -> Result<PhonemeFeatureSequence> {
    let frames = provider.provide(utterance)?;
    if frames.frames.rows < utterance.alignment.total_frames() {
        return Err(Error::Alignment(format!(
            "{}: alignment needs {} frames, features have {}",
            utterance.utt_id,
            utterance.alignment.total_frames(),
            frames.frames.rows
        )));
    }
    pool_phoneme_level(&frames, &utterance.alignment)
}

//! Objective metrics: ALV accuracy against oracle accents, log-F0 by ALV class,
//! embedding-cosine speaker similarity and corpus BLEU-4.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::synth::mora_groups;
use crate::corpus::{Accent, Alignment};
use crate::error::{Error, Result};
use crate::nn::Mat;

/// Pseudo H/L label for every ALV index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassMapping(pub Vec<Accent>);

impl ClassMapping {
    pub fn label(&self, alv: usize) -> Result<Accent> {
        self.0
            .get(alv)
            .copied()
            .ok_or_else(|| Error::Shape(format!("ALV {alv} outside a {}-class mapping", self.0.len())))
    }

    /// Bit `i` of `bits` set means class `i` is H.
    pub fn from_bits(bits: u32, k: usize) -> Self {
        ClassMapping((0..k).map(|i| if bits >> i & 1 == 1 { Accent::H } else { Accent::L }).collect())
    }
}

/// Per-mora ALV: majority over the mora's phonemes, ties resolved by the
/// vowel (last phoneme of the mora).
pub fn mora_alvs(alvs: &[usize]) -> Vec<usize> {
    mora_groups(alvs.len())
        .into_iter()
        .map(|(s, e)| {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for &a in &alvs[s..e] {
                *counts.entry(a).or_insert(0) += 1;
            }
            let top = counts.values().copied().max().unwrap_or(0);
            let leaders: Vec<usize> = counts.iter().filter(|(_, &c)| c == top).map(|(&a, _)| a).collect();
            if leaders.len() == 1 {
                leaders[0]
            } else {
                alvs[e - 1]
            }
        })
        .collect()
}

/// ALVs of one utterance paired with its oracle accents (one per mora).
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredUtterance {
    pub alvs: Vec<usize>,
    pub oracle: Option<Vec<Accent>>,
}

fn mora_pairs(items: &[ScoredUtterance]) -> Result<Vec<(usize, Accent)>> {
    let mut out = Vec::new();
    for (i, u) in items.iter().enumerate() {
        let oracle = u
            .oracle
            .as_ref()
            .ok_or_else(|| Error::Input(format!("utterance {i} has no oracle accent labels")))?;
        let m = mora_alvs(&u.alvs);
        if m.len() != oracle.len() {
            return Err(Error::Input(format!(
                "utterance {i}: {} morae but {} oracle labels",
                m.len(),
                oracle.len()
            )));
        }
        out.extend(m.into_iter().zip(oracle.iter().copied()));
    }
    Ok(out)
}

/// The H/L labelling of the K classes with the most matches on `calibration`.
/// Ties go to the labelling with the smallest bit pattern.
pub fn optimal_mapping(calibration: &[ScoredUtterance], k: usize) -> Result<ClassMapping> {
    if k == 0 || k > 16 {
        return Err(Error::Config(format!("cannot scan mappings for {k} classes")));
    }
    let pairs = mora_pairs(calibration)?;
    let mut h = vec![0usize; k];
    let mut l = vec![0usize; k];
    for (a, acc) in pairs {
        if a >= k {
            return Err(Error::Shape(format!("ALV {a} outside 0..{k}")));
        }
        match acc {
            Accent::H => h[a] += 1,
            Accent::L => l[a] += 1,
        }
    }
    let mut best = (0u32, 0usize);
    for bits in 0..(1u32 << k) {
        let score: usize = (0..k).map(|i| if bits >> i & 1 == 1 { h[i] } else { l[i] }).sum();
        if bits == 0 || score > best.1 {
            best = (bits, score);
        }
    }
    Ok(ClassMapping::from_bits(best.0, k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub accuracy: f64,
    pub morae: usize,
    pub mapping: ClassMapping,
}

pub enum MappingMode<'a> {
    /// Calibrate on this split, then freeze.
    Optimal { calibration: &'a [ScoredUtterance], k: usize },
    Given(ClassMapping),
}

pub fn alv_oracle_accuracy(test: &[ScoredUtterance], mode: MappingMode<'_>) -> Result<AccuracyResult> {
    let mapping = match mode {
        MappingMode::Optimal { calibration, k } => optimal_mapping(calibration, k)?,
        MappingMode::Given(m) => m,
    };
    let pairs = mora_pairs(test)?;
    let mut correct = 0;
    for &(a, acc) in &pairs {
        if mapping.label(a)? == acc {
            correct += 1;
        }
    }
    Ok(AccuracyResult {
        accuracy: if pairs.is_empty() { 0.0 } else { correct as f64 / pairs.len() as f64 },
        morae: pairs.len(),
        mapping,
    })
}

/// Accents implied by a pitch track: a mora is H when its mean log-F0 exceeds
/// the utterance mean of mora means.
pub fn implied_accents(phoneme_log_f0: &[f64]) -> Vec<Accent> {
    let means: Vec<f64> = mora_groups(phoneme_log_f0.len())
        .into_iter()
        .map(|(s, e)| phoneme_log_f0[s..e].iter().sum::<f64>() / (e - s) as f64)
        .collect();
    if means.is_empty() {
        return Vec::new();
    }
    let avg = means.iter().sum::<f64>() / means.len() as f64;
    means.into_iter().map(|m| if m > avg { Accent::H } else { Accent::L }).collect()
}

/// Mean log-F0 (column 0) of the voiced frames of each phoneme; `None` when a
/// phoneme has no voiced frame.
pub fn phoneme_log_f0(frames: &Mat, alignment: &Alignment) -> Result<Vec<Option<f64>>> {
    alignment
        .spans
        .iter()
        .map(|s| {
            if s.end > frames.rows {
                return Err(Error::Alignment(format!("span {}..{} beyond {} frames", s.start, s.end, frames.rows)));
            }
            let voiced: Vec<f64> = (s.start..s.end).map(|t| frames.get(t, 0)).filter(|&v| v > 0.0).collect();
            Ok((!voiced.is_empty()).then(|| voiced.iter().sum::<f64>() / voiced.len() as f64))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: usize,
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogF0Report {
    pub classes: Vec<ClassStats>,
    pub excluded_unvoiced: usize,
    /// Nonempty classes sorted by increasing mean.
    pub ordering: Vec<usize>,
    pub increasing_exists: bool,
    pub min_adjacent_gap: Option<f64>,
    #[serde(skip)]
    pub points: Vec<(usize, f64)>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Buckets phoneme-mean log-F0 values by ALV class.
pub fn logf0_by_alv(items: &[(Vec<Option<f64>>, Vec<usize>)], k: usize) -> Result<LogF0Report> {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut points = Vec::new();
    let mut excluded = 0;
    for (f0, alvs) in items {
        if f0.len() != alvs.len() {
            return Err(Error::Shape(format!("{} pitch values for {} ALVs", f0.len(), alvs.len())));
        }
        for (v, &a) in f0.iter().zip(alvs) {
            if a >= k {
                return Err(Error::Shape(format!("ALV {a} outside 0..{k}")));
            }
            match v {
                Some(v) => {
                    buckets[a].push(*v);
                    points.push((a, *v));
                }
                None => excluded += 1,
            }
        }
    }
    let mut classes = Vec::with_capacity(k);
    for (c, b) in buckets.iter_mut().enumerate() {
        b.sort_by(|x, y| x.total_cmp(y));
        if b.is_empty() {
            classes.push(ClassStats {
                class: c,
                count: 0,
                mean: None,
                std: None,
                q1: None,
                median: None,
                q3: None,
            });
            continue;
        }
        let n = b.len() as f64;
        let mean = b.iter().sum::<f64>() / n;
        let var = b.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        classes.push(ClassStats {
            class: c,
            count: b.len(),
            mean: Some(mean),
            std: Some(var.sqrt()),
            q1: Some(quantile(b, 0.25)),
            median: Some(quantile(b, 0.5)),
            q3: Some(quantile(b, 0.75)),
        });
    }
    let (ordering, increasing_exists, min_adjacent_gap) = class_ordering(
        &classes.iter().map(|c| c.mean).collect::<Vec<_>>(),
    );
    Ok(LogF0Report {
        classes,
        excluded_unvoiced: excluded,
        ordering,
        increasing_exists,
        min_adjacent_gap,
        points,
    })
}

/// Sort defined means; an increasing permutation exists iff all are distinct.
pub fn class_ordering(means: &[Option<f64>]) -> (Vec<usize>, bool, Option<f64>) {
    let mut defined: Vec<(usize, f64)> = means.iter().enumerate().filter_map(|(i, m)| m.map(|m| (i, m))).collect();
    defined.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let gap = defined.windows(2).map(|w| w[1].1 - w[0].1).reduce(f64::min);
    let exists = !defined.is_empty() && gap.map_or(true, |g| g > 0.0);
    (defined.iter().map(|d| d.0).collect(), exists, gap)
}

impl LogF0Report {
    pub fn write_points_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("alv_class,log_f0\n");
        for (c, v) in &self.points {
            s.push_str(&format!("{c},{v}\n"));
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn write_stats_tsv(&self, path: &Path) -> Result<()> {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let mut s = String::from("alv_class\tcount\tmean\tstd\tq1\tmedian\tq3\n");
        for c in &self.classes {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                c.class,
                c.count,
                f(c.mean),
                f(c.std),
                f(c.q1),
                f(c.median),
                f(c.q3)
            ));
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Acoustic frames with the per-phoneme durations that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct AcousticSample {
    pub frames: Mat,
    pub durations: Vec<usize>,
}

pub trait SpeakerEmbedder {
    fn embed(&self, sample: &AcousticSample) -> Result<Vec<f64>>;
}

/// (mean log-F0, std log-F0, mean frames per phoneme, std frames per phoneme).
#[derive(Clone, Copy, Debug, Default)]
pub struct DeskEmbedder;

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

impl SpeakerEmbedder for DeskEmbedder {
    fn embed(&self, sample: &AcousticSample) -> Result<Vec<f64>> {
        let f0: Vec<f64> = (0..sample.frames.rows)
            .map(|t| sample.frames.get(t, 0))
            .filter(|&v| v > 0.0)
            .collect();
        if f0.is_empty() || sample.durations.is_empty() {
            return Err(Error::Input("speaker embedding needs voiced frames and durations".into()));
        }
        let (fm, fs) = mean_std(&f0);
        let d: Vec<f64> = sample.durations.iter().map(|&d| d as f64).collect();
        let (dm, ds) = mean_std(&d);
        Ok(vec![fm, fs, dm, ds])
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("embedding widths {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity("zero-norm embedding".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine between the synthetic embedding and the mean reference embedding.
pub fn speaker_similarity_embeddings(synth: &[f64], references: &[Vec<f64>]) -> Result<f64> {
    let first = references
        .first()
        .ok_or_else(|| Error::Input("empty reference set".into()))?;
    let mut mean = vec![0.0; first.len()];
    for r in references {
        if r.len() != mean.len() {
            return Err(Error::Shape("reference embeddings differ in width".into()));
        }
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= references.len() as f64);
    cosine(synth, &mean)
}

pub fn speaker_similarity(
    synth: &AcousticSample,
    references: &[AcousticSample],
    embedder: &dyn SpeakerEmbedder,
) -> Result<f64> {
    let refs: Vec<Vec<f64>> = references.iter().map(|r| embedder.embed(r)).collect::<Result<_>>()?;
    speaker_similarity_embeddings(&embedder.embed(synth)?, &refs)
}

pub const BLEU_FLOOR: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus-level BLEU-4. Orders with no candidate n-grams at all are left out
/// of the geometric mean; zero matches elsewhere are floored at 1e-9.
pub fn corpus_bleu4(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Shape("one reference set per candidate is required".into()));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let mut c_len = 0usize;
    let mut r_len = 0usize;
    for (cand, refs) in candidates.iter().zip(references) {
        if cand.is_empty() {
            return Err(Error::Input("empty candidate".into()));
        }
        if refs.is_empty() {
            return Err(Error::Input("empty reference set".into()));
        }
        c_len += cand.len();
        r_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .expect("nonempty");
        for n in 1..=4 {
            let cc = ngram_counts(cand, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in cc {
                matched[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..4 {
        if total[n] == 0 {
            continue;
        }
        let p = (matched[n] as f64 / total[n] as f64).max(BLEU_FLOOR);
        log_sum += p.ln();
        orders += 1;
    }
    let bp = if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    Ok(bp * (log_sum / orders as f64).exp())
}

pub fn bleu4(candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
    corpus_bleu4(&[candidate.to_vec()], &[references.to_vec()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use Accent::{H, L};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn mora_majority_with_vowel_tie_break() {
        assert_eq!(mora_alvs(&[1, 1, 2, 3, 0, 0]), vec![1, 3, 0]);
        assert_eq!(mora_alvs(&[]), Vec::<usize>::new());
    }

    #[test]
    fn perfect_under_some_mapping() {
        let u = ScoredUtterance {
            alvs: vec![2, 2, 0, 0, 2, 2, 1, 1],
            oracle: Some(vec![H, L, H, L]),
        };
        let r = alv_oracle_accuracy(&[u.clone()], MappingMode::Optimal { calibration: &[u], k: 4 }).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.mapping.label(2).unwrap(), H);
        assert_eq!(r.mapping.label(0).unwrap(), L);
    }

    #[test]
    fn hand_built_four_mora_case() {
        // Mora ALVs [0, 1, 1, 2] vs oracle [H, H, L, L]: best mapping gets 3 of 4.
        let u = ScoredUtterance {
            alvs: vec![0, 0, 1, 1, 1, 1, 2, 2],
            oracle: Some(vec![H, H, L, L]),
        };
        let r = alv_oracle_accuracy(&[u.clone()], MappingMode::Optimal { calibration: &[u.clone()], k: 4 }).unwrap();
        assert_eq!(r.accuracy, 0.75);
        let given = ClassMapping(vec![L, L, L, L]);
        let r = alv_oracle_accuracy(&[u], MappingMode::Given(given)).unwrap();
        assert_eq!(r.accuracy, 0.5);
    }

    #[test]
    fn missing_oracle_is_an_input_error() {
        let u = ScoredUtterance {
            alvs: vec![0, 0],
            oracle: None,
        };
        assert!(matches!(
            alv_oracle_accuracy(&[u], MappingMode::Given(ClassMapping(vec![H; 4]))),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn random_alvs_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let make = |rng: &mut ChaCha8Rng, n: usize| -> Vec<ScoredUtterance> {
            (0..n)
                .map(|_| ScoredUtterance {
                    alvs: (0..20).map(|_| rng.gen_range(0..4)).collect(),
                    oracle: Some((0..10).map(|_| if rng.gen_bool(0.5) { H } else { L }).collect()),
                })
                .collect()
        };
        let cal = make(&mut rng, 100);
        let test = make(&mut rng, 1000);
        let r = alv_oracle_accuracy(&test, MappingMode::Optimal { calibration: &cal, k: 4 }).unwrap();
        assert_eq!(r.morae, 10_000);
        assert!((r.accuracy - 0.5).abs() <= 0.05, "{}", r.accuracy);
    }

    proptest! {
        #[test]
        fn optimal_accuracy_is_permutation_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let items: Vec<ScoredUtterance> = (0..8)
                .map(|_| ScoredUtterance {
                    alvs: (0..8).map(|_| rng.gen_range(0..4)).collect(),
                    oracle: Some((0..4).map(|_| if rng.gen_bool(0.5) { H } else { L }).collect()),
                })
                .collect();
            let perm = {
                let mut p = vec![0usize, 1, 2, 3];
                use rand::seq::SliceRandom;
                p.shuffle(&mut rng);
                p
            };
            let permuted: Vec<ScoredUtterance> = items
                .iter()
                .map(|u| ScoredUtterance { alvs: u.alvs.iter().map(|&a| perm[a]).collect(), oracle: u.oracle.clone() })
                .collect();
            let a = alv_oracle_accuracy(&items, MappingMode::Optimal { calibration: &items, k: 4 }).unwrap();
            let b = alv_oracle_accuracy(&permuted, MappingMode::Optimal { calibration: &permuted, k: 4 }).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
        }
    }

    #[test]
    fn logf0_single_class_and_constants() {
        let items = vec![(vec![Some(5.0), Some(6.0), None], vec![1, 1, 1])];
        let r = logf0_by_alv(&items, 4).unwrap();
        assert_eq!(r.classes[1].count, 2);
        assert_eq!(r.classes[1].mean, Some(5.5));
        assert_eq!(r.excluded_unvoiced, 1);
        assert_eq!(r.ordering, vec![1]);
        let items = vec![(vec![Some(5.1), Some(5.6), Some(5.1), Some(5.6)], vec![3, 0, 3, 0])];
        let r = logf0_by_alv(&items, 4).unwrap();
        assert_eq!(r.classes[3].mean, Some(5.1));
        assert_eq!(r.classes[0].mean, Some(5.6));
        assert!(r.increasing_exists);
        assert_eq!(r.ordering, vec![3, 0]);
        assert!((r.min_adjacent_gap.unwrap() - 0.5).abs() < 1e-12);
        let total: usize = r.classes.iter().map(|c| c.count).sum();
        assert_eq!(total + r.excluded_unvoiced, 4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("points.csv");
        r.write_points_csv(&p).unwrap();
        let s = fs::read_to_string(&p).unwrap();
        assert!(s.starts_with("alv_class,log_f0\n3,5.1\n"));
        r.write_stats_tsv(&dir.path().join("stats.tsv")).unwrap();
    }

    #[test]
    fn equal_means_have_no_strict_ordering() {
        let (_, exists, gap) = class_ordering(&[Some(1.0), None, Some(1.0)]);
        assert!(!exists);
        assert_eq!(gap, Some(0.0));
    }

    #[test]
    fn quartiles_interpolate() {
        let items = vec![(vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)], vec![0, 0, 0, 0])];
        let c = &logf0_by_alv(&items, 1).unwrap().classes[0];
        assert_eq!(c.q1, Some(1.75));
        assert_eq!(c.median, Some(2.5));
        assert_eq!(c.q3, Some(3.25));
    }

    #[test]
    fn implied_accents_follow_mora_means() {
        assert_eq!(implied_accents(&[5.0, 5.0, 5.5, 5.5, 5.1, 5.1]), vec![L, H, L]);
    }

    fn sample(f0: f64, d: &[usize]) -> AcousticSample {
        let t: usize = d.iter().sum();
        AcousticSample {
            frames: Mat::from_vec(t, 2, (0..t).flat_map(|i| [f0 + 0.01 * i as f64, 0.0]).collect()),
            durations: d.to_vec(),
        }
    }

    #[test]
    fn similarity_examples() {
        let s = sample(5.0, &[3, 5, 4]);
        let r = speaker_similarity(&s, &[s.clone()], &DeskEmbedder).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let e = DeskEmbedder.embed(&s).unwrap();
        let neg: Vec<f64> = e.iter().map(|x| -x).collect();
        assert!((speaker_similarity_embeddings(&neg, &[e.clone()]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            speaker_similarity_embeddings(&[0.0; 4], &[e.clone()]),
            Err(Error::UndefinedSimilarity(_))
        ));
        assert!(matches!(speaker_similarity_embeddings(&e, &[]), Err(Error::Input(_))));
    }

    proptest! {
        #[test]
        fn similarity_matches_dot_norm_oracle(seed in any::<u64>(), scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let refs: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let mean: Vec<f64> = (0..5).map(|i| refs.iter().map(|r| r[i]).sum::<f64>() / 3.0).collect();
            let dot: f64 = a.iter().zip(&mean).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            let got = speaker_similarity_embeddings(&a, &refs).unwrap();
            prop_assert!((got - dot / (na * nm)).abs() < 1e-9);
            let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
            prop_assert!((speaker_similarity_embeddings(&scaled, &refs).unwrap() - got).abs() < 1e-9);
        }
    }

    #[test]
    fn bleu_examples() {
        let c = toks("a b c d e");
        assert!((bleu4(&c, &[c.clone()]).unwrap() - 1.0).abs() < 1e-12);
        let r = toks("a b c d f");
        assert!((bleu4(&c, &[r]).unwrap() - 0.66874).abs() < 1e-4);
        assert!(bleu4(&c, &[toks("v w x y z")]).unwrap() < 1e-6);
        assert!(matches!(bleu4(&c, &[]), Err(Error::Input(_))));
        assert!(matches!(bleu4(&[], &[c.clone()]), Err(Error::Input(_))));
        let short = toks("a b");
        assert!((bleu4(&short, &[short.clone()]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_brevity_penalty() {
        let c = toks("a b c d");
        let r = toks("a b c d e f g h");
        let want = (1.0 - 8.0 / 4.0f64).exp();
        assert!((bleu4(&c, &[r]).unwrap() - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bleu_with_candidate_among_references(c in proptest::collection::vec("[a-d]", 1..12), r in proptest::collection::vec("[a-d]", 1..12)) {
            let b = bleu4(&c, &[r, c.clone()]).unwrap();
            prop_assert!((b - 1.0).abs() < 1e-12);
        }
    }
}

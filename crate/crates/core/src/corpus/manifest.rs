//! Tab-separated utterance manifests.
//!
//! ```text
//! utt_id  speaker_id  dialect  graphemes  phonemes  alignment  feature_path  [oracle_accent]
//! ```
//!
//! Graphemes and phonemes are space-separated; the alignment is a
//! `;`-separated list of `phoneme:start:end` triples. Relative feature paths
//! are resolved against the manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{format_accents, parse_accents, Alignment, DialectId, FeatureRef, Span, Utterance};
use crate::error::{Error, Result};

pub fn load_manifest(path: &Path) -> Result<Vec<Utterance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let utt = parse_line(line, base).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        })?;
        utt.validate().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}:{}: {m}", path.display(), i + 1)),
            other => other,
        })?;
        out.push(utt);
    }
    Ok(out)
}

pub fn save_manifest(utterances: &[Utterance], path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut buf = Vec::new();
    for u in utterances {
        let feature = match &u.feature {
            FeatureRef::Path(p) => p.strip_prefix(base).unwrap_or(p).to_path_buf(),
            FeatureRef::Inline(_) => {
                return Err(Error::Contract(format!(
                    "utterance {} has inline features; write them to disk before saving a manifest",
                    u.utt_id
                )))
            }
        };
        let alignment = u
            .alignment
            .spans
            .iter()
            .map(|s| format!("{}:{}:{}", s.phoneme, s.start, s.end))
            .collect::<Vec<_>>()
            .join(";");
        let mut fields = vec![
            u.utt_id.clone(),
            u.speaker_id.clone(),
            u.dialect.to_string(),
            u.graphemes.join(" "),
            u.phonemes.join(" "),
            alignment,
            feature.to_string_lossy().into_owned(),
        ];
        if let Some(acc) = &u.oracle_accent {
            fields.push(format_accents(acc));
        }
        writeln!(buf, "{}", fields.join("\t")).expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn parse_line(line: &str, base: &Path) -> std::result::Result<Utterance, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 7 && fields.len() != 8 {
        return Err(format!("expected 7 or 8 tab-separated fields, found {}", fields.len()));
    }
    let nonempty = |i: usize, name: &str| -> std::result::Result<&str, String> {
        let f = fields[i].trim();
        if f.is_empty() {
            Err(format!("empty {name} field"))
        } else {
            Ok(f)
        }
    };
    let utt_id = nonempty(0, "utt_id")?.to_string();
    let speaker_id = nonempty(1, "speaker_id")?.to_string();
    let dialect = DialectId::new(nonempty(2, "dialect")?).map_err(|e| e.to_string())?;
    let graphemes: Vec<String> = fields[3].split_whitespace().map(str::to_string).collect();
    let phonemes: Vec<String> = fields[4].split_whitespace().map(str::to_string).collect();
    let alignment = parse_alignment(fields[5])?;
    let feature_field = nonempty(6, "feature_path")?;
    let fp = PathBuf::from(feature_field);
    let feature = FeatureRef::Path(if fp.is_absolute() { fp } else { base.join(fp) });
    let oracle_accent = match fields.get(7).map(|s| s.trim()) {
        Some(s) if !s.is_empty() => Some(parse_accents(s).map_err(|e| e.to_string())?),
        _ => None,
    };
    Ok(Utterance {
        utt_id,
        speaker_id,
        dialect,
        graphemes,
        phonemes,
        alignment,
        feature,
        oracle_accent,
    })
}

fn parse_alignment(field: &str) -> std::result::Result<Alignment, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Alignment::default());
    }
    let mut spans = Vec::new();
    for triple in field.split(';') {
        let parts: Vec<&str> = triple.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("alignment entry `{triple}` is not phoneme:start:end"));
        }
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("bad integer `{s}` in alignment"));
        spans.push(Span {
            phoneme: num(parts[0])?,
            start: num(parts[1])?,
            end: num(parts[2])?,
        });
    }
    Ok(Alignment { spans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Accent;

    fn utt(id: &str, feature: &Path) -> Utterance {
        Utterance {
            utt_id: id.into(),
            speaker_id: "spkA".into(),
            dialect: DialectId::new("DLA").unwrap(),
            graphemes: vec!["ame".into()],
            phonemes: vec!["a".into(), "m".into(), "e".into()],
            alignment: Alignment::from_durations(&[2, 1, 3]).unwrap(),
            feature: FeatureRef::Path(feature.to_path_buf()),
            oracle_accent: Some(vec![Accent::L, Accent::H]),
        }
    }

    #[test]
    fn round_trip_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = vec![utt("u1", &dir.path().join("u1.alvf")), utt("u2", &dir.path().join("feats/u2.alvf"))];
        let path = dir.path().join("manifest.tsv");
        save_manifest(&m, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\tu1.alvf\tLH"));
        assert_eq!(load_manifest(&path).unwrap(), m);
    }

    #[test]
    fn overlapping_spans_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        fs::write(&path, "u1\ts\tDLA\tame\ta m e\t0:0:2;1:1:3;2:3:4\tf.alvf\n").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        fs::write(
            &path,
            "u1\ts\tDLA\tame\ta m e\t0:0:2;1:2:3;2:3:4\tf.alvf\nu2\ts\tDLA\tbroken\n",
        )
        .unwrap();
        match load_manifest(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn line_count_matches_utterance_count() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dir = tempfile::tempdir().unwrap();
        for _ in 0..5 {
            let n = rng.gen_range(0..40);
            let m: Vec<_> = (0..n)
                .map(|i| utt(&format!("u{i}"), &dir.path().join(format!("{i}.alvf"))))
                .collect();
            let path = dir.path().join("m.tsv");
            save_manifest(&m, &path).unwrap();
            assert_eq!(load_manifest(&path).unwrap().len(), n);
        }
    }

    #[test]
    fn inline_features_cannot_be_saved() {
        let dir = tempfile::tempdir().unwrap();
        let mut u = utt("u1", Path::new("x"));
        u.feature = FeatureRef::Inline(std::sync::Arc::new(crate::nn::Mat::zeros(1, 1)));
        assert!(matches!(save_manifest(&[u], &dir.path().join("m.tsv")), Err(Error::Contract(_))));
    }
}

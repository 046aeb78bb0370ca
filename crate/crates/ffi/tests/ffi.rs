use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use alvtts::config::RunConfig;
use alvtts::pipeline::Pipeline;
use alvtts_ffi::*;

fn tiny_config(dir: &Path) -> PathBuf {
    let mut c = RunConfig::compact();
    c.corpus.sentence_count = 40;
    c.backbone.width = 16;
    c.backbone.ff_width = 32;
    c.backbone.predictor_width = 16;
    c.training.stage1.steps = 3;
    c.training.stage1.batch_size = 2;
    c.paths.work_dir = "work".into();
    let path = dir.join("config.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    path
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { alvtts_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn open(config: &Path) -> *mut AlvttsPipeline {
    let mut h = ptr::null_mut();
    let p = cstr(config.to_str().unwrap());
    assert_eq!(unsafe { alvtts_pipeline_open(p.as_ptr(), &mut h) }, AlvttsStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn missing_config_file_is_a_config_error() {
    let mut h = ptr::null_mut();
    let p = cstr("/nonexistent/alvtts/config.toml");
    let s = unsafe { alvtts_pipeline_open(p.as_ptr(), &mut h) };
    assert_ne!(s, AlvttsStatus::Ok);
    assert!(h.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn extraction_and_synthesis_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let h = open(&config);

    // No corpus yet: upstream artifacts are missing.
    let utt = cstr("utt00000");
    let mut len = 0usize;
    let s = unsafe { alvtts_extract_alv(h, utt.as_ptr(), ptr::null_mut(), 0, &mut len) };
    assert_eq!(s, AlvttsStatus::Config);
    assert!(last_error().contains("gen-corpus"), "{}", last_error());

    let pipeline = Pipeline::new(RunConfig::load(&config).unwrap()).unwrap();
    pipeline.gen_corpus().unwrap();
    pipeline.train_stage1().unwrap();

    let s = unsafe { alvtts_extract_alv(h, utt.as_ptr(), ptr::null_mut(), 0, &mut len) };
    assert_eq!(s, AlvttsStatus::BufferTooSmall);
    assert!(len > 0);
    let mut alvs = vec![u32::MAX; len];
    let s = unsafe { alvtts_extract_alv(h, utt.as_ptr(), alvs.as_mut_ptr(), alvs.len(), &mut len) };
    assert_eq!(s, AlvttsStatus::Ok);
    let mut k = 0usize;
    assert_eq!(unsafe { alvtts_codebook_size(h, &mut k) }, AlvttsStatus::Ok);
    assert!(alvs.iter().all(|&a| (a as usize) < k));
    let expected = pipeline.extract_alv(&["utt00000".to_string()]).unwrap();
    let expected: Vec<u32> = expected[0].1 .0.iter().map(|&a| a as u32).collect();
    assert_eq!(alvs, expected);

    let corpus = pipeline.corpus().unwrap();
    let u = &corpus.utterances[0];
    let words = cstr(&u.graphemes.join(" "));
    let speaker = cstr(&u.speaker_id);
    let dialect = cstr(u.dialect.as_str());
    let out = dir.path().join("syn.alvf");
    let out_c = cstr(out.to_str().unwrap());
    let mut frames = 0usize;
    let s = unsafe {
        alvtts_synthesize(
            h,
            words.as_ptr(),
            speaker.as_ptr(),
            dialect.as_ptr(),
            AlvttsMode::ReferenceAlv,
            utt.as_ptr(),
            out_c.as_ptr(),
            ptr::null(),
            &mut frames,
        )
    };
    assert_eq!(s, AlvttsStatus::Ok, "{}", last_error());
    assert!(frames > 0);
    assert!(out.exists());

    // Predicted mode needs a stage-2 checkpoint.
    let s = unsafe {
        alvtts_synthesize(
            h,
            words.as_ptr(),
            speaker.as_ptr(),
            dialect.as_ptr(),
            AlvttsMode::PredictedAlv,
            ptr::null(),
            out_c.as_ptr(),
            ptr::null(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, AlvttsStatus::Config);
    assert!(last_error().contains("train-stage2"), "{}", last_error());

    let bad = cstr("nosuchspeaker");
    let s = unsafe {
        alvtts_synthesize(
            h,
            words.as_ptr(),
            bad.as_ptr(),
            dialect.as_ptr(),
            AlvttsMode::NoAlv,
            ptr::null(),
            out_c.as_ptr(),
            ptr::null(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, AlvttsStatus::Input);

    unsafe { alvtts_pipeline_free(h) };
}

#[test]
fn generated_header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/alvtts.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "alvtts_pipeline_open",
        "alvtts_pipeline_free",
        "alvtts_extract_alv",
        "alvtts_synthesize",
        "alvtts_evaluate",
        "alvtts_last_error",
        "ALVTTS_STATUS_BUFFER_TOO_SMALL",
        "typedef struct AlvttsPipeline AlvttsPipeline",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Syntax-check with the system C compiler when one is installed.
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

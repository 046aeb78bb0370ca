//! C ABI over the alvtts pipeline.
//!
//! Every function returns an [`AlvttsStatus`]. On failure the message is kept
//! per thread and can be read with [`alvtts_last_error`]. Handles are opaque
//! and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use alvtts::config::RunConfig;
use alvtts::pipeline::{Pipeline, SynthMode, SynthRequest};
use alvtts::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlvttsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 3,
    /// Bad configuration or a missing upstream artifact.
    Config = 10,
    /// Invalid input data (shape, vocabulary, alignment, contract).
    Input = 11,
    /// Non-finite values or diverged training.
    Numeric = 12,
    /// File system failure.
    Io = 13,
    /// Corrupt, mismatched or stale checkpoint.
    Checkpoint = 14,
    /// Any other library error.
    Internal = 15,
    /// A panic was caught at the boundary.
    Panic = 16,
}

/// Synthesis conditioning.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlvttsMode {
    PredictedAlv = 0,
    ReferenceAlv = 1,
    NoAlv = 2,
}

/// Opaque pipeline handle bound to one configuration file.
pub struct AlvttsPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AlvttsStatus {
    match e {
        Error::Checkpoint(_) => AlvttsStatus::Checkpoint,
        Error::Io { .. } => AlvttsStatus::Io,
        _ => match e.exit_code() {
            2 => AlvttsStatus::Config,
            3 => AlvttsStatus::Input,
            4 => AlvttsStatus::Numeric,
            _ => AlvttsStatus::Internal,
        },
    }
}

struct Fail(AlvttsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AlvttsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AlvttsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            AlvttsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(AlvttsStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AlvttsStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, name).map(Some)
    }
}

unsafe fn pipeline<'a>(p: *const AlvttsPipeline) -> Result<&'a Pipeline, Fail> {
    p.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| Fail(AlvttsStatus::NullArgument, "`pipeline` is null".into()))
}

unsafe fn write_u32s(values: &[u32], out: *mut u32, capacity: usize, out_len: *mut usize) -> Result<(), Fail> {
    if out_len.is_null() {
        return Err(Fail(AlvttsStatus::NullArgument, "`out_len` is null".into()));
    }
    *out_len = values.len();
    if values.len() > capacity {
        return Err(Fail(
            AlvttsStatus::BufferTooSmall,
            format!("need {} slots, got {capacity}", values.len()),
        ));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(Fail(AlvttsStatus::NullArgument, "`out` is null".into()));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn alvtts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn alvtts_status_string(status: AlvttsStatus) -> *const c_char {
    let s: &'static str = match status {
        AlvttsStatus::Ok => "ok\0",
        AlvttsStatus::NullArgument => "null argument\0",
        AlvttsStatus::InvalidUtf8 => "invalid UTF-8\0",
        AlvttsStatus::BufferTooSmall => "buffer too small\0",
        AlvttsStatus::Config => "configuration error\0",
        AlvttsStatus::Input => "input error\0",
        AlvttsStatus::Numeric => "numeric error\0",
        AlvttsStatus::Io => "I/O error\0",
        AlvttsStatus::Checkpoint => "checkpoint error\0",
        AlvttsStatus::Internal => "internal error\0",
        AlvttsStatus::Panic => "panic\0",
    };
    s.as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `capacity`). Returns the full message length including the
/// terminator, or 0 when no error was recorded.
///
/// # Safety
/// `buf` must be valid for `capacity` bytes, or null with `capacity` 0.
#[no_mangle]
pub unsafe extern "C" fn alvtts_last_error(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && capacity > 0 {
                let n = bytes.len().min(capacity);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Loads a TOML configuration and opens a pipeline on it.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alvtts_pipeline_open(config_path: *const c_char, out: *mut *mut AlvttsPipeline) -> AlvttsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(AlvttsStatus::NullArgument, "`out` is null".into()));
        }
        *out = ptr::null_mut();
        let path = PathBuf::from(text(config_path, "config_path")?);
        let inner = Pipeline::new(RunConfig::load(&path)?)?;
        *out = Box::into_raw(Box::new(AlvttsPipeline { inner }));
        Ok(())
    })
}

/// Releases a pipeline handle. Null is ignored.
///
/// # Safety
/// `pipeline` must come from `alvtts_pipeline_open` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn alvtts_pipeline_free(pipeline: *mut AlvttsPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Number of ALV codes (codebook size) of the configuration.
///
/// # Safety
/// `pipeline` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alvtts_codebook_size(pipeline: *const AlvttsPipeline, out: *mut usize) -> AlvttsStatus {
    guard(|| {
        let p = self::pipeline(pipeline)?;
        if out.is_null() {
            return Err(Fail(AlvttsStatus::NullArgument, "`out` is null".into()));
        }
        *out = p.config.quantizer.codes;
        Ok(())
    })
}

/// Extracts the phoneme-level ALVs of one corpus utterance.
///
/// `out_len` always receives the sequence length; when it exceeds
/// `capacity` the call fails with `BUFFER_TOO_SMALL` and nothing is copied.
///
/// # Safety
/// `pipeline` must be a live handle, `utt_id` NUL-terminated, `out` valid
/// for `capacity` elements and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn alvtts_extract_alv(
    pipeline: *const AlvttsPipeline,
    utt_id: *const c_char,
    out: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> AlvttsStatus {
    guard(|| {
        let p = self::pipeline(pipeline)?;
        let id = text(utt_id, "utt_id")?.to_string();
        let (_, alvs) = p.extract_alv(&[id])?.remove(0);
        let values: Vec<u32> = alvs.0.iter().map(|&a| a as u32).collect();
        write_u32s(&values, out, capacity, out_len)
    })
}

/// Synthesises space-separated `words` and writes an ALVF feature file to
/// `out_path` (ALVs go to `<out_path>.json`). `reference` names the corpus
/// utterance for `REFERENCE_ALV` mode and is ignored otherwise; `wav_path`
/// may be null. The realised frame count is written to `out_frames`.
///
/// # Safety
/// String arguments must be NUL-terminated (or null where allowed) and
/// `out_frames` writable or null.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn alvtts_synthesize(
    pipeline: *const AlvttsPipeline,
    words: *const c_char,
    speaker: *const c_char,
    dialect: *const c_char,
    mode: AlvttsMode,
    reference: *const c_char,
    out_path: *const c_char,
    wav_path: *const c_char,
    out_frames: *mut usize,
) -> AlvttsStatus {
    guard(|| {
        let p = self::pipeline(pipeline)?;
        let mode = match mode {
            AlvttsMode::PredictedAlv => SynthMode::PredictedAlv,
            AlvttsMode::NoAlv => SynthMode::NoAlv,
            AlvttsMode::ReferenceAlv => match opt_text(reference, "reference")? {
                Some(r) => SynthMode::ReferenceAlv(r.to_string()),
                None => return Err(Fail(AlvttsStatus::NullArgument, "reference mode needs `reference`".into())),
            },
        };
        let req = SynthRequest {
            words: text(words, "words")?.split_whitespace().map(str::to_string).collect(),
            speaker: text(speaker, "speaker")?.to_string(),
            dialect: text(dialect, "dialect")?.to_string(),
            mode,
            out: PathBuf::from(text(out_path, "out_path")?),
            wav: opt_text(wav_path, "wav_path")?.map(PathBuf::from),
        };
        let syn = p.synthesize(&req)?;
        if !out_frames.is_null() {
            *out_frames = syn.frames.rows;
        }
        Ok(())
    })
}

/// Runs evaluation and writes the metrics file under the work directory.
///
/// # Safety
/// `pipeline` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn alvtts_evaluate(pipeline: *const AlvttsPipeline) -> AlvttsStatus {
    guard(|| {
        self::pipeline(pipeline)?.evaluate()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { alvtts_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(n > 0);
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_arguments_are_reported() {
        let mut h = ptr::null_mut();
        let s = unsafe { alvtts_pipeline_open(ptr::null(), &mut h) };
        assert_eq!(s, AlvttsStatus::NullArgument);
        assert!(h.is_null());
        assert!(last_error().contains("config_path"));
        assert_eq!(unsafe { alvtts_evaluate(ptr::null()) }, AlvttsStatus::NullArgument);
    }

    #[test]
    fn error_messages_truncate_safely() {
        set_error("abcdefgh".into());
        let mut buf = [1 as c_char; 4];
        let n = unsafe { alvtts_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 9);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
    }

    #[test]
    fn status_mapping_follows_error_classes() {
        assert_eq!(status_of(&Error::Config("x".into())), AlvttsStatus::Config);
        assert_eq!(status_of(&Error::Checkpoint("x".into())), AlvttsStatus::Checkpoint);
        assert_eq!(status_of(&Error::Shape("x".into())), AlvttsStatus::Input);
        assert_eq!(status_of(&Error::Numeric("x".into())), AlvttsStatus::Numeric);
        assert_eq!(status_of(&Error::Format("x".into())), AlvttsStatus::Internal);
    }

    #[test]
    fn panics_do_not_cross_the_boundary() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, AlvttsStatus::Panic);
        assert!(last_error().contains("boom"));
    }

    #[test]
    fn short_buffers_report_required_length() {
        let mut len = 0;
        let mut out = [0u32; 2];
        let r = unsafe { write_u32s(&[1, 2, 3], out.as_mut_ptr(), out.len(), &mut len) };
        assert!(matches!(r, Err(Fail(AlvttsStatus::BufferTooSmall, _))));
        assert_eq!(len, 3);
    }

    #[test]
    fn static_strings_are_terminated() {
        let v = unsafe { CStr::from_ptr(alvtts_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
        let s = unsafe { CStr::from_ptr(alvtts_status_string(AlvttsStatus::BufferTooSmall)) };
        assert_eq!(s.to_str().unwrap(), "buffer too small");
    }
}

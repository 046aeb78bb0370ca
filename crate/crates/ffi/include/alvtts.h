#ifndef ALVTTS_H
#define ALVTTS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Synthesis conditioning.
typedef enum AlvttsMode {
  ALVTTS_MODE_PREDICTED_ALV = 0,
  ALVTTS_MODE_REFERENCE_ALV = 1,
  ALVTTS_MODE_NO_ALV = 2,
} AlvttsMode;

// Result codes.
typedef enum AlvttsStatus {
  ALVTTS_STATUS_OK = 0,
  // A required pointer argument was null.
  ALVTTS_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  ALVTTS_STATUS_INVALID_UTF8 = 2,
  // The output buffer is too small; the required length was written.
  ALVTTS_STATUS_BUFFER_TOO_SMALL = 3,
  // Bad configuration or a missing upstream artifact.
  ALVTTS_STATUS_CONFIG = 10,
  // Invalid input data (shape, vocabulary, alignment, contract).
  ALVTTS_STATUS_INPUT = 11,
  // Non-finite values or diverged training.
  ALVTTS_STATUS_NUMERIC = 12,
  // File system failure.
  ALVTTS_STATUS_IO = 13,
  // Corrupt, mismatched or stale checkpoint.
  ALVTTS_STATUS_CHECKPOINT = 14,
  // Any other library error.
  ALVTTS_STATUS_INTERNAL = 15,
  // A panic was caught at the boundary.
  ALVTTS_STATUS_PANIC = 16,
} AlvttsStatus;

// Opaque pipeline handle bound to one configuration file.
typedef struct AlvttsPipeline AlvttsPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *alvtts_version(void);

// Static description of a status code.
const char *alvtts_status_string(enum AlvttsStatus status);

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `capacity`). Returns the full message length including the
// terminator, or 0 when no error was recorded.
//
// # Safety
// `buf` must be valid for `capacity` bytes, or null with `capacity` 0.
size_t alvtts_last_error(char *buf, size_t capacity);

// Loads a TOML configuration and opens a pipeline on it.
//
// # Safety
// `config_path` must be a NUL-terminated string; `out` must be writable.
enum AlvttsStatus alvtts_pipeline_open(const char *config_path, struct AlvttsPipeline **out);

// Releases a pipeline handle. Null is ignored.
//
// # Safety
// `pipeline` must come from `alvtts_pipeline_open` and not be used afterwards.
void alvtts_pipeline_free(struct AlvttsPipeline *pipeline);

// Number of ALV codes (codebook size) of the configuration.
//
// # Safety
// `pipeline` must be a live handle; `out` must be writable.
enum AlvttsStatus alvtts_codebook_size(const struct AlvttsPipeline *pipeline, size_t *out);

// Extracts the phoneme-level ALVs of one corpus utterance.
//
// `out_len` always receives the sequence length; when it exceeds
// `capacity` the call fails with `BUFFER_TOO_SMALL` and nothing is copied.
//
// # Safety
// `pipeline` must be a live handle, `utt_id` NUL-terminated, `out` valid
// for `capacity` elements and `out_len` writable.
enum AlvttsStatus alvtts_extract_alv(const struct AlvttsPipeline *pipeline,
                                     const char *utt_id,
                                     uint32_t *out,
                                     size_t capacity,
                                     size_t *out_len);

// Synthesises space-separated `words` and writes an ALVF feature file to
// `out_path` (ALVs go to `<out_path>.json`). `reference` names the corpus
// utterance for `REFERENCE_ALV` mode and is ignored otherwise; `wav_path`
// may be null. The realised frame count is written to `out_frames`.
//
// # Safety
// String arguments must be NUL-terminated (or null where allowed) and
// `out_frames` writable or null.
enum AlvttsStatus alvtts_synthesize(const struct AlvttsPipeline *pipeline,
                                    const char *words,
                                    const char *speaker,
                                    const char *dialect,
                                    enum AlvttsMode mode,
                                    const char *reference,
                                    const char *out_path,
                                    const char *wav_path,
                                    size_t *out_frames);

// Runs evaluation and writes the metrics file under the work directory.
//
// # Safety
// `pipeline` must be a live handle.
enum AlvttsStatus alvtts_evaluate(const struct AlvttsPipeline *pipeline);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALVTTS_H */

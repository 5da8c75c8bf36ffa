#ifndef NIFUZZ_H
#define NIFUZZ_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Presence-mask bits, as in the container format.
 */
#define NIFUZZ_MASK_EXPLICIT 1

#define NIFUZZ_MASK_STACK 2

#define NIFUZZ_MASK_HEAP 4

/**
 * Input parts. Public is not a secret but shares the accessors.
 */
typedef enum NifuzzPart {
  NIFUZZ_PART_PUBLIC = 0,
  NIFUZZ_PART_EXPLICIT = 1,
  NIFUZZ_PART_STACK = 2,
  NIFUZZ_PART_HEAP = 3,
} NifuzzPart;

typedef enum NifuzzStatus {
  NIFUZZ_STATUS_OK = 0,
  NIFUZZ_STATUS_NULL_POINTER = 1,
  NIFUZZ_STATUS_INVALID_ARGUMENT = 2,
  NIFUZZ_STATUS_FORMAT = 3,
  NIFUZZ_STATUS_CONFIG = 4,
  NIFUZZ_STATUS_TARGET_NOT_FOUND = 5,
  NIFUZZ_STATUS_SPAWN = 6,
  NIFUZZ_STATUS_IO = 7,
  NIFUZZ_STATUS_RESOURCE_LIMIT = 8,
  NIFUZZ_STATUS_PANIC = 9,
  NIFUZZ_STATUS_INTERNAL = 10,
} NifuzzStatus;

/**
 * Opaque running campaign.
 */
typedef struct NifuzzCampaign NifuzzCampaign;

/**
 * Opaque campaign configuration.
 */
typedef struct NifuzzConfig NifuzzConfig;

/**
 * Opaque structured input.
 */
typedef struct NifuzzInput NifuzzInput;

/**
 * Output sink handed to callback targets; valid only during the call.
 */
typedef struct NifuzzIo NifuzzIo;

/**
 * Heap buffer allocated by this library; release with `nifuzz_buffer_free`.
 */
typedef struct NifuzzBuffer {
  uint8_t *data;
  size_t len;
} NifuzzBuffer;

/**
 * Borrowed bytes of one part. `len` is -1 when the part is absent.
 */
typedef struct NifuzzPartView {
  const uint8_t *data;
  int64_t len;
} NifuzzPartView;

typedef struct NifuzzInputView {
  struct NifuzzPartView public_input;
  struct NifuzzPartView explicit_secret;
  struct NifuzzPartView stack_secret;
  struct NifuzzPartView heap_secret;
} NifuzzInputView;

/**
 * A target implemented by the caller. Must be deterministic in its input
 * and write its public output through `io`.
 */
typedef void (*NifuzzTargetFn)(void *user_data,
                               const struct NifuzzInputView *input,
                               struct NifuzzIo *io);

typedef struct NifuzzReport {
  double cmi_bits;
  double capacity_lower_bound_bits;
  uint64_t direct_mapped_explicit;
  uint64_t direct_mapped_stack;
  uint64_t direct_mapped_heap;
  uint64_t violations;
  uint64_t unique_public_inputs;
  uint64_t executions;
  double seconds;
} NifuzzReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *nifuzz_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nifuzz_version(void);

/**
 * # Safety
 * `buf` must come from this library and not have been freed.
 */
void nifuzz_buffer_free(struct NifuzzBuffer buf);

/**
 * New input with the given public part and no secret parts.
 *
 * # Safety
 * `public_data` must point to `public_len` bytes (or be null if zero).
 */
struct NifuzzInput *nifuzz_input_new(const uint8_t *public_data, size_t public_len);

/**
 * # Safety
 * `input` must be null or a live handle from this library.
 */
void nifuzz_input_free(struct NifuzzInput *input);

/**
 * Sets a part's bytes. Stack and heap parts must be non-empty.
 *
 * # Safety
 * `input` must be live; `data` must point to `len` bytes.
 */
enum NifuzzStatus nifuzz_input_set_part(struct NifuzzInput *input,
                                        enum NifuzzPart part,
                                        const uint8_t *data,
                                        size_t len);

/**
 * Removes a secret part. The public part cannot be removed.
 *
 * # Safety
 * `input` must be live.
 */
enum NifuzzStatus nifuzz_input_clear_part(struct NifuzzInput *input, enum NifuzzPart part);

/**
 * Length of a part in bytes, or -1 if absent or `input` is null.
 *
 * # Safety
 * `input` must be null or live.
 */
int64_t nifuzz_input_part_len(const struct NifuzzInput *input, enum NifuzzPart part);

/**
 * Borrowed pointer to a part's bytes, or null if absent. Invalidated by
 * any later mutation or free of `input`.
 *
 * # Safety
 * `input` must be null or live.
 */
const uint8_t *nifuzz_input_part_data(const struct NifuzzInput *input, enum NifuzzPart part);

/**
 * Encodes `input` in the container format.
 *
 * # Safety
 * `input` must be live and `out` writable.
 */
enum NifuzzStatus nifuzz_input_encode(const struct NifuzzInput *input, struct NifuzzBuffer *out);

/**
 * Decodes a container. On success `*out` owns a new input.
 *
 * # Safety
 * `data` must point to `len` bytes and `out` be writable.
 */
enum NifuzzStatus nifuzz_input_decode(const uint8_t *data, size_t len, struct NifuzzInput **out);

/**
 * # Safety
 * `io` must be the handle passed to the running callback.
 */
void nifuzz_io_write_stdout(struct NifuzzIo *io, const uint8_t *data, size_t len);

/**
 * # Safety
 * `io` must be the handle passed to the running callback.
 */
void nifuzz_io_write_stderr(struct NifuzzIo *io, const uint8_t *data, size_t len);

/**
 * Records a hit on coverage edge `edge` (reduced modulo the map size).
 *
 * # Safety
 * `io` must be the handle passed to the running callback.
 */
void nifuzz_io_hit(struct NifuzzIo *io, uint64_t edge);

/**
 * Marks the current execution as crashed.
 *
 * # Safety
 * `io` must be the handle passed to the running callback.
 */
void nifuzz_io_crash(struct NifuzzIo *io);

/**
 * Configuration for a built-in in-process target. Null if unknown.
 *
 * # Safety
 * `name` must be a NUL-terminated string.
 */
struct NifuzzConfig *nifuzz_config_new_builtin(const char *name);

/**
 * Configuration for an instrumented executable.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
struct NifuzzConfig *nifuzz_config_new_subprocess(const char *path);

/**
 * Configuration for a caller-implemented target. `parts_mask` declares the
 * secret parts (`NIFUZZ_MASK_*` bits).
 *
 * # Safety
 * `target` must stay callable, and `user_data` valid, for the lifetime of
 * every campaign created from this configuration.
 */
struct NifuzzConfig *nifuzz_config_new_callback(NifuzzTargetFn target,
                                                void *user_data,
                                                uint8_t parts_mask);

/**
 * # Safety
 * `config` must be null or live.
 */
void nifuzz_config_free(struct NifuzzConfig *config);

/**
 * Time budget in seconds; must be positive.
 *
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_budget_secs(struct NifuzzConfig *config, double value);

/**
 * Stops after this many executions; 0 removes the cap.
 *
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_max_executions(struct NifuzzConfig *config, uint64_t value);

/**
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_rng_seed(struct NifuzzConfig *config, uint64_t value);

/**
 * Non-zero counts one microsecond per execution instead of wall time.
 *
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_logical_clock(struct NifuzzConfig *config, uint8_t value);

/**
 * Non-zero draws public inputs uniformly from those already recorded.
 *
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_force_uniform_public(struct NifuzzConfig *config,
                                                         uint8_t value);

/**
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_min_hits(struct NifuzzConfig *config, uint64_t value);

/**
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_map_size(struct NifuzzConfig *config, size_t value);

/**
 * Execution timeout for subprocess targets.
 *
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_timeout_secs(struct NifuzzConfig *config, double value);

/**
 * Declared secret parts as `NIFUZZ_MASK_*` bits.
 *
 * # Safety
 * `config` must be live.
 */
enum NifuzzStatus nifuzz_config_set_parts(struct NifuzzConfig *config, uint8_t value);

/**
 * Directory receiving stats, report, snapshot and witnesses; null clears it.
 *
 * # Safety
 * `config` must be live; `dir` null or NUL-terminated.
 */
enum NifuzzStatus nifuzz_config_set_out_dir(struct NifuzzConfig *config, const char *dir);

/**
 * Directory of container-format seed files; null clears it.
 *
 * # Safety
 * `config` must be live; `dir` null or NUL-terminated.
 */
enum NifuzzStatus nifuzz_config_set_seeds_dir(struct NifuzzConfig *config, const char *dir);

/**
 * Adds a copy of `seed` to the initial corpus.
 *
 * # Safety
 * `config` and `seed` must be live.
 */
enum NifuzzStatus nifuzz_config_add_seed(struct NifuzzConfig *config,
                                         const struct NifuzzInput *seed);

/**
 * Validates `config` and opens the target. The configuration is copied.
 *
 * # Safety
 * `config` must be live and `out` writable.
 */
enum NifuzzStatus nifuzz_campaign_new(const struct NifuzzConfig *config,
                                      struct NifuzzCampaign **out);

/**
 * # Safety
 * `campaign` must be null or live.
 */
void nifuzz_campaign_free(struct NifuzzCampaign *campaign);

/**
 * Runs the campaign to completion, writes artifacts if an output
 * directory was set, and stores the final metrics in `*out` (may be null).
 *
 * # Safety
 * `campaign` must be live; `out` null or writable.
 */
enum NifuzzStatus nifuzz_campaign_run(struct NifuzzCampaign *campaign, struct NifuzzReport *out);

/**
 * Current metrics of a campaign.
 *
 * # Safety
 * `campaign` must be live and `out` writable.
 */
enum NifuzzStatus nifuzz_campaign_report(const struct NifuzzCampaign *campaign,
                                         struct NifuzzReport *out);

/**
 * Current metrics as a JSON document (QifReport field names).
 *
 * # Safety
 * `campaign` must be live and `out` writable.
 */
enum NifuzzStatus nifuzz_campaign_report_json(const struct NifuzzCampaign *campaign,
                                              struct NifuzzBuffer *out);

/**
 * Executions performed so far.
 *
 * # Safety
 * `campaign` must be null or live.
 */
uint64_t nifuzz_campaign_executions(const struct NifuzzCampaign *campaign);

/**
 * Recomputes the metrics from a `state_snapshot.json` file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum NifuzzStatus nifuzz_report_from_snapshot(const char *path,
                                              uint64_t min_hits,
                                              struct NifuzzReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NIFUZZ_H */

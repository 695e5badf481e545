#ifndef SPARFSIM_H
#define SPARFSIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every call.
 */
typedef enum SparfStatus {
  SPARF_STATUS_OK = 0,
  SPARF_STATUS_NULL_POINTER = 1,
  SPARF_STATUS_INVALID_ARGUMENT = 2,
  SPARF_STATUS_PARSE = 3,
  SPARF_STATUS_CAPACITY = 4,
  SPARF_STATUS_MAPPING = 5,
  SPARF_STATUS_NUMERICAL = 6,
  SPARF_STATUS_IO = 7,
  SPARF_STATUS_INTERNAL = 8,
  SPARF_STATUS_PANIC = 9,
} SparfStatus;

typedef enum SparfSystem {
  SPARF_SYSTEM_INSTINFER = 0,
  SPARF_SYSTEM_HOST_OFFLOAD = 1,
  SPARF_SYSTEM_SSD_OFFLOAD = 2,
} SparfSystem;

typedef enum SparfTensor {
  SPARF_TENSOR_K = 0,
  SPARF_TENSOR_V = 1,
} SparfTensor;

/**
 * Opaque device KV layout handle.
 */
typedef struct SparfLayout SparfLayout;

/**
 * Opaque simulation result handle.
 */
typedef struct SparfReport SparfReport;

/**
 * Opaque scenario handle.
 */
typedef struct SparfScenario SparfScenario;

/**
 * Scalar results of one simulation. Times are seconds.
 */
typedef struct SparfReportSummary {
  double prefill_s;
  double decode_s;
  double decode_per_token_s;
  double throughput_tok_s;
  double weight_share;
  double kv_share;
  double compute_share;
  double transfer_share;
  double kv_access_s;
  double peak_vram_bytes;
  size_t csd_count;
} SparfReportSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. Valid until the next
 * failing call on the same thread.
 */
const char *sparfsim_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sparfsim_version(void);

/**
 * Parses a JSON scenario file holding exactly one scenario.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SparfStatus sparfsim_scenario_from_json(const char *json, struct SparfScenario **out);

/**
 * Scenario with the default model and calibration. `ratio` 1 is dense attention.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SparfStatus sparfsim_scenario_new(enum SparfSystem system,
                                       size_t batch,
                                       size_t input_len,
                                       size_t output_len,
                                       double ratio,
                                       size_t csd_count,
                                       uint64_t seed,
                                       struct SparfScenario **out);

/**
 * # Safety
 * `scenario` must come from a `sparfsim_scenario_*` constructor or be null.
 */
void sparfsim_scenario_free(struct SparfScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum SparfStatus sparfsim_simulate(const struct SparfScenario *scenario, struct SparfReport **out);

/**
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum SparfStatus sparfsim_report_summary(const struct SparfReport *report,
                                         struct SparfReportSummary *out);

/**
 * # Safety
 * `report` must come from `sparfsim_simulate` or be null.
 */
void sparfsim_report_free(struct SparfReport *report);

/**
 * KV cache bytes of an OPT-style model with `layers` layers and hidden size `hidden`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SparfStatus sparfsim_kv_cache_bytes(size_t layers,
                                         size_t hidden,
                                         size_t element_bytes,
                                         size_t batch,
                                         size_t seq,
                                         double *out);

/**
 * Exact attention of one head. `keys` and `values` are row-major `seq_len × head_dim`;
 * `out` receives `head_dim` values.
 *
 * # Safety
 * Pointers must reference buffers of the stated sizes.
 */
enum SparfStatus sparfsim_dense_attention(const double *query,
                                          const double *keys,
                                          const double *values,
                                          size_t head_dim,
                                          size_t seq_len,
                                          double *out);

/**
 * SparF attention keeping `kept_embeddings` query components and `kept_tokens` tokens,
 * with page groups of `embedding_group` embeddings and `token_group` tokens.
 * `alpha` may be null.
 *
 * # Safety
 * Pointers must reference buffers of the stated sizes.
 */
enum SparfStatus sparfsim_sparf_attention(const double *query,
                                          const double *keys,
                                          const double *values,
                                          size_t head_dim,
                                          size_t seq_len,
                                          size_t kept_embeddings,
                                          size_t kept_tokens,
                                          size_t embedding_group,
                                          size_t token_group,
                                          double *out,
                                          double *alpha);

/**
 * Empty device layout on the default flash geometry with `channels` channels.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SparfStatus sparfsim_layout_new(size_t layers,
                                     size_t heads,
                                     size_t head_dim,
                                     size_t max_context,
                                     size_t channels,
                                     struct SparfLayout **out);

/**
 * # Safety
 * `layout` must come from `sparfsim_layout_new` or be null.
 */
void sparfsim_layout_free(struct SparfLayout *layout);

/**
 * Appends one token's K and V rows (`head_dim` values each).
 *
 * # Safety
 * `layout` must be live; `k` and `v` must hold `head_dim` values.
 */
enum SparfStatus sparfsim_layout_append(struct SparfLayout *layout,
                                        size_t layer,
                                        size_t head,
                                        const double *k,
                                        const double *v);

/**
 * Programs pending pages; `finish != 0` also pads and flushes partially filled groups.
 *
 * # Safety
 * `layout` must be live.
 */
enum SparfStatus sparfsim_layout_sync(struct SparfLayout *layout, int32_t finish);

/**
 * Physical over logical bytes programmed so far.
 *
 * # Safety
 * `layout` must be live and `out` valid.
 */
enum SparfStatus sparfsim_layout_write_amplification(const struct SparfLayout *layout, double *out);

/**
 * Flash pages and device-DRAM hits needed to read the given tokens of one tensor.
 *
 * # Safety
 * `layout` must be live, `tokens` must hold `count` strictly increasing indices, and
 * `pages`/`dram_hits` must be valid.
 */
enum SparfStatus sparfsim_layout_lookup_tokens(const struct SparfLayout *layout,
                                               size_t layer,
                                               size_t head,
                                               enum SparfTensor tensor,
                                               const size_t *tokens,
                                               size_t count,
                                               size_t *pages,
                                               size_t *dram_hits);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARFSIM_H */

#ifndef PO2FORGE_H
#define PO2FORGE_H

/* Generated by cbindgen from crates/ffi/src; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call. Details of the last failure on the calling
 * thread are available from `po2_last_error`.
 */
typedef enum po2_status {
  PO2_STATUS_OK = 0,
  PO2_STATUS_NULL_POINTER = 1,
  PO2_STATUS_INVALID_ARGUMENT = 2,
  PO2_STATUS_IO = 3,
  PO2_STATUS_FORMAT = 4,
  PO2_STATUS_OVERFLOW = 5,
  PO2_STATUS_BUFFER_CAPACITY = 6,
  PO2_STATUS_INFEASIBLE = 7,
  PO2_STATUS_INTERNAL = 8,
  PO2_STATUS_PANIC = 9,
} po2_status;

typedef enum po2_subset {
  PO2_SUBSET_SEARCH = 0,
  PO2_SUBSET_FINAL = 1,
  PO2_SUBSET_ALL = 2,
} po2_subset;

typedef struct po2_calibration po2_calibration;

typedef struct po2_dataset po2_dataset;

typedef struct po2_decomposed po2_decomposed;

typedef struct po2_model po2_model;

/**
 * `{P, Z, E, M, S_W}`
 */
typedef struct po2_wmd_config {
  uint32_t stages;
  uint32_t shifts;
  uint32_t terms;
  uint32_t rows;
  uint32_t slice_width;
} po2_wmd_config;

typedef struct po2_decomposed_info {
  size_t layer_index;
  /**
   * Matrix rows (outputs) and columns (inputs) the layer multiplies by.
   */
  size_t rows;
  size_t cols;
  size_t slices;
  double residual_norm;
  double scale;
} po2_decomposed_info;

/**
 * Parameters fixed in hardware; `f_max` is the largest stage count.
 */
typedef struct po2_hard_params {
  uint32_t shifts;
  uint32_t terms;
  uint32_t rows;
  uint32_t slice_width;
  uint32_t f_max;
} po2_hard_params;

typedef struct po2_resource_estimate {
  uint64_t luts_total;
  uint64_t luts_per_pe_row;
  uint64_t brams_input;
  uint64_t brams_output;
  uint64_t f_elements_fetched;
  /**
   * LUTs within the calibration's budget
   */
  bool fits;
} po2_resource_estimate;

typedef struct po2_mapping {
  uint32_t pe_x;
  uint32_t pe_y;
  uint64_t cycles;
} po2_mapping;

typedef struct po2_eval_result {
  uint64_t samples;
  uint64_t correct;
  double top1_accuracy;
  /**
   * Percentage points below the unmodified model; 0 without substitutions.
   */
  double accuracy_drop;
} po2_eval_result;

/**
 * Number of choices per design parameter and decomposed layers.
 */
typedef struct po2_design_space {
  size_t shift_choices;
  size_t term_choices;
  size_t row_choices;
  size_t slice_width_choices;
  size_t stage_choices;
  size_t layers;
} po2_design_space;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *po2_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *po2_last_error(void);

/**
 * Static name of a status code.
 */
const char *po2_status_name(enum po2_status status);

enum po2_status po2_model_load(const char *path, struct po2_model **model);

void po2_model_free(struct po2_model *model);

enum po2_status po2_model_layer_count(const struct po2_model *model, size_t *count);

/**
 * Writes up to `capacity` decomposable layer indices to `indices` and the
 * total number to `count`. Pass `indices = NULL, capacity = 0` to query.
 */
enum po2_status po2_model_decomposable_layers(const struct po2_model *model,
                                              size_t *indices,
                                              size_t capacity,
                                              size_t *count);

enum po2_status po2_dataset_load(const char *path, struct po2_dataset **dataset);

void po2_dataset_free(struct po2_dataset *dataset);

enum po2_status po2_dataset_len(const struct po2_dataset *dataset, size_t *len);

/**
 * Loads a calibration file; `path = NULL` gives the built-in defaults.
 */
enum po2_status po2_calibration_load(const char *path, struct po2_calibration **cal);

/**
 * Default cost functions with the given LUT budget.
 */
enum po2_status po2_calibration_with_lut_max(uint64_t lut_max, struct po2_calibration **cal);

void po2_calibration_free(struct po2_calibration *cal);

/**
 * Decomposes layer `layer` of `model` in the array's matrix layout.
 */
enum po2_status po2_decompose(const struct po2_model *model,
                              size_t layer,
                              const struct po2_wmd_config *config,
                              struct po2_decomposed **decomposed);

void po2_decomposed_free(struct po2_decomposed *decomposed);

enum po2_status po2_decomposed_describe(const struct po2_decomposed *decomposed,
                                        struct po2_decomposed_info *info);

/**
 * Integer shift-and-add product: `input` has `cols` entries, `output`
 * room for `rows` (see `po2_decomposed_info`). Overflow fails the call.
 */
enum po2_status po2_apply_i32(const struct po2_decomposed *decomposed,
                              const int32_t *input,
                              size_t input_len,
                              int32_t *output,
                              size_t output_len);

enum po2_status po2_resource(const struct po2_hard_params *hard,
                             uint32_t pe_x,
                             uint32_t pe_y,
                             const struct po2_calibration *cal,
                             struct po2_resource_estimate *estimate);

/**
 * Compute cycles of one layer decomposed into `stages` matrices.
 */
enum po2_status po2_latency_layer(const struct po2_model *model,
                                  size_t layer,
                                  const struct po2_hard_params *hard,
                                  uint32_t pe_x,
                                  uint32_t pe_y,
                                  uint32_t stages,
                                  uint64_t *cycles);

/**
 * Fastest PE grid for `count` layers (`layers[i]` decomposed into
 * `stages[i]` matrices) within the calibration's LUT budget.
 */
enum po2_status po2_map_pes(const struct po2_model *model,
                            const size_t *layers,
                            const uint32_t *stages,
                            size_t count,
                            const struct po2_hard_params *hard,
                            const struct po2_calibration *cal,
                            struct po2_mapping *mapping);

/**
 * Top-1 accuracy of `model` with the `count` decomposed layers substituted
 * (none when `count = 0`).
 */
enum po2_status po2_evaluate(const struct po2_model *model,
                             const struct po2_dataset *dataset,
                             enum po2_subset subset,
                             const struct po2_decomposed *const *decomposed,
                             size_t count,
                             struct po2_eval_result *result);

/**
 * Number of designs in a search space; fails with
 * `PO2_STATUS_OVERFLOW` beyond 64 bits.
 */
enum po2_status po2_design_space_size(const struct po2_design_space *space, uint64_t *size);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PO2FORGE_H */

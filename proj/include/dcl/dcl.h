/* C interface to the dcl library. All functions return a dcl_status; on a
 * non-OK status dcl_last_error_message() describes the failure (per thread).
 * Handles are opaque and must be released with their *_free function. */
#ifndef DCL_DCL_H
#define DCL_DCL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DCL_API __declspec(dllexport)
#else
#define DCL_API __attribute__((visibility("default")))
#endif

typedef enum dcl_status {
  DCL_OK = 0,
  DCL_ERR_INVALID_ARGUMENT = 1,
  DCL_ERR_CONFIG = 2,
  DCL_ERR_NUMERIC = 3,
  DCL_ERR_CHECK_FAILED = 4,
  DCL_ERR_MISSING_INPUT = 5,
  DCL_ERR_IO = 6,
  DCL_ERR_INTERNAL = 7
} dcl_status;

typedef struct dcl_spec dcl_spec;
typedef struct dcl_encoder dcl_encoder;

DCL_API const char* dcl_version(void);
/* Message of the last failed call on this thread; "" if none. */
DCL_API const char* dcl_last_error_message(void);

/* Mixture specs. `data_json` uses the same schema as the "data" block of
 * a run config: {"kind": "gaussian_analog" | "cross_modal" | "spec", ...}. */
DCL_API dcl_status dcl_spec_from_json(const char* data_json, dcl_spec** out);
DCL_API void dcl_spec_free(dcl_spec* spec);
DCL_API dcl_status dcl_spec_num_classes(const dcl_spec* spec, size_t* out);
DCL_API dcl_status dcl_spec_dim(const dcl_spec* spec, size_t* out);
/* Draws n points from the marginal. classes[n]; features[n * dim], row-major. */
DCL_API dcl_status dcl_spec_sample(const dcl_spec* spec, uint64_t seed, size_t n, int* classes, double* features);

/* Single-anchor losses from raw scores. neg_weights may be NULL (all ones).
 * pos_set holds s(x, v_m), m = 1..num_pos_set. */
DCL_API dcl_status dcl_contrastive_loss(double pos_score, const double* neg_scores, const double* neg_weights,
                                        size_t num_neg, double* out);
DCL_API dcl_status dcl_g_estimate(const double* neg_scores, const double* neg_weights, size_t num_neg,
                                  const double* pos_set, size_t num_pos_set, double eta, double gamma, double* out);
DCL_API dcl_status dcl_debiased_loss(double pos_score, const double* neg_scores, const double* neg_weights,
                                     size_t num_neg, const double* pos_set, size_t num_pos_set, double eta,
                                     double gamma, double* out);

/* Encoders saved by `train` (path stem without .bin/.json). */
DCL_API dcl_status dcl_encoder_load(const char* checkpoint_stem, dcl_encoder** out);
DCL_API void dcl_encoder_free(dcl_encoder* enc);
DCL_API dcl_status dcl_encoder_input_dim(const dcl_encoder* enc, size_t* out);
DCL_API dcl_status dcl_encoder_output_dim(const dcl_encoder* enc, size_t* out);
/* features[n * input_dim] -> out[n * output_dim], both row-major. */
DCL_API dcl_status dcl_encoder_encode(const dcl_encoder* enc, const double* features, size_t n, double* out);

/* Error-bound terms for a constant eta (eta < 0 selects the true-prior
 * oracle). `statement_constants` != 0 uses the looser published constants. */
DCL_API dcl_status dcl_prop1_rhs(const dcl_spec* spec, double eta, double n, double m, int statement_constants,
                                 double* term_n, double* term_m, double* term_eta, double* total);

/* Runs a CLI subcommand in-process. config_path may be NULL (repro only:
 * built-in defaults). overrides_json is NULL or {"/pointer": value, ...}.
 * verify-bounds returns DCL_ERR_CHECK_FAILED when any row fails. */
DCL_API dcl_status dcl_run(const char* subcommand, const char* target, const char* config_path, const char* out_dir,
                           const char* overrides_json, int quiet);

#ifdef __cplusplus
}
#endif

#endif

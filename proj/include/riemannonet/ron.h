/* riemannonet C API: exact Riemann shock-tube datasets, operator-network
 * training (DeepONet one-/two-step and conditioned U-Net), inference,
 * error metrics, and basis analysis behind opaque handles.
 *
 * Conventions:
 *   - every function returning ron_status sets a thread-local message
 *     retrievable via ron_last_error() on failure;
 *   - char** outputs are heap strings owned by the caller, released with
 *     ron_string_free();
 *   - field buffers are packed row-major float64.
 */
#ifndef RIEMANNONET_RON_H
#define RIEMANNONET_RON_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef RON_API
#define RON_API __attribute__((visibility("default")))
#endif

typedef enum ron_status {
  RON_OK = 0,
  RON_ERR_CONFIG = 2,    /* invalid arguments or configuration */
  RON_ERR_NUMERIC = 3,   /* numerical failure (non-convergence, rank, ...) */
  RON_ERR_THRESHOLD = 4, /* an asserted error threshold was violated */
  RON_ERR_IO = 5         /* file format or filesystem failure */
} ron_status;

typedef struct ron_dataset ron_dataset;
typedef struct ron_model ron_model;

RON_API const char* ron_version(void);
RON_API const char* ron_last_error(void);
RON_API void ron_string_free(char* s);

/* ---- datasets (RON1 container) ---------------------------------------- */

/* case_label: lpr | ipr | hpr | lpr-fig5 | ipr-fig5.
 * options_json (all optional): {"n_samples":500,"n_points":200,
 *   "n_train":400,"seed":0} */
RON_API ron_status ron_dataset_generate(const char* case_label, const char* options_json,
                                        ron_dataset** out);
RON_API ron_status ron_dataset_load(const char* path, ron_dataset** out);
RON_API ron_status ron_dataset_save(const ron_dataset* ds, const char* path,
                                    const char* provenance_json);
RON_API ron_status ron_dataset_info(const ron_dataset* ds, char** json_out);
/* inverse=0: log-transform rho and p; inverse=1: undo it */
RON_API ron_status ron_dataset_log_transform(const ron_dataset* ds, int inverse,
                                             ron_dataset** out);
RON_API void ron_dataset_free(ron_dataset* ds);

RON_API int ron_dataset_n_samples(const ron_dataset* ds);
RON_API int ron_dataset_n_points(const ron_dataset* ds);

typedef enum ron_field {
  RON_FIELD_PL = 0,  /* [n_samples] */
  RON_FIELD_X = 1,   /* [n_points] */
  RON_FIELD_RHO = 2, /* [n_samples * n_points] */
  RON_FIELD_U = 3,
  RON_FIELD_P = 4
} ron_field;
RON_API ron_status ron_dataset_copy_field(const ron_dataset* ds, ron_field field, double* buf,
                                          size_t buf_len);

/* ---- training and models (RONW container) ------------------------------ */

/* kind: deeponet-1step | deeponet-2step | unet.
 * config_json for deeponet kinds (all optional):
 *   {"width":150,"hidden_layers":5,"latent_dim":0,"activation":"rowdy-tanh",
 *    "method":"svd","steps":6000,"trunk_steps":4000,"branch_steps":3000,
 *    "lr":1e-3,"weight_decay":1e-6,"seed":0,"log_fields":false,
 *    "pseudo_inverse":false}
 * config_json for unet:
 *   {"channels":[32,64,128,256],"groups":8,"kernel":3,"n_ref":16,
 *    "cond_features":128,"rho_only":false,"steps":2000,"batch":32,
 *    "lr":5e-4,"seed":0,"log_fields":false} */
RON_API ron_status ron_train(const ron_dataset* ds, const char* kind, const char* config_json,
                             ron_model** out);
RON_API ron_status ron_model_load(const char* path, ron_model** out);
RON_API ron_status ron_model_save(const ron_model* m, const char* path,
                                  const char* provenance_json);
RON_API ron_status ron_model_info(const ron_model* m, char** json_out);
RON_API void ron_model_free(ron_model* m);

RON_API int ron_model_n_points(const ron_model* m);
RON_API int ron_model_n_fields(const ron_model* m);
RON_API ron_status ron_model_grid(const ron_model* m, double* buf, size_t buf_len);

/* out: [n, n_points, n_fields]; truncate_to < 0 keeps every mode (>=0 needs
 * an SVD two-step model) */
RON_API ron_status ron_model_infer(const ron_model* m, const double* p_l, int n, int truncate_to,
                                   double* out, size_t out_len);

/* split: train | test | all; json_out holds the relative-L2 report */
RON_API ron_status ron_model_evaluate(const ron_model* m, const ron_dataset* ds,
                                      const char* split, int truncate_to, char** json_out);

/* which: spectra | layers | branch-coeffs | unet-latent | truncate.
 * options_json: {"methods":["svd","qr"],"split":"test","m_lo":60,"m_hi":150,
 *   "max_modes":16}; CSV files are written into out_dir as
 *   <case>_<analysis>_<method>.csv and a JSON summary is returned. */
RON_API ron_status ron_model_analyze(const ron_model* m, const ron_dataset* ds, const char* which,
                                     const char* options_json, const char* out_dir,
                                     char** summary_json_out);

/* ---- metrics ------------------------------------------------------------ */

/* predicted, exact: [n_samples, n_points, 3] */
RON_API ron_status ron_relative_l2(const double* predicted, const double* exact, int n_samples,
                                   int n_points, char** json_out);
/* reports_json_array: JSON array of report objects from evaluate/relative_l2 */
RON_API ron_status ron_ensemble_stats(const char* reports_json_array, char** json_out);

/* git-style blob hash (sha1 over "blob <len>\0" + bytes), hex string */
RON_API ron_status ron_file_blob_hash(const char* path, char** hex_out);

#ifdef __cplusplus
}
#endif

#endif /* RIEMANNONET_RON_H */

/*
 * C interface to the consensual co-training library.
 *
 * All objects are opaque handles created by a *_new / *_load / producer
 * function and released with the matching *_free. Every fallible call
 * returns a cct_status; on failure cct_last_error() describes the problem
 * (thread-local, valid until the next failing call on the same thread).
 */
#ifndef CCT_CCT_H
#define CCT_CCT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CCT_BUILDING_LIBRARY)
#    define CCT_API __declspec(dllexport)
#  else
#    define CCT_API __declspec(dllimport)
#  endif
#else
#  define CCT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as process exit codes for the command-line tool. */
typedef enum cct_status {
  CCT_OK = 0,
  CCT_ERR_CONFIG = 1,
  CCT_ERR_IO = 2,
  CCT_ERR_CONTRACT = 3
} cct_status;

CCT_API const char* cct_last_error(void);
CCT_API const char* cct_version(void);

/* ---- run configuration (flat key = value) ------------------------------ */

typedef struct cct_config cct_config;

CCT_API cct_status cct_config_new(cct_config** out);
CCT_API cct_status cct_config_load(const char* path, cct_config** out);
CCT_API cct_status cct_config_set(cct_config* cfg, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf; *needed receives the length
 * including the terminator. Fails with CCT_ERR_CONTRACT if buf is too small. */
CCT_API cct_status cct_config_get(const cct_config* cfg, const char* key, char* buf, size_t buf_len, size_t* needed);
CCT_API cct_status cct_config_write(const cct_config* cfg, const char* path);
CCT_API cct_status cct_config_validate(const cct_config* cfg);
CCT_API void cct_config_free(cct_config* cfg);

/* ---- experiment recipes ---------------------------------------------------- */

/* Co-trains the configured ensemble; writes metrics.csv, manifest.txt,
 * memorization.csv, confusion.csv and teacher/net_<j>.cctm under out_dir.
 * Optional outputs may be NULL. */
CCT_API cct_status cct_train(const cct_config* cfg, const char* out_dir, double* test_accuracy, size_t* corrupted);

/* Distills one student per temperature (n == 0 uses the configured default).
 * Writes student_U<t>.cctm files and distill.csv under out_dir. */
CCT_API cct_status cct_distill(const char* teacher_dir, const cct_config* cfg, const double* temperatures, size_t n,
                               const char* out_dir);

/* Sweeps noise x K x loss variants; writes summary.csv under out_dir. */
CCT_API cct_status cct_bench(const cct_config* cfg, const char* out_dir, int threads, size_t* rows);

/* ---- models ------------------------------------------------------------------- */

typedef struct cct_model cct_model;

/* A .cctm file, or a directory of net_<j>.cctm files (an ensemble). */
CCT_API cct_status cct_model_load(const char* path, cct_model** out);
CCT_API size_t cct_model_network_count(const cct_model* model);
CCT_API size_t cct_model_input_dim(const cct_model* model);
CCT_API size_t cct_model_class_count(const cct_model* model);
CCT_API size_t cct_model_parameter_count(const cct_model* model);
CCT_API cct_status cct_model_save(const cct_model* model, size_t index, const char* path);
/* Ensemble argmax of the mean softmax for `rows` feature vectors of width dim. */
CCT_API cct_status cct_model_predict(const cct_model* model, const double* features, size_t rows, size_t dim,
                                     int* out_labels);
CCT_API void cct_model_free(cct_model* model);

/* ---- evaluation ----------------------------------------------------------------- */

typedef struct cct_evaluation cct_evaluation;

/* Evaluates on the test split the configuration describes. */
CCT_API cct_status cct_evaluate_config(const cct_model* model, const cct_config* cfg, cct_evaluation** out);
/* Evaluates on an IDX image/label file pair. */
CCT_API cct_status cct_evaluate_idx(const cct_model* model, const char* images, const char* labels,
                                    cct_evaluation** out);
CCT_API double cct_evaluation_accuracy(const cct_evaluation* ev);
CCT_API int cct_evaluation_class_count(const cct_evaluation* ev);
/* Count of samples of class `truth` predicted as `predicted`. */
CCT_API size_t cct_evaluation_confusion(const cct_evaluation* ev, int truth, int predicted);
CCT_API cct_status cct_evaluation_write_csv(const cct_evaluation* ev, const char* path);
CCT_API void cct_evaluation_free(cct_evaluation* ev);

/* ---- crowd annotations and PM inference ----------------------------------------- */

typedef struct cct_annotations cct_annotations;
typedef struct cct_pm_result cct_pm_result;

/* Label value for "none of the above" in cct_annotations_add. */
#define CCT_LABEL_NONE (-1)
/* Inferred label of a discarded item in cct_pm_result_label. */
#define CCT_LABEL_DISCARDED (-2)

CCT_API cct_status cct_annotations_new(size_t items, size_t annotators, int classes, cct_annotations** out);
CCT_API cct_status cct_annotations_add(cct_annotations* table, size_t item, size_t annotator, int label);
CCT_API cct_status cct_annotations_load(const char* csv_path, cct_annotations** out);
/* Simulated crowd with uniform truth and accuracies ~ U[acc_min, acc_max].
 * Writes the annotations to csv_path (plus _truth / _annotators side files)
 * when csv_path is not NULL. */
CCT_API cct_status cct_annotations_simulate(size_t items, int classes, size_t annotators, double acc_min,
                                            double acc_max, double coverage, uint64_t seed, const char* csv_path,
                                            cct_annotations** out);
CCT_API cct_status cct_annotations_write(const cct_annotations* table, const char* csv_path);
CCT_API size_t cct_annotations_record_count(const cct_annotations* table);
CCT_API size_t cct_annotations_item_count(const cct_annotations* table);
CCT_API size_t cct_annotations_annotator_count(const cct_annotations* table);
CCT_API void cct_annotations_free(cct_annotations* table);

CCT_API cct_status cct_pm_infer(const cct_annotations* table, double smoothing, int max_iter, cct_pm_result** out);
/* Unweighted plurality vote; written into out_labels (item_count entries). */
CCT_API cct_status cct_majority_vote(const cct_annotations* table, int* out_labels);
CCT_API int cct_pm_result_iterations(const cct_pm_result* result);
CCT_API int cct_pm_result_converged(const cct_pm_result* result);
CCT_API size_t cct_pm_result_discarded(const cct_pm_result* result);
CCT_API size_t cct_pm_result_item_count(const cct_pm_result* result);
CCT_API size_t cct_pm_result_annotator_count(const cct_pm_result* result);
CCT_API int cct_pm_result_label(const cct_pm_result* result, size_t item);
CCT_API double cct_pm_result_expertise(const cct_pm_result* result, size_t annotator);
/* Writes <prefix>_labels.csv and <prefix>_expertise.csv. */
CCT_API cct_status cct_pm_result_write(const cct_pm_result* result, const char* prefix);
CCT_API void cct_pm_result_free(cct_pm_result* result);

/* ---- label noise ---------------------------------------------------------------- */

/* Corrupts exactly floor(rate * N) labels of an IDX label file. classes <= 0
 * infers max label + 1. mask_csv may be NULL. */
CCT_API cct_status cct_noise_idx_labels(const char* labels_in, const char* labels_out, double rate, uint64_t seed,
                                        int classes, const char* mask_csv, size_t* total, size_t* corrupted);

#ifdef __cplusplus
}
#endif

#endif /* CCT_CCT_H */

#ifndef RICB_H
#define RICB_H

/* C interface to the refutation pipeline. Every function returns a status;
 * on failure ricb_last_error() describes the error for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * ricb_string_free. Handles are released with their *_free function; passing
 * NULL to a free function is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(RICB_BUILDING)
#define RICB_API __declspec(dllexport)
#else
#define RICB_API __declspec(dllimport)
#endif
#else
#define RICB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ricb_status
{
  RICB_OK = 0,
  RICB_E_INVALID_ARGUMENT = 1,
  RICB_E_IO = 2,
  RICB_E_FORMAT = 3,
  RICB_E_NUMERIC = 4,
  RICB_E_STATE = 5,
  RICB_E_INTERNAL = 6
} ricb_status;

typedef struct ricb_config ricb_config;
typedef struct ricb_dataset ricb_dataset;
typedef struct ricb_stage0 ricb_stage0;
typedef struct ricb_refutation ricb_refutation;

RICB_API const char* ricb_version(void);
/* message of the last failed call on this thread, "" if none */
RICB_API const char* ricb_last_error(void);
RICB_API void ricb_string_free(char* s);

/* --- experiment configuration (JSON document) --- */
RICB_API ricb_status ricb_config_default(ricb_config** out);
RICB_API ricb_status ricb_config_from_json(const char* json, ricb_config** out);
RICB_API ricb_status ricb_config_load(const char* path, ricb_config** out);
/* "section.field=value"; value is JSON or a bare string */
RICB_API ricb_status ricb_config_set(ricb_config* cfg, const char* assignment);
/* JSON text of one field, e.g. "seeds" or "dataset.kind" */
RICB_API ricb_status ricb_config_get(const ricb_config* cfg, const char* key, char** out);
RICB_API ricb_status ricb_config_to_json(const ricb_config* cfg, char** out);
RICB_API ricb_status ricb_config_hash(const ricb_config* cfg, char** out);
RICB_API void ricb_config_free(ricb_config* cfg);

/* --- datasets --- */
RICB_API ricb_status ricb_dataset_synthetic(size_t n, uint64_t seed, int test_split,
                                            ricb_dataset** out);
/* train (test_split = 0) or test split of the config's dataset for a seed */
RICB_API ricb_status ricb_dataset_from_config(const ricb_config* cfg, uint64_t seed,
                                              int test_split, ricb_dataset** out);
RICB_API ricb_status ricb_dataset_load_csv(const char* path, ricb_dataset** out);
RICB_API ricb_status ricb_dataset_save_csv(const ricb_dataset* d, const char* path);
RICB_API size_t ricb_dataset_size(const ricb_dataset* d);
RICB_API size_t ricb_dataset_dim(const ricb_dataset* d);
RICB_API void ricb_dataset_free(ricb_dataset* d);

/* --- Stage 0: CATE estimator with a representation --- */
/* estimator, d_phi, hypers and tuning mode come from the config */
RICB_API ricb_status ricb_stage0_train(const ricb_config* cfg, const ricb_dataset* train,
                                       uint64_t seed, ricb_stage0** out);
RICB_API ricb_status ricb_stage0_load(const char* path, ricb_stage0** out);
RICB_API ricb_status ricb_stage0_save(const ricb_stage0* m, const char* path);
/* out must hold ricb_dataset_size(d) values */
RICB_API ricb_status ricb_stage0_predict_cate(const ricb_stage0* m, const ricb_dataset* d,
                                              double* out, size_t n);
RICB_API void ricb_stage0_free(ricb_stage0* m);

/* --- Stages 1 and 2: sensitivity field and conditional flow --- */
RICB_API ricb_status ricb_refutation_fit(const ricb_config* cfg, const ricb_stage0* m,
                                         const ricb_dataset* train, uint64_t seed,
                                         ricb_refutation** out);
/* one JSON file holding both artifacts */
RICB_API ricb_status ricb_refutation_load(const char* path, ricb_refutation** out);
RICB_API ricb_status ricb_refutation_save(const ricb_refutation* r, const char* path);
/* CATE interval per row of d; k samples per arm, seeded by `seed` */
RICB_API ricb_status ricb_refutation_bounds(const ricb_refutation* r, const ricb_stage0* m,
                                            const ricb_dataset* d, double delta, size_t k,
                                            uint64_t seed, double* lower, double* upper,
                                            size_t n);
RICB_API void ricb_refutation_free(ricb_refutation* r);

/* --- evaluation and orchestration --- */
/* scores trained artifacts and writes the result files to out_dir; the
 * summary is the aggregate table as JSON */
RICB_API ricb_status ricb_evaluate(const ricb_config* cfg, const ricb_stage0* m,
                                   const ricb_refutation* r, const ricb_dataset* train,
                                   const ricb_dataset* test, uint64_t seed,
                                   const char* out_dir, char** summary_json);
/* every seed of the config; out_dir NULL means the config's output_dir */
RICB_API ricb_status ricb_run_experiment(const ricb_config* cfg, const char* out_dir,
                                         char** summary_json);
/* stage: "stage0", "propensity_x", "propensity_phi" or "flow"; the later
 * stages need a Stage 0 model */
RICB_API ricb_status ricb_grid_search(const ricb_config* cfg, const char* stage,
                                      const ricb_dataset* train, const ricb_stage0* m,
                                      uint64_t seed, char** result_json);

#ifdef __cplusplus
}
#endif

#endif

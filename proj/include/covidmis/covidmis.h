/* C interface to the covidmis pipeline.
 *
 * Every function returns a cm_status. On failure, cm_last_error() returns a
 * message for the calling thread, valid until that thread's next call.
 * Strings handed out through char** parameters are owned by the caller and
 * released with cm_string_free().
 */
#ifndef COVIDMIS_H
#define COVIDMIS_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define CM_API __attribute__((visibility("default")))
#else
#define CM_API
#endif

typedef enum cm_status {
  CM_OK = 0,
  CM_ERR_INTERNAL = 1,
  CM_ERR_USAGE = 2, /* bad configuration, unknown option, missing file */
  CM_ERR_DATA = 3   /* input data rejected */
} cm_status;

typedef enum cm_label { CM_LABEL_REAL = 0, CM_LABEL_FAKE = 1 } cm_label;

typedef struct cm_config cm_config;
typedef struct cm_model cm_model;

CM_API const char* cm_version(void);
CM_API const char* cm_last_error(void);
CM_API void cm_string_free(char* s);

/* ---- configuration ---- */

/* Defaults for every key. */
CM_API cm_status cm_config_new(cm_config** out);
CM_API void cm_config_free(cm_config* cfg);
/* Merges a TOML file. */
CM_API cm_status cm_config_load_toml(cm_config* cfg, const char* path);
/* Applies the output-directory environment override, if set. */
CM_API cm_status cm_config_apply_env(cm_config* cfg);
/* key is "section.key" (or "seed"); value is parsed by the key's type. */
CM_API cm_status cm_config_set(cm_config* cfg, const char* key, const char* value);
/* Effective configuration as TOML. */
CM_API cm_status cm_config_dump(const cm_config* cfg, char** out_toml);

/* Known keys, for building command-line flags. */
CM_API size_t cm_config_key_count(void);
CM_API const char* cm_config_key_name(size_t index);
CM_API const char* cm_config_key_type(size_t index);
CM_API const char* cm_config_key_help(size_t index);

/* ---- pipeline commands (artifacts go to paths.output_dir) ---- */

CM_API cm_status cm_run_crawl(const cm_config* cfg);
CM_API cm_status cm_run_label(const cm_config* cfg);
/* model: "bilstm" or "ensemble". */
CM_API cm_status cm_run_train(const cm_config* cfg, const char* model);
CM_API cm_status cm_run_evaluate(const cm_config* cfg, const char* checkpoint);
/* k = 0 uses cv.k from the configuration. */
CM_API cm_status cm_run_cv(const cm_config* cfg, const char* model, size_t k);

/* One-line human-readable result of the last successful cm_run_* on this thread. */
CM_API const char* cm_last_summary(void);

/* ---- inference ---- */

CM_API cm_status cm_model_load(const char* checkpoint, cm_model** out);
CM_API void cm_model_free(cm_model* model);
/* Probability of fake; label is CM_LABEL_FAKE iff probability >= 0.5. */
CM_API cm_status cm_model_predict(cm_model* model, const char* text, double* probability, cm_label* label);

/* ---- text utilities ---- */

CM_API cm_status cm_clean_text(const char* text, char** out);
CM_API cm_status cm_stem(const char* word, char** out);

#ifdef __cplusplus
}
#endif

#endif /* COVIDMIS_H */

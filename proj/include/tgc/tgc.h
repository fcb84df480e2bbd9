/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright 2026 The tgc Authors */

#ifndef TGC_TGC_H_
#define TGC_TGC_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TGC_API __declspec(dllexport)
#else
#define TGC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tgc_status {
  TGC_OK = 0,
  TGC_ERR_INVALID_ARGUMENT = 1,
  TGC_ERR_IO = 2,
  TGC_ERR_FORMAT = 3,
  TGC_ERR_VERSION = 4,
  TGC_ERR_NUMERIC = 5,
  TGC_ERR_NOT_FOUND = 6,
  TGC_ERR_INTERNAL = 7
} tgc_status;

typedef struct tgc_config tgc_config;
typedef struct tgc_topic_model tgc_topic_model;
typedef struct tgc_captioner tgc_captioner;

TGC_API const char* tgc_version(void);

/* Message of the last failure on the calling thread ("" when none). */
TGC_API const char* tgc_last_error(void);

/* Releases strings returned through char** out-parameters. */
TGC_API void tgc_string_free(char* s);

/* Configuration. Keys are dotted ("captioner.variant"); values are JSON text
 * or, for string keys, plain text. */
TGC_API tgc_status tgc_config_create(tgc_config** out);
TGC_API tgc_status tgc_config_load(const char* path, tgc_config** out);
TGC_API tgc_status tgc_config_merge_json(tgc_config* config, const char* json);
TGC_API tgc_status tgc_config_set(tgc_config* config, const char* key, const char* value);
TGC_API tgc_status tgc_config_to_json(const tgc_config* config, char** out);
TGC_API void tgc_config_free(tgc_config* config);

/* Commands: synth, mine-topics, show-topics, cooccurrence, train-predictor,
 * predict-topics, train-captioner, caption, evaluate, gradcheck,
 * ablate-topics. `summary` (may be NULL) receives the human-readable output. */
TGC_API size_t tgc_command_count(void);
TGC_API const char* tgc_command_name(size_t index);
TGC_API tgc_status tgc_run(const tgc_config* config, const char* command, char** summary);

/* Topic model checkpoints. */
TGC_API tgc_status tgc_topic_model_load(const char* path, tgc_topic_model** out);
TGC_API size_t tgc_topic_model_num_topics(const tgc_topic_model* model);
/* Fold-in inference on free text; writes num_topics values to `out`. */
TGC_API tgc_status tgc_topic_model_infer_text(const tgc_topic_model* model, const char* text,
                                              uint64_t seed, double* out, size_t out_len);
TGC_API void tgc_topic_model_free(tgc_topic_model* model);

/* Captioner checkpoints. */
TGC_API tgc_status tgc_captioner_load(const char* path, tgc_captioner** out);
TGC_API size_t tgc_captioner_feature_dim(const tgc_captioner* captioner);
/* 0 for the vanilla variant. */
TGC_API size_t tgc_captioner_num_topics(const tgc_captioner* captioner);
TGC_API tgc_status tgc_captioner_generate(const tgc_captioner* captioner, const double* features,
                                          size_t num_features, const double* topics,
                                          size_t num_topics, size_t beam_width, char** caption,
                                          double* log_prob);
TGC_API void tgc_captioner_free(tgc_captioner* captioner);

/* Scores [{"video_id", "hypothesis", "references": [...]}, ...] and returns
 * the metric report as JSON. */
TGC_API tgc_status tgc_evaluate_json(const char* pairs_json, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* TGC_TGC_H_ */

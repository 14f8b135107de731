// Copyright 2026 The ebf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EBF_EBF_H
#define EBF_EBF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define EBF_API __attribute__((visibility("default")))
#else
#define EBF_API
#endif

typedef enum ebf_status {
  EBF_OK = 0,
  EBF_ERR_SHAPE = 1,
  EBF_ERR_CONFIG = 2,
  EBF_ERR_VALUE = 3,
  EBF_ERR_FORMAT = 4,
  EBF_ERR_TRUNCATED = 5,
  EBF_ERR_NAME_MISMATCH = 6,
  EBF_ERR_IO = 7,
  EBF_ERR_NUMERIC = 8,
  EBF_ERR_INTERNAL = 9,
  EBF_ERR_ARGUMENT = 10 /* null handle or pointer */
} ebf_status;

typedef struct ebf_config ebf_config;
typedef struct ebf_model ebf_model;

/* Message of the last failing call on this thread; "" if none. */
EBF_API const char* ebf_last_error(void);
EBF_API const char* ebf_status_name(ebf_status status);

/* Strings returned through char** are owned by the caller. */
EBF_API void ebf_string_free(char* s);

EBF_API ebf_status ebf_config_load(const char* path, ebf_config** out);
EBF_API ebf_status ebf_config_parse(const char* json_text, ebf_config** out);
EBF_API ebf_status ebf_config_to_json(const ebf_config* cfg, char** out);
EBF_API void ebf_config_free(ebf_config* cfg);

EBF_API ebf_status ebf_model_create(const ebf_config* cfg, uint64_t seed, ebf_model** out);
EBF_API void ebf_model_free(ebf_model* model);
EBF_API ebf_status ebf_model_param_count(const ebf_model* model, int64_t* total, int64_t* encoder);
EBF_API ebf_status ebf_model_save(const ebf_model* model, const char* path);
EBF_API ebf_status ebf_model_load(ebf_model* model, const char* path);

/* Reports: aligned text, or JSON when json != 0. */
EBF_API ebf_status ebf_report_params(const ebf_config* cfg, int json, char** out);
EBF_API ebf_status ebf_report_macs(const ebf_config* cfg, double input_seconds, int json, char** out);

/* Finite-difference suite on a small instance shaped by cfg's encoder. */
EBF_API ebf_status ebf_gradcheck(const ebf_config* cfg, uint64_t seed, int json, int* all_passed, char** report);

/* Toy recipe; progress lines go to stderr when verbose. summary_json may be NULL. */
EBF_API ebf_status ebf_train_toy(const ebf_config* cfg, const char* out_dir, int verbose, char** summary_json);

typedef struct ebf_decode_options {
  int beam_size;
  double ctc_weight;
  double lambda_ilm;
  double lambda_elm;
} ebf_decode_options;

EBF_API void ebf_decode_options_default(ebf_decode_options* opts);

/* input: wav path, "toy" or "toy:<seed>". */
EBF_API ebf_status ebf_decode(const ebf_config* cfg, const char* checkpoint, const char* input,
                              const ebf_decode_options* opts, int json, char** out);

/* scores may be NULL (equal scores; later files win ties). top_k 0 averages all. */
EBF_API ebf_status ebf_average(const char* const* paths, size_t count, const double* scores, size_t top_k,
                               const char* out_path);

/* sweep: "merge_variant" or "merge_kernel". */
EBF_API ebf_status ebf_ablate(const ebf_config* cfg, const char* sweep, int steps, int json, int verbose,
                              char** out);

#ifdef __cplusplus
}
#endif

#endif

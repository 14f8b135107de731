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

/* Exercises the shared library through its C header only. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "ebf/ebf.h"

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

#define EXPECT_STATUS(call, want)                                                                   \
  do {                                                                                              \
    ebf_status got_ = (call);                                                                       \
    if (got_ != (want)) {                                                                           \
      fprintf(stderr, "%s:%d: %s returned %s (%s), wanted %s\n", __FILE__, __LINE__, #call,          \
              ebf_status_name(got_), ebf_last_error(), ebf_status_name(want));                      \
      ++failures;                                                                                   \
    }                                                                                               \
  } while (0)

static char* slurp(const char* path, size_t* size) {
  FILE* f = fopen(path, "rb");
  if (!f) return NULL;
  fseek(f, 0, SEEK_END);
  long n = ftell(f);
  fseek(f, 0, SEEK_SET);
  char* buf = malloc((size_t)n + 1);
  size_t got = fread(buf, 1, (size_t)n, f);
  fclose(f);
  buf[got] = 0;
  *size = got;
  return buf;
}

static int same_file(const char* a, const char* b) {
  size_t na = 0, nb = 0;
  char* x = slurp(a, &na);
  char* y = slurp(b, &nb);
  int same = x && y && na == nb && memcmp(x, y, na) == 0;
  free(x);
  free(y);
  return same;
}

int main(int argc, char** argv) {
  if (argc < 3) {
    fprintf(stderr, "usage: %s <config-dir> <scratch-dir>\n", argv[0]);
    return 2;
  }
  char toy_path[1024], base_path[1024], p1[1024], p2[1024], p3[1024], avg[1024];
  snprintf(toy_path, sizeof toy_path, "%s/toy.json", argv[1]);
  snprintf(base_path, sizeof base_path, "%s/ebranchformer_base.json", argv[1]);
  snprintf(p1, sizeof p1, "%s/capi_a.ebf", argv[2]);
  snprintf(p2, sizeof p2, "%s/capi_b.ebf", argv[2]);
  snprintf(p3, sizeof p3, "%s/capi_c.ebf", argv[2]);
  snprintf(avg, sizeof avg, "%s/capi_avg.ebf", argv[2]);

  /* Errors carry a status and a message. */
  ebf_config* cfg = NULL;
  EXPECT_STATUS(ebf_config_load("/nonexistent/x.json", &cfg), EBF_ERR_IO);
  EXPECT(strlen(ebf_last_error()) > 0);
  EXPECT(cfg == NULL);
  EXPECT_STATUS(ebf_config_parse("{\"encoder\": {\"d\": 64, \"bogus\": 1}}", &cfg), EBF_ERR_CONFIG);
  EXPECT(strstr(ebf_last_error(), "bogus") != NULL);
  EXPECT_STATUS(ebf_config_parse("{", &cfg), EBF_ERR_CONFIG);
  EXPECT_STATUS(ebf_config_parse(NULL, &cfg), EBF_ERR_ARGUMENT);
  EXPECT_STATUS(ebf_config_load(toy_path, NULL), EBF_ERR_ARGUMENT);
  EXPECT(strcmp(ebf_status_name(EBF_OK), "ok") == 0);
  EXPECT(strcmp(ebf_status_name(EBF_ERR_TRUNCATED), "truncated") == 0);

  /* Config round trip. */
  EXPECT_STATUS(ebf_config_load(toy_path, &cfg), EBF_OK);
  if (!cfg) return 1;
  char* json1 = NULL;
  char* json2 = NULL;
  EXPECT_STATUS(ebf_config_to_json(cfg, &json1), EBF_OK);
  ebf_config* again = NULL;
  EXPECT_STATUS(ebf_config_parse(json1, &again), EBF_OK);
  EXPECT_STATUS(ebf_config_to_json(again, &json2), EBF_OK);
  EXPECT(json1 && json2 && strcmp(json1, json2) == 0);
  ebf_string_free(json1);
  ebf_string_free(json2);
  ebf_config_free(again);
  EXPECT(strcmp(ebf_last_error(), "") == 0);

  /* Models: counts, save/load, mismatches. */
  ebf_model* m1 = NULL;
  ebf_model* m2 = NULL;
  EXPECT_STATUS(ebf_model_create(cfg, 1, &m1), EBF_OK);
  EXPECT_STATUS(ebf_model_create(cfg, 2, &m2), EBF_OK);
  int64_t total = 0, enc = 0;
  EXPECT_STATUS(ebf_model_param_count(m1, &total, &enc), EBF_OK);
  EXPECT(enc > 0 && total > enc);
  EXPECT_STATUS(ebf_model_save(m1, p1), EBF_OK);
  EXPECT_STATUS(ebf_model_save(m2, p2), EBF_OK);
  EXPECT(!same_file(p1, p2));
  EXPECT_STATUS(ebf_model_load(m2, p1), EBF_OK);
  EXPECT_STATUS(ebf_model_save(m2, p3), EBF_OK);
  EXPECT(same_file(p1, p3));
  EXPECT_STATUS(ebf_model_load(m2, "/nonexistent/m.ebf"), EBF_ERR_IO);
  EXPECT_STATUS(ebf_model_load(m2, toy_path), EBF_ERR_FORMAT);

  ebf_config* other = NULL;
  EXPECT_STATUS(ebf_config_parse("{\"encoder\": {\"d\": 64, \"num_layers\": 1}, \"vocab\": {\"size\": 12}}", &other),
                EBF_OK);
  ebf_model* m3 = NULL;
  EXPECT_STATUS(ebf_model_create(other, 1, &m3), EBF_OK);
  EXPECT_STATUS(ebf_model_load(m3, p1), EBF_ERR_NAME_MISMATCH);
  ebf_model_free(m3);
  ebf_config_free(other);
  EXPECT_STATUS(ebf_model_param_count(NULL, &total, &enc), EBF_ERR_ARGUMENT);

  /* Reports. */
  ebf_config* base = NULL;
  EXPECT_STATUS(ebf_config_load(base_path, &base), EBF_OK);
  char* report = NULL;
  EXPECT_STATUS(ebf_report_params(base, 1, &report), EBF_OK);
  EXPECT(report && strstr(report, "\"encoder_params\": 27794944") != NULL);
  ebf_string_free(report);
  report = NULL;
  EXPECT_STATUS(ebf_report_macs(base, 10.0, 0, &report), EBF_OK);
  EXPECT(report && strstr(report, "encoder.blocks.*.global") != NULL);
  ebf_string_free(report);
  EXPECT_STATUS(ebf_report_macs(base, 0.0, 0, &report), EBF_ERR_VALUE);
  ebf_config_free(base);

  /* Decoding an untrained model still runs; fusion with an absent LM is refused. */
  ebf_decode_options opts;
  ebf_decode_options_default(&opts);
  EXPECT(opts.beam_size >= 1);
  opts.lambda_elm = 0.0;
  opts.lambda_ilm = 0.0;
  opts.ctc_weight = 0.3;
  char* decoded = NULL;
  EXPECT_STATUS(ebf_decode(cfg, p1, "toy:3", &opts, 1, &decoded), EBF_OK);
  EXPECT(decoded && strstr(decoded, "\"hypothesis\"") != NULL && strstr(decoded, "\"score_ctc\"") != NULL);
  ebf_string_free(decoded);
  opts.lambda_elm = 0.5;
  EXPECT_STATUS(ebf_decode(cfg, p1, "toy:3", &opts, 1, &decoded), EBF_ERR_CONFIG);
  opts.lambda_elm = 0.0;
  EXPECT_STATUS(ebf_decode(cfg, p1, "/nonexistent.wav", &opts, 0, &decoded), EBF_ERR_IO);
  opts.beam_size = 0;
  EXPECT(ebf_decode(cfg, p1, "toy:3", &opts, 0, &decoded) != EBF_OK);

  /* Averaging: a checkpoint averaged with itself is itself. */
  const char* pair[2] = {p1, p3};
  EXPECT_STATUS(ebf_average(pair, 2, NULL, 0, avg), EBF_OK);
  EXPECT(same_file(avg, p1));
  const char* mixed[2] = {p1, p2};
  const double scores[2] = {0.9, 0.1};
  EXPECT_STATUS(ebf_average(mixed, 2, scores, 1, avg), EBF_OK);
  EXPECT(same_file(avg, p1));
  const char* missing[1] = {"/nonexistent/q.ebf"};
  EXPECT_STATUS(ebf_average(missing, 1, NULL, 0, avg), EBF_ERR_IO);
  EXPECT_STATUS(ebf_average(pair, 0, NULL, 0, avg), EBF_ERR_VALUE);
  EXPECT_STATUS(ebf_average(NULL, 2, NULL, 0, avg), EBF_ERR_ARGUMENT);

  char* table = NULL;
  EXPECT(ebf_ablate(cfg, "no_such_sweep", 1, 0, 0, &table) != EBF_OK);

  ebf_model_free(m1);
  ebf_model_free(m2);
  ebf_config_free(cfg);
  remove(p1);
  remove(p2);
  remove(p3);
  remove(avg);
  if (failures) fprintf(stderr, "%d C API expectation(s) failed\n", failures);
  return failures ? 1 : 0;
}

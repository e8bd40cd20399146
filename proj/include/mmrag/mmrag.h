/* Copyright 2026-present the mmrag project
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the mmrag engine.
 *
 * Conventions:
 *   - Every fallible call returns an mmr_status; MMR_OK is 0.
 *   - On failure, mmr_last_error() returns a message for the calling thread.
 *   - Structured results come back as JSON in a char* out-parameter that the
 *     caller releases with mmr_string_free(). Out-parameters are untouched
 *     on failure.
 *   - An engine handle is not thread-safe; concurrency lives behind it.
 */

#ifndef MMRAG_MMRAG_H
#define MMRAG_MMRAG_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MMR_API __declspec(dllexport)
#else
#define MMR_API __attribute__((visibility("default")))
#endif

typedef struct mmr_engine mmr_engine;

typedef enum mmr_status {
    MMR_OK = 0,
    MMR_ERR_IO = 1,
    MMR_ERR_PARSE = 2,
    MMR_ERR_CONFIG = 3,
    MMR_ERR_INVALID_ARGUMENT = 4,
    MMR_ERR_BACKEND = 5,
    MMR_ERR_NOT_FOUND = 6,
    MMR_ERR_STATE = 7,
    MMR_ERR_THRESHOLD = 8,
    MMR_ERR_INTERNAL = 9
} mmr_status;

MMR_API const char* mmr_version(void);

/* Message for the most recent failure on this thread; never NULL. */
MMR_API const char* mmr_last_error(void);

MMR_API void mmr_string_free(char* s);

/* Opens an engine from a JSON config file. */
MMR_API mmr_status mmr_engine_open(const char* config_path, mmr_engine** out_engine);

/* Opens an engine from a config document. Relative paths inside the config
 * resolve against base_dir (NULL means the current directory). */
MMR_API mmr_status mmr_engine_open_json(const char* config_json, const char* base_dir,
                                        mmr_engine** out_engine);

MMR_API void mmr_engine_close(mmr_engine* engine);

/* Validates and chunks a corpus file, persists the normalized form under the
 * configured output directory, and loads it into the engine.
 * Result JSON: {"pages": n, "chunks": n, "images": n, ...}. */
MMR_API mmr_status mmr_ingest(mmr_engine* engine, const char* corpus_path, char** out_json);

/* Builds (force != 0: rebuilds) every index the setting needs.
 * Result JSON: {"setting": ..., "indexes": [{"name": ..., "entries": n}]}. */
MMR_API mmr_status mmr_build_index(mmr_engine* engine, const char* setting, int force,
                                   char** out_json);

/* Summarizes every corpus image with every configured generator, filling the
 * on-disk summary cache. Result JSON reports per-generator counts. */
MMR_API mmr_status mmr_summarize(mmr_engine* engine, char** out_json);

/* Answers one question under a retrieval (or baseline) setting. Passing
 * NULL or "" as generator selects the first configured generator.
 * Result JSON: {"answer_text": ..., "images_sent": n, "bundle": {...}}. */
MMR_API mmr_status mmr_ask(mmr_engine* engine, const char* question, const char* setting,
                           const char* generator, char** out_json);

/* Experiment phases. Each persists its outputs under the configured output
 * directory and skips work that is already complete. */
MMR_API mmr_status mmr_run_batch(mmr_engine* engine);
MMR_API mmr_status mmr_run_eval(mmr_engine* engine);

/* Renders per-cell and global reports from persisted judgments.
 * Result JSON: {"report": {...}, "error_row_fraction": f,
 *               "threshold": f, "threshold_exceeded": bool}. */
MMR_API mmr_status mmr_run_report(mmr_engine* engine, char** out_json);

/* batch + eval + report. Result JSON as for mmr_run_report. */
MMR_API mmr_status mmr_run_experiment(mmr_engine* engine, char** out_json);

/* Resolves the full execution plan (config echo, corpus/testset stats)
 * without touching any backend. */
MMR_API mmr_status mmr_dry_run(mmr_engine* engine, char** out_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MMRAG_MMRAG_H */

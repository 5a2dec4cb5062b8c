/* Copyright (c) 2026 the segorder authors */
/* SPDX-License-Identifier: Apache-2.0 */
#ifndef SEGORDER_H
#define SEGORDER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Stable C surface of the segment-ordering library. All functions that can
 * fail return an sgo_status; a nonzero status leaves a message readable via
 * sgo_last_error() (per thread). Strings returned through out-parameters are
 * heap-allocated and must be released with sgo_string_free(). */

typedef enum sgo_status {
  SGO_OK = 0,
  SGO_ERROR_CONFIG = 2, /* invalid configuration or incompatible options */
  SGO_ERROR_DATA = 3,   /* unreadable, malformed, or mismatched inputs */
  SGO_ERROR_NUMERIC = 4 /* non-finite loss or gradients; run aborted */
} sgo_status;

const char* sgo_version(void);

/* Message for the most recent failure on this thread; "" when none. */
const char* sgo_last_error(void);

void sgo_string_free(char* s);

/* Resolves a run configuration for one of the commands "synth", "pack",
 * "pretrain", "finetune", "eval": defaults, then the named preset (if any),
 * then config_text (JSON, may be NULL), then dotted key=value overrides.
 * Unknown keys are rejected. On success *resolved_json_out holds the fully
 * resolved config; feeding it back resolves to the same state. */
sgo_status sgo_config_resolve(const char* command, const char* config_text,
                              const char* const* overrides, size_t n_overrides,
                              char** resolved_json_out);

/* Command runners. Each takes a resolved config JSON (from
 * sgo_config_resolve), performs the run and its file side effects, and
 * returns a JSON report in *report_json_out. */
sgo_status sgo_run_synth(const char* resolved_json, char** report_json_out);
sgo_status sgo_run_pack(const char* resolved_json, char** report_json_out);
sgo_status sgo_run_pretrain(const char* resolved_json, char** report_json_out);
sgo_status sgo_run_finetune(const char* resolved_json, char** report_json_out);
sgo_status sgo_run_eval(const char* resolved_json, char** report_json_out);

/* Formatted one-sample dump of a packed shard (the inspect command). */
sgo_status sgo_inspect_sample(const char* shard_path, const char* vocab_path, uint64_t index,
                              char** text_out);

/* Opaque vocabulary handle. */
typedef struct sgo_vocab sgo_vocab;
sgo_status sgo_vocab_open(const char* path, sgo_vocab** out);
void sgo_vocab_close(sgo_vocab* v);
int32_t sgo_vocab_size(const sgo_vocab* v);
/* WordPiece ids for a text, as a JSON array of integers. */
sgo_status sgo_vocab_tokenize(const sgo_vocab* v, const char* text, char** ids_json_out);

/* Opaque shard handle. */
typedef struct sgo_shard sgo_shard;
sgo_status sgo_shard_open(const char* path, sgo_shard** out);
void sgo_shard_close(sgo_shard* s);
uint64_t sgo_shard_count(const sgo_shard* s);
/* Raw stored fields of one sample as JSON (token_ids, so_targets, ...). */
sgo_status sgo_shard_sample_json(const sgo_shard* s, uint64_t index, char** json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SEGORDER_H */

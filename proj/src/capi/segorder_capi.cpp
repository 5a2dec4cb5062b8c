// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "segorder.h"

#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "core/common.hpp"
#include "data/shard.hpp"
#include "data/vocab.hpp"

namespace {

thread_local std::string g_last_error;

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

/// Exceptions cross the C boundary as status codes; the message survives in
/// thread-local storage.
template <class Fn>
sgo_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SGO_OK;
  } catch (const segorder::ConfigError& e) {
    g_last_error = e.what();
    return SGO_ERROR_CONFIG;
  } catch (const segorder::NumericError& e) {
    g_last_error = e.what();
    return SGO_ERROR_NUMERIC;
  } catch (const segorder::DataError& e) {
    g_last_error = e.what();
    return SGO_ERROR_DATA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SGO_ERROR_DATA;
  }
}

sgo_status require_arg(const void* p, const char* name) {
  if (p) return SGO_OK;
  g_last_error = std::string("null argument: ") + name;
  return SGO_ERROR_CONFIG;
}

sgo_status run_command(const char* command, const char* resolved_json, char** report_json_out,
                       nlohmann::ordered_json (*body)(const segorder::RunConfig&)) {
  if (require_arg(resolved_json, "resolved_json") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(report_json_out, "report_json_out") != SGO_OK) return SGO_ERROR_CONFIG;
  return guard([&] {
    segorder::RunConfig rc = segorder::resolve_config(command, resolved_json, {});
    nlohmann::ordered_json report = body(rc);
    *report_json_out = copy_out(report.dump(2));
    if (!*report_json_out) throw segorder::DataError("out of memory");
  });
}

}  // namespace

struct sgo_vocab {
  segorder::Vocab v;
};

struct sgo_shard {
  std::vector<segorder::PackedSample> samples;
  segorder::ShardMeta meta;
};

extern "C" {

const char* sgo_version(void) { return "0.1.0"; }

const char* sgo_last_error(void) { return g_last_error.c_str(); }

void sgo_string_free(char* s) { std::free(s); }

sgo_status sgo_config_resolve(const char* command, const char* config_text,
                              const char* const* overrides, size_t n_overrides,
                              char** resolved_json_out) {
  if (require_arg(command, "command") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(resolved_json_out, "resolved_json_out") != SGO_OK) return SGO_ERROR_CONFIG;
  return guard([&] {
    std::vector<std::string> ov;
    for (size_t i = 0; i < n_overrides; ++i) {
      if (!overrides || !overrides[i]) throw segorder::ConfigError("null override entry");
      ov.emplace_back(overrides[i]);
    }
    segorder::RunConfig rc =
        segorder::resolve_config(command, config_text ? config_text : "", ov);
    *resolved_json_out = copy_out(segorder::run_config_json(rc).dump(2));
    if (!*resolved_json_out) throw segorder::DataError("out of memory");
  });
}

sgo_status sgo_run_synth(const char* resolved_json, char** report_json_out) {
  return run_command("synth", resolved_json, report_json_out, &segorder::cmd_synth);
}

sgo_status sgo_run_pack(const char* resolved_json, char** report_json_out) {
  return run_command("pack", resolved_json, report_json_out, &segorder::cmd_pack);
}

sgo_status sgo_run_pretrain(const char* resolved_json, char** report_json_out) {
  return run_command("pretrain", resolved_json, report_json_out, &segorder::cmd_pretrain);
}

sgo_status sgo_run_finetune(const char* resolved_json, char** report_json_out) {
  return run_command("finetune", resolved_json, report_json_out, &segorder::cmd_finetune);
}

sgo_status sgo_run_eval(const char* resolved_json, char** report_json_out) {
  return run_command("eval", resolved_json, report_json_out, &segorder::cmd_eval);
}

sgo_status sgo_inspect_sample(const char* shard_path, const char* vocab_path, uint64_t index,
                              char** text_out) {
  if (require_arg(shard_path, "shard_path") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(vocab_path, "vocab_path") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(text_out, "text_out") != SGO_OK) return SGO_ERROR_CONFIG;
  return guard([&] {
    std::string text = segorder::cmd_inspect(shard_path, vocab_path, index);
    *text_out = copy_out(text);
    if (!*text_out) throw segorder::DataError("out of memory");
  });
}

sgo_status sgo_vocab_open(const char* path, sgo_vocab** out) {
  if (require_arg(path, "path") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(out, "out") != SGO_OK) return SGO_ERROR_CONFIG;
  return guard([&] {
    auto* h = new sgo_vocab{segorder::load_vocab_file(path)};
    *out = h;
  });
}

void sgo_vocab_close(sgo_vocab* v) { delete v; }

int32_t sgo_vocab_size(const sgo_vocab* v) { return v ? v->v.size() : 0; }

sgo_status sgo_vocab_tokenize(const sgo_vocab* v, const char* text, char** ids_json_out) {
  if (require_arg(v, "vocab") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(text, "text") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(ids_json_out, "ids_json_out") != SGO_OK) return SGO_ERROR_CONFIG;
  return guard([&] {
    segorder::TokenizedSegment toks = segorder::wordpiece_tokenize(text, v->v);
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (int32_t id : toks.token_ids) arr.push_back(id);
    *ids_json_out = copy_out(arr.dump());
    if (!*ids_json_out) throw segorder::DataError("out of memory");
  });
}

sgo_status sgo_shard_open(const char* path, sgo_shard** out) {
  if (require_arg(path, "path") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(out, "out") != SGO_OK) return SGO_ERROR_CONFIG;
  return guard([&] {
    auto* h = new sgo_shard;
    h->samples = segorder::read_shard(path, &h->meta);
    *out = h;
  });
}

void sgo_shard_close(sgo_shard* s) { delete s; }

uint64_t sgo_shard_count(const sgo_shard* s) {
  return s ? static_cast<uint64_t>(s->samples.size()) : 0;
}

sgo_status sgo_shard_sample_json(const sgo_shard* s, uint64_t index, char** json_out) {
  if (require_arg(s, "shard") != SGO_OK) return SGO_ERROR_CONFIG;
  if (require_arg(json_out, "json_out") != SGO_OK) return SGO_ERROR_CONFIG;
  return guard([&] {
    if (index >= s->samples.size()) {
      throw segorder::DataError("sample index " + std::to_string(index) +
                                " out of range; shard holds " +
                                std::to_string(s->samples.size()) + " samples");
    }
    const segorder::PackedSample& p = s->samples[index];
    nlohmann::ordered_json j{{"unit_key", p.unit_key},
                             {"token_ids", p.token_ids},
                             {"word_starts", p.word_starts},
                             {"mlm_labels", p.mlm_labels},
                             {"sep_positions", p.sep_positions},
                             {"so_targets", p.so_targets},
                             {"nsp_label", p.nsp_label},
                             {"segment_labels", p.segment_labels}};
    *json_out = copy_out(j.dump());
    if (!*json_out) throw segorder::DataError("out of memory");
  });
}

}  // extern "C"

// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data/packing.hpp"
#include "data/synth.hpp"
#include "model/model.hpp"
#include "train/optim.hpp"

namespace segorder {

struct PathsConfig {
  std::string out_dir;
  std::string corpus;      // JSONL in (pack/finetune/eval) or out (synth)
  std::string val_corpus;  // labeled validation JSONL
  std::string vocab;       // one token per line
  std::string shard;       // packed samples in (pretrain/eval) or out (pack)
  std::string val_shard;
  std::string checkpoint;  // init (finetune) / model under test (eval)
  std::string resume;      // mid-run checkpoint to continue from
  std::string report;      // eval output JSON
  std::string stats;       // synth stats sidecar; default <corpus>.stats
};

struct TaskConfig {
  std::string objective = "mlm+so";  // mlm+so | mlm-only | mlm+nsp
  std::string split = "val";         // tag recorded in eval reports
  int64_t epochs = 2;
  bool dynamic_sampling = false;
  bool class_weighting = false;
  bool oversampling = false;
  double oversample_factor = 2.0;
  int64_t eval_every = 500;
  int64_t checkpoint_every = 500;
  int64_t threads = 1;
  std::string precision = "f32";  // f32 | f64
};

/// One structured config per run. Sections fill from (defaults <- preset <-
/// file <- dotted overrides); unknown keys anywhere are rejected.
struct RunConfig {
  std::string preset;
  bool has_seed = false;
  uint64_t seed = 0;
  SynthSpec corpus;
  PackingConfig packing;
  bool pack_nsp = false;  // pack next-sentence pairs instead of SO samples
  ModelConfig model;
  OptimizerConfig optimizer;
  TaskConfig task;
  PathsConfig paths;
};

/// Parses and validates a run config for `command` (synth, pack, pretrain,
/// finetune, eval). `file_text` may be empty (defaults only); overrides are
/// dotted key=value pairs, values parsed as JSON with a bare-string
/// fallback. Seed is mandatory for pretrain and finetune.
RunConfig resolve_config(const std::string& command, const std::string& file_text,
                         const std::vector<std::string>& overrides);

/// Fully-resolved echo; feeding it back through resolve_config reproduces
/// the same RunConfig.
nlohmann::ordered_json run_config_json(const RunConfig& rc);

const std::vector<std::string>& preset_names();

}  // namespace segorder

// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "cli/config.hpp"

namespace segorder {

// Command bodies behind the CLI and the C API. Each takes a resolved
// RunConfig, performs the run, writes its artifacts (data files, sidecar
// config echo, metrics log, checkpoints), and returns a JSON report.

nlohmann::ordered_json cmd_synth(const RunConfig& rc);
nlohmann::ordered_json cmd_pack(const RunConfig& rc);
nlohmann::ordered_json cmd_pretrain(const RunConfig& rc);
nlohmann::ordered_json cmd_finetune(const RunConfig& rc);
nlohmann::ordered_json cmd_eval(const RunConfig& rc);

/// Human-readable dump of one stored sample: segments in stored (shuffled)
/// order with restore targets, mask sites, and labels.
std::string cmd_inspect(const std::string& shard_path, const std::string& vocab_path,
                        uint64_t index);

}  // namespace segorder

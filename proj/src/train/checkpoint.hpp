// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "model/model.hpp"

namespace segorder {

/// Checkpoint container: magic "SGCK", version, model config JSON, training
/// cursor (step, epoch, seed, adam_t), then named tensor blocks (name, kind,
/// dtype tag, shape, little-endian row-major payload). The counter-based RNG
/// makes (seed, step, epoch) the complete random state: no generator blobs.
struct CheckpointMeta {
  uint32_t version = 1;
  ModelConfig config;
  uint64_t step = 0;
  uint64_t epoch = 0;
  uint64_t seed = 0;
  uint64_t adam_t = 0;
};

template <class S>
struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor<S>>> params;
  std::vector<std::pair<std::string, Tensor<S>>> adam_m;
  std::vector<std::pair<std::string, Tensor<S>>> adam_v;
};

template <class S>
void write_checkpoint(const std::string& path, const ModelParams<S>& params,
                      const std::vector<Tensor<S>>* adam_m, const std::vector<Tensor<S>>* adam_v,
                      const CheckpointMeta& meta);

template <class S>
Checkpoint<S> read_checkpoint(const std::string& path);

/// Peek at the stored config without loading tensors.
CheckpointMeta read_checkpoint_meta(const std::string& path);

/// Scalar width stored in the file: 4 (float) or 8 (double).
int checkpoint_scalar_bytes(const std::string& path);

/// Resume restore: configs must match exactly; every param tensor and both
/// moment sets must be present with matching shapes. Mismatches list fields.
template <class S>
void apply_checkpoint_strict(const Checkpoint<S>& ckpt, ModelParams<S>& params,
                             std::vector<Tensor<S>>* adam_m, std::vector<Tensor<S>>* adam_v);

/// Transfer restore (fine-tune init): backbone fields (d, layers, heads,
/// ffn_mult, context, max_segments, vocab_size) must match; tensors are
/// copied by name where the target has the same shape, heads absent from the
/// checkpoint keep their fresh init, moments are ignored. Returns the names
/// loaded.
template <class S>
std::vector<std::string> apply_checkpoint_transfer(const Checkpoint<S>& ckpt,
                                                   ModelParams<S>& params);

}  // namespace segorder

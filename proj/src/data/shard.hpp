// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/packing.hpp"

namespace segorder {

/// Shard container: magic "SGSH", format version, vocab fingerprint, context
/// C, creation seed, sample count, then length-prefixed little-endian
/// records. Compatibility (version + fingerprint + C) is validated on read.
struct ShardMeta {
  uint32_t version = 1;
  uint64_t vocab_fingerprint = 0;
  int64_t context = 0;
  uint64_t seed = 0;
  uint64_t count = 0;  // filled by the writer
};

void write_shard(const std::string& path, const std::vector<PackedSample>& samples,
                 ShardMeta meta);

/// Structural read: validates magic, version, and record integrity only.
/// Truncation or overrun reports the byte offset.
std::vector<PackedSample> read_shard(const std::string& path, ShardMeta* meta_out = nullptr);

/// Compatibility read: additionally requires the expected vocabulary
/// fingerprint and context size.
std::vector<PackedSample> read_shard_checked(const std::string& path,
                                             uint64_t expect_fingerprint, int64_t expect_context,
                                             ShardMeta* meta_out = nullptr);

}  // namespace segorder

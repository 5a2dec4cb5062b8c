// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace segorder {

// Error taxonomy maps one-to-one onto the CLI exit codes:
// ConfigError -> 2, DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown keys, invalid ranges, task/head mismatches.
class ConfigError : public Error {
  using Error::Error;
};

// Bad inputs or files: shape mismatches, schema violations, incompatible
// shards/checkpoints, I/O failures.
class DataError : public Error {
  using Error::Error;
};

// Non-finite values or aborted optimization steps.
class NumericError : public Error {
  using Error::Error;
};

// FNV-1a over raw bytes. Used for vocab fingerprints and document-id keys.
inline uint64_t fnv1a64(const void* bytes, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace segorder

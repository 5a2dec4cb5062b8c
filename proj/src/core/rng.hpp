// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace segorder {

// Purpose tags for every RNG consumer in the pipeline. Streams with different
// tags are derived from decorrelated keys, so no consumer can perturb another.
namespace rng_purpose {
inline constexpr std::string_view shuffle = "shuffle";
inline constexpr std::string_view mask_select = "mask-select";
inline constexpr std::string_view mask_branch = "mask-branch";
inline constexpr std::string_view dynamic_l = "dynamic-L";
inline constexpr std::string_view nsp = "nsp";
inline constexpr std::string_view init = "init";
inline constexpr std::string_view order = "order";
inline constexpr std::string_view dropout = "dropout";
inline constexpr std::string_view oversample = "oversample";
inline constexpr std::string_view synth = "synth";
inline constexpr std::string_view fd_coords = "fd-coords";
}  // namespace rng_purpose

/// Counter-based deterministic generator. The key is derived from
/// (global_seed, purpose tag, unit, epoch); identical components always
/// reproduce the same draw sequence and there is no hidden global state.
/// `unit` is typically a document or sample hash.
class RngStream {
 public:
  RngStream(uint64_t global_seed, std::string_view purpose, uint64_t unit = 0, uint64_t epoch = 0);

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double next_double();
  /// Unbiased uniform integer in [0, n); n must be positive.
  uint64_t next_below(uint64_t n);
  /// Standard normal via Box-Muller.
  double next_normal();
  /// Uniform in-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t key() const { return key_; }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0;
};

/// Key mixer used to fold stream components together (splitmix-style
/// finalizer over a hash_combine accumulator).
uint64_t mix_key(uint64_t a, uint64_t b);

}  // namespace segorder

// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "core/rng.hpp"

#include <cmath>
#include <numbers>

#include "core/common.hpp"

namespace segorder {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

uint64_t splitmix_finalize(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t mix_key(uint64_t a, uint64_t b) {
  return splitmix_finalize(a ^ (b + kGolden + (a << 6) + (a >> 2)));
}

RngStream::RngStream(uint64_t global_seed, std::string_view purpose, uint64_t unit,
                     uint64_t epoch) {
  uint64_t k = splitmix_finalize(global_seed + kGolden);
  k = mix_key(k, fnv1a64(purpose.data(), purpose.size()));
  k = mix_key(k, unit);
  k = mix_key(k, epoch);
  key_ = k;
}

uint64_t RngStream::next_u64() {
  counter_ += kGolden;
  return splitmix_finalize(key_ + counter_);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t RngStream::next_below(uint64_t n) {
  if (n == 0) throw DataError("RngStream::next_below: n must be positive");
  // Rejection sampling to stay unbiased.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = next_double();
  while (u1 <= 0.0) u1 = next_double();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace segorder

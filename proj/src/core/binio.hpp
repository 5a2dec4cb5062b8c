// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "core/common.hpp"

namespace segorder {

// Little-endian append/read helpers shared by the shard and checkpoint
// containers. Explicit byte order keeps the formats portable.

inline void put_u8(std::string& b, uint8_t v) { b.push_back(static_cast<char>(v)); }
inline void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_i32(std::string& b, int32_t v) { put_u32(b, static_cast<uint32_t>(v)); }

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;
  std::string what;  // names the container in error messages

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw DataError(what + ": truncated at byte offset " + std::to_string(pos));
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]))
           << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]))
           << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace segorder

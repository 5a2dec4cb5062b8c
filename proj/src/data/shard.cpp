// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "data/shard.hpp"

#include <fstream>

#include "core/binio.hpp"
#include "core/common.hpp"

namespace segorder {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'S', 'H'};
constexpr uint32_t kVersion = 1;

std::string encode_sample(const PackedSample& s) {
  std::string b;
  put_u64(b, s.unit_key);
  put_u32(b, static_cast<uint32_t>(s.token_ids.size()));
  for (int32_t t : s.token_ids) put_i32(b, t);
  for (uint8_t w : s.word_starts) b.push_back(static_cast<char>(w));
  for (int32_t m : s.mlm_labels) put_i32(b, m);
  put_u32(b, static_cast<uint32_t>(s.sep_positions.size()));
  for (int32_t p : s.sep_positions) put_i32(b, p);
  for (int32_t y : s.so_targets) put_i32(b, y);
  b.push_back(static_cast<char>(s.nsp_label));
  b.push_back(s.segment_labels.empty() ? '\0' : '\x01');
  if (!s.segment_labels.empty()) {
    for (const auto& set : s.segment_labels) {
      put_u32(b, static_cast<uint32_t>(set.size()));
      for (int32_t id : set) put_i32(b, id);
    }
  }
  return b;
}

PackedSample decode_sample(ByteReader& r) {
  PackedSample s;
  s.unit_key = r.u64();
  const uint32_t t = r.u32();
  s.token_ids.resize(t);
  for (uint32_t i = 0; i < t; ++i) s.token_ids[i] = r.i32();
  s.word_starts.resize(t);
  for (uint32_t i = 0; i < t; ++i) s.word_starts[i] = r.u8();
  s.mlm_labels.resize(t);
  for (uint32_t i = 0; i < t; ++i) s.mlm_labels[i] = r.i32();
  const uint32_t k = r.u32();
  s.sep_positions.resize(k);
  for (uint32_t i = 0; i < k; ++i) s.sep_positions[i] = r.i32();
  s.so_targets.resize(k);
  for (uint32_t i = 0; i < k; ++i) s.so_targets[i] = r.i32();
  s.nsp_label = static_cast<int8_t>(r.u8());
  const uint8_t has_labels = r.u8();
  if (has_labels) {
    s.segment_labels.resize(k);
    for (uint32_t i = 0; i < k; ++i) {
      const uint32_t n = r.u32();
      s.segment_labels[i].resize(n);
      for (uint32_t j = 0; j < n; ++j) s.segment_labels[i][j] = r.i32();
    }
  }
  return s;
}

}  // namespace

void write_shard(const std::string& path, const std::vector<PackedSample>& samples,
                 ShardMeta meta) {
  meta.count = samples.size();
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, meta.vocab_fingerprint);
  put_u64(out, static_cast<uint64_t>(meta.context));
  put_u64(out, meta.seed);
  put_u64(out, meta.count);
  for (const PackedSample& s : samples) {
    const std::string rec = encode_sample(s);
    put_u64(out, rec.size());
    out += rec;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write shard: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed: " + path);
}

std::vector<PackedSample> read_shard(const std::string& path, ShardMeta* meta_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open shard: " + path);
  std::string buf(std::istreambuf_iterator<char>(f), {});
  ByteReader r{buf, 0, "shard " + path};
  r.need(4);
  if (buf.compare(0, 4, kMagic, 4) != 0)
    throw DataError("shard " + path + ": bad magic (not a shard file)");
  r.pos = 4;
  ShardMeta meta;
  meta.version = r.u32();
  if (meta.version != kVersion)
    throw DataError("shard " + path + ": unsupported version " + std::to_string(meta.version) +
                    " (expected " + std::to_string(kVersion) + ")");
  meta.vocab_fingerprint = r.u64();
  meta.context = static_cast<int64_t>(r.u64());
  meta.seed = r.u64();
  meta.count = r.u64();
  std::vector<PackedSample> samples;
  samples.reserve(meta.count);
  for (uint64_t i = 0; i < meta.count; ++i) {
    const uint64_t len = r.u64();
    const size_t rec_start = r.pos;
    r.need(len);
    samples.push_back(decode_sample(r));
    if (r.pos != rec_start + len)
      throw DataError("shard " + path + ": record " + std::to_string(i) +
                      " length mismatch at byte offset " + std::to_string(r.pos));
  }
  if (r.pos != buf.size())
    throw DataError("shard " + path + ": trailing bytes at offset " + std::to_string(r.pos));
  if (meta_out) *meta_out = meta;
  return samples;
}

std::vector<PackedSample> read_shard_checked(const std::string& path,
                                             uint64_t expect_fingerprint, int64_t expect_context,
                                             ShardMeta* meta_out) {
  ShardMeta meta;
  auto samples = read_shard(path, &meta);
  if (meta.vocab_fingerprint != expect_fingerprint)
    throw DataError("shard " + path + ": vocabulary fingerprint mismatch (shard " +
                    std::to_string(meta.vocab_fingerprint) + ", expected " +
                    std::to_string(expect_fingerprint) + ")");
  if (meta.context != expect_context)
    throw DataError("shard " + path + ": context mismatch (shard " +
                    std::to_string(meta.context) + ", expected " +
                    std::to_string(expect_context) + ")");
  if (meta_out) *meta_out = meta;
  return samples;
}

}  // namespace segorder

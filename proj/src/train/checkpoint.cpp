// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "train/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "core/binio.hpp"
#include "core/common.hpp"

namespace segorder {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <class S>
constexpr uint8_t dtype_tag() {
  return sizeof(S) == 4 ? 1 : 2;
}

template <class S>
void put_tensor(std::string& out, const std::string& name, uint8_t kind, const Tensor<S>& t) {
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.append(name);
  put_u8(out, kind);
  put_u32(out, 2);
  put_u64(out, static_cast<uint64_t>(t.rows()));
  put_u64(out, static_cast<uint64_t>(t.cols()));
  for (S v : t.data) {
    uint64_t bits = 0;
    if constexpr (sizeof(S) == 4) {
      uint32_t b32;
      std::memcpy(&b32, &v, 4);
      put_u32(out, b32);
    } else {
      std::memcpy(&bits, &v, 8);
      put_u64(out, bits);
    }
  }
}

template <class S>
std::pair<std::string, Tensor<S>> read_tensor(ByteReader& r, uint8_t& kind_out) {
  uint32_t name_len = r.u32();
  std::string name = r.bytes(name_len);
  kind_out = r.u8();
  if (kind_out > 2) throw DataError(r.what + ": unknown tensor kind " + std::to_string(kind_out));
  uint32_t rank = r.u32();
  if (rank != 2) throw DataError(r.what + ": tensor '" + name + "' has rank " + std::to_string(rank) + ", expected 2");
  uint64_t rows = r.u64();
  uint64_t cols = r.u64();
  if (rows > (1ULL << 32) || cols > (1ULL << 32) || rows * cols > (1ULL << 34)) {
    throw DataError(r.what + ": tensor '" + name + "' has implausible shape");
  }
  Tensor<S> t(static_cast<int64_t>(rows), static_cast<int64_t>(cols));
  for (S& v : t.data) {
    if constexpr (sizeof(S) == 4) {
      uint32_t bits = r.u32();
      std::memcpy(&v, &bits, 4);
    } else {
      uint64_t bits = r.u64();
      std::memcpy(&v, &bits, 8);
    }
  }
  return {std::move(name), std::move(t)};
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

CheckpointMeta parse_header(ByteReader& r) {
  std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw DataError(r.what + ": bad magic, not a checkpoint file");
  }
  CheckpointMeta meta;
  meta.version = r.u32();
  if (meta.version != kVersion) {
    throw DataError(r.what + ": unsupported checkpoint version " + std::to_string(meta.version));
  }
  uint32_t cfg_len = r.u32();
  std::string cfg_json = r.bytes(cfg_len);
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(cfg_json, nullptr, false);
  if (j.is_discarded()) throw DataError(r.what + ": embedded config is not valid JSON");
  try {
    meta.config = ModelConfig::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(r.what + ": embedded config is malformed: " + e.what());
  }
  meta.step = r.u64();
  meta.epoch = r.u64();
  meta.seed = r.u64();
  meta.adam_t = r.u64();
  return meta;
}

}  // namespace

template <class S>
void write_checkpoint(const std::string& path, const ModelParams<S>& params,
                      const std::vector<Tensor<S>>* adam_m, const std::vector<Tensor<S>>* adam_v,
                      const CheckpointMeta& meta) {
  auto ps = const_cast<ModelParams<S>&>(params).all();
  if (adam_m && adam_m->size() != ps.size()) throw ConfigError("adam_m size does not match parameter count");
  if (adam_v && adam_v->size() != ps.size()) throw ConfigError("adam_v size does not match parameter count");

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  std::string cfg_json = meta.config.to_json().dump();
  put_u32(out, static_cast<uint32_t>(cfg_json.size()));
  out.append(cfg_json);
  put_u64(out, meta.step);
  put_u64(out, meta.epoch);
  put_u64(out, meta.seed);
  put_u64(out, meta.adam_t);
  put_u8(out, dtype_tag<S>());
  uint64_t count = ps.size() * (1 + (adam_m ? 1 : 0) + (adam_v ? 1 : 0));
  put_u64(out, count);
  for (size_t i = 0; i < ps.size(); ++i) {
    put_tensor<S>(out, ps[i]->name, 0, ps[i]->value);
    if (adam_m) put_tensor<S>(out, ps[i]->name, 1, (*adam_m)[i]);
    if (adam_v) put_tensor<S>(out, ps[i]->name, 2, (*adam_v)[i]);
  }

  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint file: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("short write to checkpoint file: " + tmp);
  }
  std::remove(path.c_str());
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot finalize checkpoint file: " + path);
  }
}

template <class S>
Checkpoint<S> read_checkpoint(const std::string& path) {
  std::string buf = read_file_bytes(path);
  ByteReader r{buf, 0, "checkpoint " + path};
  Checkpoint<S> ckpt;
  ckpt.meta = parse_header(r);
  uint8_t tag = r.u8();
  if (tag != dtype_tag<S>()) {
    throw DataError(r.what + ": dtype tag " + std::to_string(tag) + " does not match requested scalar width");
  }
  uint64_t count = r.u64();
  for (uint64_t i = 0; i < count; ++i) {
    uint8_t kind = 0;
    auto named = read_tensor<S>(r, kind);
    if (kind == 0) ckpt.params.push_back(std::move(named));
    else if (kind == 1) ckpt.adam_m.push_back(std::move(named));
    else ckpt.adam_v.push_back(std::move(named));
  }
  if (r.pos != buf.size()) {
    throw DataError(r.what + ": " + std::to_string(buf.size() - r.pos) + " trailing bytes after last tensor");
  }
  return ckpt;
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::string buf = read_file_bytes(path);
  ByteReader r{buf, 0, "checkpoint " + path};
  return parse_header(r);
}

int checkpoint_scalar_bytes(const std::string& path) {
  std::string buf = read_file_bytes(path);
  ByteReader r{buf, 0, "checkpoint " + path};
  parse_header(r);
  uint8_t tag = r.u8();
  if (tag != 1 && tag != 2) throw DataError(r.what + ": unknown dtype tag " + std::to_string(tag));
  return tag == 1 ? 4 : 8;
}

namespace {

template <class S>
const Tensor<S>* find_named(const std::vector<std::pair<std::string, Tensor<S>>>& v,
                            const std::string& name) {
  for (const auto& [n, t] : v) {
    if (n == name) return &t;
  }
  return nullptr;
}

}  // namespace

template <class S>
void apply_checkpoint_strict(const Checkpoint<S>& ckpt, ModelParams<S>& params,
                             std::vector<Tensor<S>>* adam_m, std::vector<Tensor<S>>* adam_v) {
  auto diff = ckpt.meta.config.diff(params.cfg);
  if (!diff.empty()) {
    std::string msg = "checkpoint config does not match run config; differing fields:";
    for (const auto& f : diff) msg += " " + f;
    throw DataError(msg);
  }
  auto ps = params.all();
  for (size_t i = 0; i < ps.size(); ++i) {
    const Tensor<S>* t = find_named<S>(ckpt.params, ps[i]->name);
    if (!t) throw DataError("checkpoint is missing parameter '" + ps[i]->name + "'");
    if (t->rows() != ps[i]->value.rows() || t->cols() != ps[i]->value.cols()) {
      throw DataError("checkpoint parameter '" + ps[i]->name + "' has shape " + std::to_string(t->rows()) + "x" + std::to_string(t->cols()) + ", expected " + std::to_string(ps[i]->value.rows()) + "x" + std::to_string(ps[i]->value.cols()));
    }
    // The container flattens to rows x cols; the live rank (1 vs 2) stays.
    ps[i]->value.data = t->data;
    if (adam_m) {
      const Tensor<S>* m = find_named<S>(ckpt.adam_m, ps[i]->name);
      if (!m) throw DataError("checkpoint is missing first moment for '" + ps[i]->name + "'");
      if (m->data.size() != (*adam_m)[i].data.size()) {
        throw DataError("checkpoint first moment for '" + ps[i]->name + "' has the wrong size");
      }
      (*adam_m)[i].data = m->data;
    }
    if (adam_v) {
      const Tensor<S>* v = find_named<S>(ckpt.adam_v, ps[i]->name);
      if (!v) throw DataError("checkpoint is missing second moment for '" + ps[i]->name + "'");
      if (v->data.size() != (*adam_v)[i].data.size()) {
        throw DataError("checkpoint second moment for '" + ps[i]->name + "' has the wrong size");
      }
      (*adam_v)[i].data = v->data;
    }
  }
}

template <class S>
std::vector<std::string> apply_checkpoint_transfer(const Checkpoint<S>& ckpt,
                                                   ModelParams<S>& params) {
  static const std::set<std::string> backbone = {"d", "layers", "heads", "ffn_mult",
                                                 "context", "max_segments", "vocab_size"};
  std::vector<std::string> bad;
  for (const auto& f : ckpt.meta.config.diff(params.cfg)) {
    if (backbone.count(f)) bad.push_back(f);
  }
  if (!bad.empty()) {
    std::string msg = "checkpoint backbone does not match run config; differing fields:";
    for (const auto& f : bad) msg += " " + f;
    throw DataError(msg);
  }
  std::vector<std::string> loaded;
  for (Param<S>* p : params.all()) {
    const Tensor<S>* t = find_named<S>(ckpt.params, p->name);
    if (!t) continue;
    if (t->rows() != p->value.rows() || t->cols() != p->value.cols()) continue;
    p->value.data = t->data;
    loaded.push_back(p->name);
  }
  return loaded;
}

#define SEGORDER_CKPT_INSTANTIATE(S)                                                            \
  template void write_checkpoint<S>(const std::string&, const ModelParams<S>&,                  \
                                    const std::vector<Tensor<S>>*, const std::vector<Tensor<S>>*, \
                                    const CheckpointMeta&);                                     \
  template Checkpoint<S> read_checkpoint<S>(const std::string&);                               \
  template void apply_checkpoint_strict<S>(const Checkpoint<S>&, ModelParams<S>&,              \
                                           std::vector<Tensor<S>>*, std::vector<Tensor<S>>*);  \
  template std::vector<std::string> apply_checkpoint_transfer<S>(const Checkpoint<S>&,         \
                                                                 ModelParams<S>&);

SEGORDER_CKPT_INSTANTIATE(float)
SEGORDER_CKPT_INSTANTIATE(double)

}  // namespace segorder

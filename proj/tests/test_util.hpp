// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "core/tensor.hpp"
#include "data/corpus.hpp"
#include "data/vocab.hpp"

namespace segorder::testutil {

/// Self-cleaning scratch directory for file-based tests.
class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 1000; ++i) {
      auto p = base / ("segorder-test-" + std::to_string(std::random_device{}()) );
      std::error_code ec;
      if (std::filesystem::create_directory(p, ec)) {
        path_ = p.string();
        return;
      }
    }
    throw std::runtime_error("could not create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return path_ + "/" + name; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Minimal vocabulary: the five specials plus any extra tokens, one id per
/// line in the given order.
inline Vocab make_vocab(const std::vector<std::string>& extra = {}) {
  std::ostringstream os;
  os << "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n";
  for (const auto& t : extra) os << t << "\n";
  std::istringstream in(os.str());
  return load_vocab(in);
}

/// Vocabulary of w0..w<n-1> filler words on top of the specials.
inline Vocab make_word_vocab(int n) {
  std::vector<std::string> extra;
  extra.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) extra.push_back("w" + std::to_string(i));
  return make_vocab(extra);
}

/// Document with the given per-segment token counts, words drawn round-robin
/// from w0..w<words-1>.
inline Document make_doc(const std::string& id, const std::vector<int>& segment_tokens,
                         int words = 20) {
  Document doc;
  doc.id = id;
  int w = 0;
  for (int len : segment_tokens) {
    Segment s;
    std::ostringstream os;
    for (int i = 0; i < len; ++i) {
      if (i) os << ' ';
      os << 'w' << (w++ % words);
    }
    s.text = os.str();
    doc.segments.push_back(std::move(s));
  }
  return doc;
}

template <class S>
Tensor<S> random_tensor(std::vector<int64_t> shape, std::mt19937& rng, double scale = 1.0) {
  Tensor<S> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : t.data) v = static_cast<S>(dist(rng));
  return t;
}

template <class S>
bool tensors_close(const Tensor<S>& a, const Tensor<S>& b, double tol) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i) {
    if (std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])) > tol)
      return false;
  }
  return true;
}

}  // namespace segorder::testutil

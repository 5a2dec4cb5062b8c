// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace segorder {

/// Dense row-major tensor. Rank is dynamic; rank 1 and 2 cover everything
/// this model family needs. Training runs in float, gradient certification
/// in double, so all numeric code is templated on the scalar type.
template <class S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> sh) : shape(std::move(sh)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }
  Tensor(int64_t r, int64_t c) : Tensor(std::vector<int64_t>{r, c}) {}

  static int64_t numel_of(const std::vector<int64_t>& sh) {
    int64_t n = 1;
    for (int64_t e : sh) n *= e;
    return n;
  }

  static Tensor zeros(std::vector<int64_t> sh) { return Tensor(std::move(sh)); }
  static Tensor full(std::vector<int64_t> sh, S v) {
    Tensor t(std::move(sh));
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(S v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }
  static Tensor from(std::vector<int64_t> sh, std::vector<S> values) {
    Tensor t;
    t.shape = std::move(sh);
    t.data = std::move(values);
    if (numel_of(t.shape) != static_cast<int64_t>(t.data.size()))
      throw DataError("tensor: shape " + t.shape_str() + " does not match " +
                      std::to_string(t.data.size()) + " values");
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t rows() const { return rank() == 2 ? shape[0] : 1; }
  int64_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

  S* row(int64_t r) { return data.data() + r * cols(); }
  const S* row(int64_t r) const { return data.data() + r * cols(); }
  S& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  S at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(S v) {
    for (auto& x : data) x = v;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }
};

// GEMM kernels, row-major. `accumulate` adds into c instead of overwriting.
// c[m x n] = a[m x k] * b[k x n]
template <class S>
void gemm_nn(int64_t m, int64_t k, int64_t n, const S* a, const S* b, S* c, bool accumulate);
// c[m x n] = a[m x k] * b[n x k]^T
template <class S>
void gemm_nt(int64_t m, int64_t k, int64_t n, const S* a, const S* b, S* c, bool accumulate);
// c[k x n] = a[m x k]^T * b[m x n]
template <class S>
void gemm_tn(int64_t m, int64_t k, int64_t n, const S* a, const S* b, S* c, bool accumulate);

// Tensor-level wrappers; dims derive from operand shapes.
template <class S>
inline void gemm_nn(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>& c, bool accumulate) {
  gemm_nn(a.rows(), a.cols(), b.cols(), a.data.data(), b.data.data(), c.data.data(), accumulate);
}
template <class S>
inline void gemm_nt(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>& c, bool accumulate) {
  gemm_nt(a.rows(), a.cols(), b.rows(), a.data.data(), b.data.data(), c.data.data(), accumulate);
}
template <class S>
inline void gemm_tn(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>& c, bool accumulate) {
  gemm_tn(a.rows(), a.cols(), b.cols(), a.data.data(), b.data.data(), c.data.data(), accumulate);
}

/// Plain value-level matrix product with shape checking.
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

/// Row-wise softmax with per-row max subtraction. Rows sum to 1 and all
/// entries are strictly positive for finite input.
template <class S>
Tensor<S> softmax_rows_value(const Tensor<S>& m);

/// Row-wise log-softmax (max-subtracted, fused log-sum-exp).
template <class S>
Tensor<S> log_softmax_rows_value(const Tensor<S>& m);

enum class Reduction { sum, mean };

/// Negative log-likelihood from an already-stochastic probability matrix.
/// No mean reduction unless requested.
template <class S>
double nll_from_probs(const Tensor<S>& probs, std::span<const int32_t> targets,
                      Reduction red = Reduction::sum);

template <class S>
void check_finite(const Tensor<S>& t, const std::string& what);

}  // namespace segorder

// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "core/tensor.hpp"

#include <algorithm>
#include <cstring>

namespace segorder {

template <class S>
void gemm_nn(int64_t m, int64_t k, int64_t n, const S* a, const S* b, S* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, static_cast<size_t>(m * n) * sizeof(S));
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const S s = arow[p];
      if (s == S(0)) continue;
      const S* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

template <class S>
void gemm_nt(int64_t m, int64_t k, int64_t n, const S* a, const S* b, S* c, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const S* brow = b + j * k;
      S acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

template <class S>
void gemm_tn(int64_t m, int64_t k, int64_t n, const S* a, const S* b, S* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, static_cast<size_t>(k * n) * sizeof(S));
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    const S* brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const S s = arow[p];
      if (s == S(0)) continue;
      S* crow = c + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DataError("matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
  Tensor<S> out(a.dim(0), b.dim(1));
  gemm_nn(a.dim(0), a.dim(1), b.dim(1), a.data.data(), b.data.data(), out.data.data(), false);
  return out;
}

template <class S>
Tensor<S> softmax_rows_value(const Tensor<S>& m) {
  check_finite(m, "softmax input");
  Tensor<S> out = m;
  const int64_t r = m.rows(), c = m.cols();
  for (int64_t i = 0; i < r; ++i) {
    S* row = out.row(i);
    S mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    S sum = 0;
    for (int64_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int64_t j = 0; j < c; ++j) row[j] /= sum;
  }
  return out;
}

template <class S>
Tensor<S> log_softmax_rows_value(const Tensor<S>& m) {
  check_finite(m, "log_softmax input");
  Tensor<S> out = m;
  const int64_t r = m.rows(), c = m.cols();
  for (int64_t i = 0; i < r; ++i) {
    S* row = out.row(i);
    S mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    S sum = 0;
    for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    const S lse = mx + std::log(sum);
    for (int64_t j = 0; j < c; ++j) row[j] -= lse;
  }
  return out;
}

template <class S>
double nll_from_probs(const Tensor<S>& probs, std::span<const int32_t> targets, Reduction red) {
  const int64_t n = probs.rows(), c = probs.cols();
  if (static_cast<int64_t>(targets.size()) != n)
    throw DataError("nll_from_probs: " + std::to_string(targets.size()) + " targets for " +
                    std::to_string(n) + " rows");
  double loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const int32_t t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= c)
      throw DataError("nll_from_probs: target " + std::to_string(t) + " out of range [0," +
                      std::to_string(c) + ")");
    loss -= std::log(static_cast<double>(probs.at(i, t)));
  }
  if (red == Reduction::mean && n > 0) loss /= static_cast<double>(n);
  return loss;
}

template <class S>
void check_finite(const Tensor<S>& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError("non-finite values in " + what);
}

#define SEGORDER_INSTANTIATE(S)                                                               \
  template void gemm_nn<S>(int64_t, int64_t, int64_t, const S*, const S*, S*, bool);          \
  template void gemm_nt<S>(int64_t, int64_t, int64_t, const S*, const S*, S*, bool);          \
  template void gemm_tn<S>(int64_t, int64_t, int64_t, const S*, const S*, S*, bool);          \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                           \
  template Tensor<S> softmax_rows_value<S>(const Tensor<S>&);                                 \
  template Tensor<S> log_softmax_rows_value<S>(const Tensor<S>&);                             \
  template double nll_from_probs<S>(const Tensor<S>&, std::span<const int32_t>, Reduction);   \
  template void check_finite<S>(const Tensor<S>&, const std::string&);

SEGORDER_INSTANTIATE(float)
SEGORDER_INSTANTIATE(double)
#undef SEGORDER_INSTANTIATE

}  // namespace segorder

// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/graph.hpp"
#include "core/tensor.hpp"

namespace segorder {

struct OptimizerConfig {
  double peak_lr = 1e-4;
  double weight_decay = 0.01;
  double clip_threshold = 1.0;
  std::string clip_mode = "norm";  // norm | value | none
  double warmup_fraction = 0.10;
  int64_t total_steps = 0;
  int64_t batch_size = 16;
  int64_t accumulation_steps = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  int64_t warmup_steps() const {
    return static_cast<int64_t>(warmup_fraction * static_cast<double>(total_steps));
  }
  void validate() const;
};

/// Piecewise-linear schedule: 0 -> peak over the first warmup_fraction of
/// steps (1-based; peak hit exactly at step == warmup), then linear to 0 at
/// total_steps; clamps to 0 past the end.
double lr_at(int64_t step, const OptimizerConfig& cfg);

/// Global-norm ("norm") or elementwise ("value") clipping in place. Returns
/// the scale factor applied (norm mode) or 1.0.
template <class S>
double clip_gradients(std::vector<Tensor<S>>& grads, double threshold,
                      const std::string& mode);

/// Decoupled-decay Adam. Weight decay multiplies parameters directly before
/// the moment update; layer-norm and bias tensors (no_decay) are exempt.
template <class S>
class AdamW {
 public:
  AdamW(std::vector<Param<S>*> params, OptimizerConfig cfg);

  /// One update with externally supplied (already clipped) gradients aligned
  /// with the params order. Throws NumericError on non-finite gradients,
  /// naming the parameter.
  void step(const std::vector<Tensor<S>>& grads, double lr);

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  std::vector<Tensor<S>>& moment1() { return m_; }
  std::vector<Tensor<S>>& moment2() { return v_; }
  const std::vector<Param<S>*>& params() const { return params_; }

 private:
  std::vector<Param<S>*> params_;
  OptimizerConfig cfg_;
  std::vector<Tensor<S>> m_, v_;
  int64_t t_ = 0;  // completed updates, drives bias correction
};

extern template class AdamW<float>;
extern template class AdamW<double>;
extern template double clip_gradients<float>(std::vector<Tensor<float>>&, double,
                                             const std::string&);
extern template double clip_gradients<double>(std::vector<Tensor<double>>&, double,
                                              const std::string&);

}  // namespace segorder

// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/graph.hpp"
#include "core/tensor.hpp"

namespace segorder {

struct FdOptions {
  double eps = 1e-5;        // base step scale; actual step is eps * max(1, |value|)
  size_t max_coords = 256;  // coordinates sampled per tensor when it is larger
  uint64_t seed = 0;        // seeds the coordinate subsample
  // Coordinates whose base-step error exceeds this are re-estimated at
  // 0.1x, 10x, 100x, and 1000x the base step; the smallest error wins.
  double refine_above = 1e-5;
};

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_coord;        // "<param>[i]" of the worst coordinate
  size_t coords_checked = 0;
  bool eval_deterministic = true; // loss() twice on identical params agreed bitwise
};

/// Central-difference certification of analytic gradients.
/// `loss` must re-evaluate the objective from current param values with no
/// hidden state (same inputs, same masks). `analytic[i]` is the gradient for
/// `params[i]` as produced by the autodiff backward pass. Relative error per
/// coordinate is |a-n| / max(|a|,|n|,1e-8); the report keeps the maximum.
template <class S>
FdReport finite_difference_check(const std::vector<Param<S>*>& params,
                                 const std::vector<Tensor<S>>& analytic,
                                 const std::function<double()>& loss,
                                 const FdOptions& opt = {});

}  // namespace segorder

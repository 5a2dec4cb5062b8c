// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace segorder {

/// Named trainable tensor. `no_decay` marks layer-norm and bias parameters,
/// which AdamW exempts from weight decay. Gradients are harvested from the
/// graph after backward, never written here by the graph itself, so forward
/// passes over shared parameters are safe to run in parallel.
template <class S>
struct Param {
  std::string name;
  Tensor<S> value;
  bool no_decay = false;
};

/// Reverse-mode tape. One graph per forward pass; nodes are created in
/// topological order and replayed in reverse by backward(). Scalar roots
/// only. A Param added twice resolves to the same node, which is what makes
/// weight tying (MLM head = token embedding) come out right.
template <class S>
class Graph {
 public:
  using Id = int32_t;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Id constant(Tensor<S> t);
  Id param(const Param<S>& p);

  // Elementwise / affine.
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id affine(Id a, S scale, S shift);
  Id scale(Id a, S c) { return affine(a, c, S(0)); }
  Id add_bias_rows(Id x, Id bias);  // bias: rank-1 [n] broadcast over rows

  // Linear algebra.
  Id matmul(Id a, Id b);     // [m x k] * [k x n]
  Id matmul_nt(Id a, Id b);  // [m x k] * [n x k]^T

  // Structure.
  Id rows_gather(Id x, std::vector<int64_t> indices);
  Id slice_cols(Id x, int64_t c0, int64_t c1);
  Id concat_cols(std::span<const Id> parts);
  Id concat_rows(std::span<const Id> parts);

  // Nonlinearities.
  Id gelu(Id x);  // tanh approximation, fixed choice for this library
  Id sigmoid(Id x);
  Id tanh_act(Id x);
  Id softmax_rows(Id x);
  Id layer_norm(Id x, Id gamma, Id beta, S eps);

  // Losses and reductions (scalar outputs, shape [1]).
  Id sum_all(Id x);
  Id mean_all(Id x);
  /// Fused log-softmax + NLL on logits rows; avoids log(0) by construction.
  Id cross_entropy_rows(Id logits, std::vector<int32_t> targets, Reduction red);
  /// Class-weighted binary cross-entropy with logits, mean over all entries.
  /// `weights` may be empty (all ones) or rank-1 [n].
  Id bce_logits(Id logits, Tensor<S> targets01, Tensor<S> weights);

  /// Inverted dropout; draws the keep mask immediately from `rng`.
  /// rate 0 is the identity.
  Id dropout(Id x, double rate, RngStream& rng);

  void backward(Id root);

  const Tensor<S>& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
  /// Gradient of the last backward() root w.r.t. node `id` (zeros if unused).
  Tensor<S> grad(Id id) const;
  /// Gradient w.r.t. a parameter; zeros-shaped if the param is not in this graph.
  Tensor<S> param_grad(const Param<S>& p) const;
  bool has_param(const Param<S>& p) const { return param_ids_.count(&p) != 0; }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // allocated during backward
    bool needs_grad = false;
    std::function<void(Graph&)> backprop;
  };

  Id new_node(Tensor<S> value, bool needs_grad, std::function<void(Graph&)> backprop);
  Tensor<S>& grad_buf(Id id);
  const Tensor<S>& v(Id id) const { return nodes_[static_cast<size_t>(id)].value; }

  std::vector<Node> nodes_;
  std::unordered_map<const Param<S>*, Id> param_ids_;
  bool ran_backward_ = false;
};

// Value-level gelu shared by the graph and by plain inference paths.
// gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <class S>
S gelu_value(S x);
template <class S>
S gelu_derivative(S x);

}  // namespace segorder

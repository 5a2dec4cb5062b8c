// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "core/graph.hpp"

#include <cmath>
#include <numbers>

#include "core/common.hpp"

namespace segorder {

template <class S>
S gelu_value(S x) {
  const S c = static_cast<S>(0.7978845608028653558798921198687);  // sqrt(2/pi)
  const S a = static_cast<S>(0.044715);
  const S u = c * (x + a * x * x * x);
  return static_cast<S>(0.5) * x * (S(1) + std::tanh(u));
}

template <class S>
S gelu_derivative(S x) {
  const S c = static_cast<S>(0.7978845608028653558798921198687);
  const S a = static_cast<S>(0.044715);
  const S u = c * (x + a * x * x * x);
  const S t = std::tanh(u);
  const S du = c * (S(1) + S(3) * a * x * x);
  return static_cast<S>(0.5) * (S(1) + t) + static_cast<S>(0.5) * x * (S(1) - t * t) * du;
}

template <class S>
typename Graph<S>::Id Graph<S>::new_node(Tensor<S> value, bool needs_grad,
                                         std::function<void(Graph&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <class S>
Tensor<S>& Graph<S>::grad_buf(Id id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.data.empty()) n.grad = Tensor<S>::zeros(n.value.shape);
  return n.grad;
}

template <class S>
Tensor<S> Graph<S>::grad(Id id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.data.empty()) return Tensor<S>::zeros(n.value.shape);
  return n.grad;
}

template <class S>
Tensor<S> Graph<S>::param_grad(const Param<S>& p) const {
  auto it = param_ids_.find(&p);
  if (it == param_ids_.end()) return Tensor<S>::zeros(p.value.shape);
  return grad(it->second);
}

template <class S>
typename Graph<S>::Id Graph<S>::constant(Tensor<S> t) {
  return new_node(std::move(t), false, {});
}

template <class S>
typename Graph<S>::Id Graph<S>::param(const Param<S>& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return it->second;
  Id id = new_node(p.value, true, {});  // leaf: gradient read back via param_grad
  param_ids_.emplace(&p, id);
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::add(Id a, Id b) {
  const Tensor<S>& va = v(a);
  const Tensor<S>& vb = v(b);
  if (!va.same_shape(vb))
    throw DataError("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  Tensor<S> out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [a, b, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      if (g.nodes_[a].needs_grad) {
        Tensor<S>& ga = g.grad_buf(a);
        for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
      }
      if (g.nodes_[b].needs_grad) {
        Tensor<S>& gb = g.grad_buf(b);
        for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i];
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::sub(Id a, Id b) {
  const Tensor<S>& va = v(a);
  const Tensor<S>& vb = v(b);
  if (!va.same_shape(vb))
    throw DataError("sub: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  Tensor<S> out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [a, b, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      if (g.nodes_[a].needs_grad) {
        Tensor<S>& ga = g.grad_buf(a);
        for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
      }
      if (g.nodes_[b].needs_grad) {
        Tensor<S>& gb = g.grad_buf(b);
        for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] -= go.data[i];
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::mul(Id a, Id b) {
  const Tensor<S>& va = v(a);
  const Tensor<S>& vb = v(b);
  if (!va.same_shape(vb))
    throw DataError("mul: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  Tensor<S> out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [a, b, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      if (g.nodes_[a].needs_grad) {
        Tensor<S>& ga = g.grad_buf(a);
        const Tensor<S>& vb2 = g.v(b);
        for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * vb2.data[i];
      }
      if (g.nodes_[b].needs_grad) {
        Tensor<S>& gb = g.grad_buf(b);
        const Tensor<S>& va2 = g.v(a);
        for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i] * va2.data[i];
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::affine(Id a, S scale, S shift) {
  Tensor<S> out = v(a);
  for (auto& x : out.data) x = x * scale + shift;
  bool ng = nodes_[a].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [a, scale, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      Tensor<S>& ga = g.grad_buf(a);
      for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * scale;
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::add_bias_rows(Id x, Id bias) {
  const Tensor<S>& vx = v(x);
  const Tensor<S>& vb = v(bias);
  if (vx.rank() != 2 || vb.rank() != 1 || vb.dim(0) != vx.cols())
    throw DataError("add_bias_rows: incompatible " + vx.shape_str() + " and " + vb.shape_str());
  Tensor<S> out = vx;
  const int64_t m = vx.rows(), n = vx.cols();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.data[static_cast<size_t>(i * n + j)] += vb.data[static_cast<size_t>(j)];
  bool ng = nodes_[x].needs_grad || nodes_[bias].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, bias, id, m, n](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      if (g.nodes_[x].needs_grad) {
        Tensor<S>& gx = g.grad_buf(x);
        for (size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i];
      }
      if (g.nodes_[bias].needs_grad) {
        Tensor<S>& gb = g.grad_buf(bias);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            gb.data[static_cast<size_t>(j)] += go.data[static_cast<size_t>(i * n + j)];
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::matmul(Id a, Id b) {
  const Tensor<S>& va = v(a);
  const Tensor<S>& vb = v(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows())
    throw DataError("matmul: incompatible " + va.shape_str() + " and " + vb.shape_str());
  Tensor<S> out = Tensor<S>::zeros({va.rows(), vb.cols()});
  gemm_nn(va, vb, out, false);
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [a, b, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      if (g.nodes_[a].needs_grad) gemm_nt(go, g.v(b), g.grad_buf(a), true);
      if (g.nodes_[b].needs_grad) gemm_tn(g.v(a), go, g.grad_buf(b), true);
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::matmul_nt(Id a, Id b) {
  const Tensor<S>& va = v(a);
  const Tensor<S>& vb = v(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.cols())
    throw DataError("matmul_nt: incompatible " + va.shape_str() + " and " + vb.shape_str());
  Tensor<S> out = Tensor<S>::zeros({va.rows(), vb.rows()});
  gemm_nt(va, vb, out, false);
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [a, b, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      if (g.nodes_[a].needs_grad) gemm_nn(go, g.v(b), g.grad_buf(a), true);
      if (g.nodes_[b].needs_grad) gemm_tn(go, g.v(a), g.grad_buf(b), true);
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::rows_gather(Id x, std::vector<int64_t> indices) {
  const Tensor<S>& vx = v(x);
  if (vx.rank() != 2) throw DataError("rows_gather: need rank-2, got " + vx.shape_str());
  const int64_t n = vx.cols();
  Tensor<S> out = Tensor<S>::zeros({static_cast<int64_t>(indices.size()), n});
  for (size_t i = 0; i < indices.size(); ++i) {
    int64_t r = indices[i];
    if (r < 0 || r >= vx.rows())
      throw DataError("rows_gather: index " + std::to_string(r) + " out of [0," +
                      std::to_string(vx.rows()) + ")");
    for (int64_t j = 0; j < n; ++j)
      out.data[i * static_cast<size_t>(n) + static_cast<size_t>(j)] =
          vx.data[static_cast<size_t>(r * n + j)];
  }
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id, idx = std::move(indices), n](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      Tensor<S>& gx = g.grad_buf(x);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t j = 0; j < n; ++j)
          gx.data[static_cast<size_t>(idx[i] * n + j)] +=
              go.data[i * static_cast<size_t>(n) + static_cast<size_t>(j)];
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::slice_cols(Id x, int64_t c0, int64_t c1) {
  const Tensor<S>& vx = v(x);
  if (vx.rank() != 2 || c0 < 0 || c1 > vx.cols() || c0 >= c1)
    throw DataError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                    ") for " + vx.shape_str());
  const int64_t m = vx.rows(), n = vx.cols(), w = c1 - c0;
  Tensor<S> out = Tensor<S>::zeros({m, w});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < w; ++j)
      out.data[static_cast<size_t>(i * w + j)] = vx.data[static_cast<size_t>(i * n + c0 + j)];
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id, c0, m, n, w](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      Tensor<S>& gx = g.grad_buf(x);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < w; ++j)
          gx.data[static_cast<size_t>(i * n + c0 + j)] += go.data[static_cast<size_t>(i * w + j)];
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::concat_cols(std::span<const Id> parts) {
  if (parts.empty()) throw DataError("concat_cols: empty input");
  const int64_t m = v(parts[0]).rows();
  int64_t total = 0;
  bool ng = false;
  for (Id p : parts) {
    const Tensor<S>& vp = v(p);
    if (vp.rank() != 2 || vp.rows() != m)
      throw DataError("concat_cols: row mismatch at " + vp.shape_str());
    total += vp.cols();
    ng = ng || nodes_[p].needs_grad;
  }
  Tensor<S> out = Tensor<S>::zeros({m, total});
  int64_t off = 0;
  for (Id p : parts) {
    const Tensor<S>& vp = v(p);
    const int64_t w = vp.cols();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j)
        out.data[static_cast<size_t>(i * total + off + j)] = vp.data[static_cast<size_t>(i * w + j)];
    off += w;
  }
  std::vector<Id> ids(parts.begin(), parts.end());
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [id, ids = std::move(ids), m, total](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      int64_t off2 = 0;
      for (Id p : ids) {
        const int64_t w = g.v(p).cols();
        if (g.nodes_[p].needs_grad) {
          Tensor<S>& gp = g.grad_buf(p);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j)
              gp.data[static_cast<size_t>(i * w + j)] +=
                  go.data[static_cast<size_t>(i * total + off2 + j)];
        }
        off2 += w;
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::concat_rows(std::span<const Id> parts) {
  if (parts.empty()) throw DataError("concat_rows: empty input");
  const int64_t n = v(parts[0]).cols();
  int64_t total = 0;
  bool ng = false;
  for (Id p : parts) {
    const Tensor<S>& vp = v(p);
    if (vp.rank() != 2 || vp.cols() != n)
      throw DataError("concat_rows: col mismatch at " + vp.shape_str());
    total += vp.rows();
    ng = ng || nodes_[p].needs_grad;
  }
  Tensor<S> out = Tensor<S>::zeros({total, n});
  int64_t off = 0;
  for (Id p : parts) {
    const Tensor<S>& vp = v(p);
    std::copy(vp.data.begin(), vp.data.end(), out.data.begin() + static_cast<size_t>(off * n));
    off += vp.rows();
  }
  std::vector<Id> ids(parts.begin(), parts.end());
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [id, ids = std::move(ids), n](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      int64_t off2 = 0;
      for (Id p : ids) {
        const int64_t m = g.v(p).rows();
        if (g.nodes_[p].needs_grad) {
          Tensor<S>& gp = g.grad_buf(p);
          for (size_t i = 0; i < gp.data.size(); ++i)
            gp.data[i] += go.data[static_cast<size_t>(off2 * n) + i];
        }
        off2 += m;
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::gelu(Id x) {
  const Tensor<S>& vx = v(x);
  Tensor<S> out = vx;
  for (auto& e : out.data) e = gelu_value(e);
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      const Tensor<S>& vx2 = g.v(x);
      Tensor<S>& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.data.size(); ++i)
        gx.data[i] += go.data[i] * gelu_derivative(vx2.data[i]);
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::sigmoid(Id x) {
  const Tensor<S>& vx = v(x);
  Tensor<S> out = vx;
  for (auto& e : out.data) e = S(1) / (S(1) + std::exp(-e));
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      const Tensor<S>& s = g.v(id);
      Tensor<S>& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.data.size(); ++i)
        gx.data[i] += go.data[i] * s.data[i] * (S(1) - s.data[i]);
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::tanh_act(Id x) {
  const Tensor<S>& vx = v(x);
  Tensor<S> out = vx;
  for (auto& e : out.data) e = std::tanh(e);
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      const Tensor<S>& t = g.v(id);
      Tensor<S>& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.data.size(); ++i)
        gx.data[i] += go.data[i] * (S(1) - t.data[i] * t.data[i]);
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::softmax_rows(Id x) {
  const Tensor<S>& vx = v(x);
  if (vx.rank() != 2) throw DataError("softmax_rows: need rank-2, got " + vx.shape_str());
  Tensor<S> out = softmax_rows_value(vx);
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      const Tensor<S>& s = g.v(id);
      Tensor<S>& gx = g.grad_buf(x);
      const int64_t m = s.rows(), n = s.cols();
      for (int64_t i = 0; i < m; ++i) {
        S dot = S(0);
        for (int64_t j = 0; j < n; ++j) {
          size_t k = static_cast<size_t>(i * n + j);
          dot += go.data[k] * s.data[k];
        }
        for (int64_t j = 0; j < n; ++j) {
          size_t k = static_cast<size_t>(i * n + j);
          gx.data[k] += s.data[k] * (go.data[k] - dot);
        }
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::layer_norm(Id x, Id gamma, Id beta, S eps) {
  const Tensor<S>& vx = v(x);
  const Tensor<S>& vg = v(gamma);
  const Tensor<S>& vb = v(beta);
  if (vx.rank() != 2 || vg.rank() != 1 || vb.rank() != 1 || vg.dim(0) != vx.cols() ||
      vb.dim(0) != vx.cols())
    throw DataError("layer_norm: incompatible shapes " + vx.shape_str() + ", " + vg.shape_str() +
                    ", " + vb.shape_str());
  const int64_t m = vx.rows(), n = vx.cols();
  Tensor<S> out = Tensor<S>::zeros({m, n});
  std::vector<S> mean(static_cast<size_t>(m)), rstd(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    S mu = S(0);
    for (int64_t j = 0; j < n; ++j) mu += vx.data[static_cast<size_t>(i * n + j)];
    mu /= static_cast<S>(n);
    S var = S(0);
    for (int64_t j = 0; j < n; ++j) {
      S d = vx.data[static_cast<size_t>(i * n + j)] - mu;
      var += d * d;
    }
    var /= static_cast<S>(n);
    S rs = S(1) / std::sqrt(var + eps);
    mean[static_cast<size_t>(i)] = mu;
    rstd[static_cast<size_t>(i)] = rs;
    for (int64_t j = 0; j < n; ++j) {
      size_t k = static_cast<size_t>(i * n + j);
      out.data[k] = vg.data[static_cast<size_t>(j)] * (vx.data[k] - mu) * rs +
                    vb.data[static_cast<size_t>(j)];
    }
  }
  bool ng = nodes_[x].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, gamma, beta, id, m, n, mean = std::move(mean),
                           rstd = std::move(rstd)](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      const Tensor<S>& vx2 = g.v(x);
      const Tensor<S>& vg2 = g.v(gamma);
      for (int64_t i = 0; i < m; ++i) {
        const S mu = mean[static_cast<size_t>(i)];
        const S rs = rstd[static_cast<size_t>(i)];
        if (g.nodes_[gamma].needs_grad || g.nodes_[beta].needs_grad) {
          for (int64_t j = 0; j < n; ++j) {
            size_t k = static_cast<size_t>(i * n + j);
            S xh = (vx2.data[k] - mu) * rs;
            if (g.nodes_[gamma].needs_grad)
              g.grad_buf(gamma).data[static_cast<size_t>(j)] += go.data[k] * xh;
            if (g.nodes_[beta].needs_grad)
              g.grad_buf(beta).data[static_cast<size_t>(j)] += go.data[k];
          }
        }
        if (g.nodes_[x].needs_grad) {
          // dx = rs * (dxh - mean(dxh) - xh * mean(dxh * xh)), dxh = dy * gamma
          S mean_dxh = S(0), mean_dxh_xh = S(0);
          for (int64_t j = 0; j < n; ++j) {
            size_t k = static_cast<size_t>(i * n + j);
            S xh = (vx2.data[k] - mu) * rs;
            S dxh = go.data[k] * vg2.data[static_cast<size_t>(j)];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh;
          }
          mean_dxh /= static_cast<S>(n);
          mean_dxh_xh /= static_cast<S>(n);
          Tensor<S>& gx = g.grad_buf(x);
          for (int64_t j = 0; j < n; ++j) {
            size_t k = static_cast<size_t>(i * n + j);
            S xh = (vx2.data[k] - mu) * rs;
            S dxh = go.data[k] * vg2.data[static_cast<size_t>(j)];
            gx.data[k] += rs * (dxh - mean_dxh - xh * mean_dxh_xh);
          }
        }
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::sum_all(Id x) {
  const Tensor<S>& vx = v(x);
  S acc = S(0);
  for (S e : vx.data) acc += e;
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(Tensor<S>::scalar(acc), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id](Graph& g) {
      const S go = g.nodes_[id].grad.data[0];
      Tensor<S>& gx = g.grad_buf(x);
      for (auto& e : gx.data) e += go;
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::mean_all(Id x) {
  const Tensor<S>& vx = v(x);
  if (vx.data.empty()) throw DataError("mean_all: empty tensor");
  S acc = S(0);
  for (S e : vx.data) acc += e;
  const S inv = S(1) / static_cast<S>(vx.data.size());
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(Tensor<S>::scalar(acc * inv), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id, inv](Graph& g) {
      const S go = g.nodes_[id].grad.data[0] * inv;
      Tensor<S>& gx = g.grad_buf(x);
      for (auto& e : gx.data) e += go;
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::cross_entropy_rows(Id logits, std::vector<int32_t> targets,
                                                   Reduction red) {
  const Tensor<S>& vl = v(logits);
  if (vl.rank() != 2) throw DataError("cross_entropy_rows: need rank-2 logits");
  const int64_t m = vl.rows(), n = vl.cols();
  if (static_cast<int64_t>(targets.size()) != m)
    throw DataError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                    std::to_string(m) + " rows");
  Tensor<S> lsm = log_softmax_rows_value(vl);
  S loss = S(0);
  for (int64_t i = 0; i < m; ++i) {
    int32_t t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= n)
      throw DataError("cross_entropy_rows: target " + std::to_string(t) + " outside [0," +
                      std::to_string(n) + ")");
    loss -= lsm.data[static_cast<size_t>(i * n + t)];
  }
  const S coef = (red == Reduction::mean) ? S(1) / static_cast<S>(m) : S(1);
  loss *= coef;
  bool ng = nodes_[logits].needs_grad;
  Id id = new_node(Tensor<S>::scalar(loss), ng, {});
  if (ng) {
    // probs recovered from the captured log-softmax keeps backward exact.
    nodes_[id].backprop = [logits, id, tg = std::move(targets), lsm = std::move(lsm), coef, m,
                           n](Graph& g) {
      const S go = g.nodes_[id].grad.data[0] * coef;
      Tensor<S>& gl = g.grad_buf(logits);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          size_t k = static_cast<size_t>(i * n + j);
          S p = std::exp(lsm.data[k]);
          S delta = (j == tg[static_cast<size_t>(i)]) ? S(1) : S(0);
          gl.data[k] += go * (p - delta);
        }
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::bce_logits(Id logits, Tensor<S> targets01, Tensor<S> weights) {
  const Tensor<S>& vl = v(logits);
  if (!vl.same_shape(targets01))
    throw DataError("bce_logits: logits " + vl.shape_str() + " vs targets " +
                    targets01.shape_str());
  if (vl.rank() != 2) throw DataError("bce_logits: need rank-2 logits");
  const int64_t m = vl.rows(), n = vl.cols();
  if (!weights.data.empty() && (weights.rank() != 1 || weights.dim(0) != n))
    throw DataError("bce_logits: weights " + weights.shape_str() + " must be [" +
                    std::to_string(n) + "]");
  const S inv = S(1) / static_cast<S>(m * n);
  S loss = S(0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      size_t k = static_cast<size_t>(i * n + j);
      const S z = vl.data[k];
      const S t = targets01.data[k];
      const S w = weights.data.empty() ? S(1) : weights.data[static_cast<size_t>(j)];
      // stable: max(z,0) - z*t + log(1 + exp(-|z|))
      loss += w * (std::max(z, S(0)) - z * t + std::log1p(std::exp(-std::abs(z))));
    }
  }
  loss *= inv;
  bool ng = nodes_[logits].needs_grad;
  Id id = new_node(Tensor<S>::scalar(loss), ng, {});
  if (ng) {
    nodes_[id].backprop = [logits, id, tgt = std::move(targets01), w = std::move(weights), inv, m,
                           n](Graph& g) {
      const S go = g.nodes_[id].grad.data[0] * inv;
      const Tensor<S>& vl2 = g.v(logits);
      Tensor<S>& gl = g.grad_buf(logits);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          size_t k = static_cast<size_t>(i * n + j);
          const S s = S(1) / (S(1) + std::exp(-vl2.data[k]));
          const S wj = w.data.empty() ? S(1) : w.data[static_cast<size_t>(j)];
          gl.data[k] += go * wj * (s - tgt.data[k]);
        }
      }
    };
  }
  return id;
}

template <class S>
typename Graph<S>::Id Graph<S>::dropout(Id x, double rate, RngStream& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  if (rate == 0.0) return x;
  const Tensor<S>& vx = v(x);
  Tensor<S> mask = Tensor<S>::zeros(vx.shape);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (auto& e : mask.data) e = (rng.next_double() >= rate) ? keep_scale : S(0);
  Tensor<S> out = vx;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
  bool ng = nodes_[x].needs_grad;
  Id id = new_node(std::move(out), ng, {});
  if (ng) {
    nodes_[id].backprop = [x, id, mask = std::move(mask)](Graph& g) {
      const Tensor<S>& go = g.nodes_[id].grad;
      Tensor<S>& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i] * mask.data[i];
    };
  }
  return id;
}

template <class S>
void Graph<S>::backward(Id root) {
  if (ran_backward_) throw Error("backward already ran on this graph");
  ran_backward_ = true;
  Node& r = nodes_[static_cast<size_t>(root)];
  if (r.value.numel() != 1)
    throw DataError("backward: root must be scalar, got " + r.value.shape_str());
  grad_buf(root).data[0] = S(1);
  for (Id i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.data.empty() || !n.backprop) continue;
    n.backprop(*this);
  }
}

#define SEGORDER_GRAPH_INSTANTIATE(S)      \
  template class Graph<S>;                 \
  template S gelu_value<S>(S);             \
  template S gelu_derivative<S>(S);

SEGORDER_GRAPH_INSTANTIATE(float)
SEGORDER_GRAPH_INSTANTIATE(double)
#undef SEGORDER_GRAPH_INSTANTIATE

}  // namespace segorder

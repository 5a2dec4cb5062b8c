// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "train/optim.hpp"

#include <algorithm>
#include <cmath>

#include "core/common.hpp"

namespace segorder {

void OptimizerConfig::validate() const {
  if (peak_lr <= 0.0) throw ConfigError("optimizer: peak_lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("optimizer: weight_decay must be >= 0");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
    throw ConfigError("optimizer: warmup_fraction must be in [0,1)");
  if (total_steps < 1) throw ConfigError("optimizer: total_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("optimizer: batch_size must be >= 1");
  if (accumulation_steps < 1) throw ConfigError("optimizer: accumulation_steps must be >= 1");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("optimizer: betas must be in [0,1)");
  if (eps <= 0.0) throw ConfigError("optimizer: eps must be > 0");
  if (clip_mode != "norm" && clip_mode != "value" && clip_mode != "none")
    throw ConfigError("optimizer: clip_mode must be norm|value|none");
  if (clip_mode != "none" && clip_threshold <= 0.0)
    throw ConfigError("optimizer: clip_threshold must be > 0");
}

double lr_at(int64_t step, const OptimizerConfig& cfg) {
  const int64_t warmup = cfg.warmup_steps();
  const int64_t total = cfg.total_steps;
  if (step <= 0) return 0.0;
  if (step > total) return 0.0;
  if (step <= warmup)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  return cfg.peak_lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

template <class S>
double clip_gradients(std::vector<Tensor<S>>& grads, double threshold,
                      const std::string& mode) {
  if (mode == "none") return 1.0;
  if (mode == "value") {
    const S hi = static_cast<S>(threshold);
    for (auto& g : grads)
      for (auto& e : g.data) e = std::clamp(e, -hi, hi);
    return 1.0;
  }
  if (mode != "norm") throw ConfigError("clip_gradients: unknown mode '" + mode + "'");
  double sq = 0.0;
  for (const auto& g : grads)
    for (S e : g.data) sq += static_cast<double>(e) * static_cast<double>(e);
  const double norm = std::sqrt(sq);
  if (norm <= threshold) return 1.0;
  const double scale = threshold / norm;
  for (auto& g : grads)
    for (auto& e : g.data) e = static_cast<S>(static_cast<double>(e) * scale);
  return scale;
}

template <class S>
AdamW<S>::AdamW(std::vector<Param<S>*> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(std::move(cfg)) {
  cfg_.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param<S>* p : params_) {
    m_.push_back(Tensor<S>::zeros(p->value.shape));
    v_.push_back(Tensor<S>::zeros(p->value.shape));
  }
}

template <class S>
void AdamW<S>::step(const std::vector<Tensor<S>>& grads, double lr) {
  if (grads.size() != params_.size())
    throw DataError("adamw: " + std::to_string(grads.size()) + " gradients for " +
                    std::to_string(params_.size()) + " params");
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!grads[i].same_shape(params_[i]->value))
      throw DataError("adamw: gradient shape mismatch for " + params_[i]->name);
    if (!grads[i].all_finite())
      throw NumericError("adamw: non-finite gradient in " + params_[i]->name);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param<S>& p = *params_[i];
    const Tensor<S>& g = grads[i];
    Tensor<S>& m = m_[i];
    Tensor<S>& v = v_[i];
    const double decay = (!p.no_decay && cfg_.weight_decay > 0.0)
                             ? 1.0 - lr * cfg_.weight_decay
                             : 1.0;
    for (size_t j = 0; j < g.data.size(); ++j) {
      const double gj = static_cast<double>(g.data[j]);
      double pj = static_cast<double>(p.value.data[j]) * decay;
      const double mj = cfg_.beta1 * static_cast<double>(m.data[j]) + (1.0 - cfg_.beta1) * gj;
      const double vj =
          cfg_.beta2 * static_cast<double>(v.data[j]) + (1.0 - cfg_.beta2) * gj * gj;
      m.data[j] = static_cast<S>(mj);
      v.data[j] = static_cast<S>(vj);
      pj -= lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
      p.value.data[j] = static_cast<S>(pj);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_gradients<float>(std::vector<Tensor<float>>&, double, const std::string&);
template double clip_gradients<double>(std::vector<Tensor<double>>&, double, const std::string&);

}  // namespace segorder

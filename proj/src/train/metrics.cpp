// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "train/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "core/common.hpp"

namespace segorder {

namespace {

struct Counts {
  int64_t tp = 0, fp = 0, fn = 0;
};

F1Result from_counts(const std::vector<Counts>& per_class) {
  int64_t tp = 0, fp = 0, fn = 0;
  double macro_sum = 0.0;
  for (const Counts& c : per_class) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    const int64_t denom = 2 * c.tp + c.fp + c.fn;
    macro_sum += denom > 0 ? 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom) : 0.0;
  }
  F1Result r;
  const int64_t micro_denom = 2 * tp + fp + fn;
  r.micro = micro_denom > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(micro_denom)
                            : 0.0;
  r.macro = per_class.empty() ? 0.0 : macro_sum / static_cast<double>(per_class.size());
  return r;
}

void check_class(int32_t c, int64_t num_classes, const char* what) {
  if (c < 0 || c >= num_classes)
    throw DataError(std::string(what) + " class id " + std::to_string(c) + " outside [0," +
                    std::to_string(num_classes) + ")");
}

}  // namespace

F1Result f1_multiclass(std::span<const int32_t> pred, std::span<const int32_t> gold,
                       int64_t num_classes) {
  if (pred.empty() || pred.size() != gold.size())
    throw DataError("f1_multiclass: undefined on empty or misaligned inputs");
  if (num_classes < 1) throw ConfigError("f1_multiclass: num_classes must be >= 1");
  std::vector<Counts> per_class(static_cast<size_t>(num_classes));
  for (size_t i = 0; i < pred.size(); ++i) {
    check_class(pred[i], num_classes, "predicted");
    check_class(gold[i], num_classes, "gold");
    if (pred[i] == gold[i]) {
      ++per_class[static_cast<size_t>(pred[i])].tp;
    } else {
      ++per_class[static_cast<size_t>(pred[i])].fp;
      ++per_class[static_cast<size_t>(gold[i])].fn;
    }
  }
  return from_counts(per_class);
}

F1Result f1_multilabel(const std::vector<std::vector<int32_t>>& pred,
                       const std::vector<std::vector<int32_t>>& gold, int64_t num_classes) {
  if (pred.empty() || pred.size() != gold.size())
    throw DataError("f1_multilabel: undefined on empty or misaligned inputs");
  if (num_classes < 1) throw ConfigError("f1_multilabel: num_classes must be >= 1");
  std::vector<Counts> per_class(static_cast<size_t>(num_classes));
  std::vector<uint8_t> in_pred(static_cast<size_t>(num_classes));
  std::vector<uint8_t> in_gold(static_cast<size_t>(num_classes));
  for (size_t i = 0; i < pred.size(); ++i) {
    std::fill(in_pred.begin(), in_pred.end(), 0);
    std::fill(in_gold.begin(), in_gold.end(), 0);
    for (int32_t c : pred[i]) {
      check_class(c, num_classes, "predicted");
      in_pred[static_cast<size_t>(c)] = 1;
    }
    for (int32_t c : gold[i]) {
      check_class(c, num_classes, "gold");
      in_gold[static_cast<size_t>(c)] = 1;
    }
    for (int64_t c = 0; c < num_classes; ++c) {
      if (in_pred[static_cast<size_t>(c)] && in_gold[static_cast<size_t>(c)])
        ++per_class[static_cast<size_t>(c)].tp;
      else if (in_pred[static_cast<size_t>(c)])
        ++per_class[static_cast<size_t>(c)].fp;
      else if (in_gold[static_cast<size_t>(c)])
        ++per_class[static_cast<size_t>(c)].fn;
    }
  }
  return from_counts(per_class);
}

double map_at_k(const std::vector<std::vector<double>>& scores,
                const std::vector<std::vector<int32_t>>& relevant, int64_t k) {
  if (k < 1) throw ConfigError("map_at_k: k must be >= 1");
  if (scores.size() != relevant.size())
    throw DataError("map_at_k: misaligned scores and relevant sets");
  double total = 0.0;
  int64_t included = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (relevant[i].empty()) continue;
    const auto n = static_cast<int64_t>(scores[i].size());
    for (int32_t c : relevant[i]) check_class(c, n, "relevant");
    std::vector<int32_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
      if (scores[i][static_cast<size_t>(a)] != scores[i][static_cast<size_t>(b)])
        return scores[i][static_cast<size_t>(a)] > scores[i][static_cast<size_t>(b)];
      return a < b;  // deterministic tie break
    });
    std::vector<uint8_t> rel(static_cast<size_t>(n), 0);
    for (int32_t c : relevant[i]) rel[static_cast<size_t>(c)] = 1;
    const int64_t cutoff = std::min<int64_t>(k, n);
    int64_t hits = 0;
    double ap = 0.0;
    for (int64_t rank = 1; rank <= cutoff; ++rank) {
      if (rel[static_cast<size_t>(order[static_cast<size_t>(rank - 1)])]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank);
      }
    }
    ap /= static_cast<double>(std::min<int64_t>(k, static_cast<int64_t>(relevant[i].size())));
    total += ap;
    ++included;
  }
  if (included == 0) throw DataError("map_at_k: undefined, no segment has relevant labels");
  return total / static_cast<double>(included);
}

}  // namespace segorder

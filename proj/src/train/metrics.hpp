// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace segorder {

struct F1Result {
  double micro = 0.0;
  double macro = 0.0;
};

/// Micro: global TP/FP/FN pooling over all classes. Macro: unweighted mean
/// of per-class F1 over all `num_classes` classes; zero-support classes
/// contribute 0 to the mean (fixed convention). Empty input is an error.
F1Result f1_multiclass(std::span<const int32_t> pred, std::span<const int32_t> gold,
                       int64_t num_classes);
F1Result f1_multilabel(const std::vector<std::vector<int32_t>>& pred,
                       const std::vector<std::vector<int32_t>>& gold, int64_t num_classes);

/// MAP@k over per-segment class scores. Ranking is by descending score, ties
/// broken by ascending class id. Segments with empty relevant sets are
/// excluded; all-empty input is an error. AP@k divides by min(k, |relevant|).
double map_at_k(const std::vector<std::vector<double>>& scores,
                const std::vector<std::vector<int32_t>>& relevant, int64_t k);

/// Aggregated evaluation output; `losses` and `map_at` are keyed maps so the
/// report serializes uniformly into the metrics log.
struct MetricReport {
  std::map<std::string, double> values;  // accuracies, f1, map@k, losses
  int64_t step = 0;
  double wall_time_sec = 0.0;
};

}  // namespace segorder

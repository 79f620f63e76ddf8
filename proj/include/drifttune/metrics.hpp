// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_METRICS_HPP
#define DRIFTTUNE_METRICS_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "drifttune/errors.hpp"

namespace drifttune::metrics {

/// k x k count matrix; rows are true classes, columns are predictions.
struct ConfusionMatrix {
  explicit ConfusionMatrix(std::size_t k) : k(k), counts(k * k, 0) {}

  std::size_t k;
  std::vector<long> counts;

  long &at(std::size_t true_c, std::size_t pred_c) {
    return counts[true_c * k + pred_c];
  }
  long at(std::size_t true_c, std::size_t pred_c) const {
    return counts[true_c * k + pred_c];
  }

  long total() const;
  long support(std::size_t true_c) const;
  long predicted(std::size_t pred_c) const;
};

struct PerClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<PerClassMetrics> per_class;
  std::vector<double> class_weights;

  std::string to_json() const;
};

ConfusionMatrix confusion(const std::vector<int> &preds,
                          const std::vector<int> &labels, std::size_t k);

/// trace / total.
double accuracy(const ConfusionMatrix &cm);

/// Unweighted mean of per-class F1 scores.
double macro_f1(const ConfusionMatrix &cm);

/// Full report. Weighted precision/recall are support-weighted sums; with
/// paper_literal the sums are additionally divided by the class count, which
/// scales the weighted F1 by exactly 1/k (kept for comparison only).
MetricsReport report(const ConfusionMatrix &cm, bool paper_literal = false);

} // namespace drifttune::metrics

#endif

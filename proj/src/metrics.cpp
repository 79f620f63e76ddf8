// SPDX-License-Identifier: Apache-2.0

#include "drifttune/metrics.hpp"

#include <json.hpp>

namespace drifttune::metrics {

long ConfusionMatrix::total() const {
  long t = 0;
  for (long c : counts) {
    t += c;
  }
  return t;
}

long ConfusionMatrix::support(std::size_t true_c) const {
  long t = 0;
  for (std::size_t p = 0; p < k; ++p) {
    t += at(true_c, p);
  }
  return t;
}

long ConfusionMatrix::predicted(std::size_t pred_c) const {
  long t = 0;
  for (std::size_t c = 0; c < k; ++c) {
    t += at(c, pred_c);
  }
  return t;
}

ConfusionMatrix confusion(const std::vector<int> &preds,
                          const std::vector<int> &labels, std::size_t k) {
  if (preds.size() != labels.size()) {
    throw DimensionError("confusion: preds and labels differ in length");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || static_cast<std::size_t>(preds[i]) >= k) {
      throw LabelError("confusion: prediction index out of range");
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw LabelError("confusion: label index out of range");
    }
    ++cm.at(static_cast<std::size_t>(labels[i]),
            static_cast<std::size_t>(preds[i]));
  }
  return cm;
}

double accuracy(const ConfusionMatrix &cm) {
  const long total = cm.total();
  if (total == 0) {
    throw EmptyError("accuracy: empty confusion matrix");
  }
  long correct = 0;
  for (std::size_t i = 0; i < cm.k; ++i) {
    correct += cm.at(i, i);
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double harmonic(double p, double r) {
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

} // namespace

MetricsReport report(const ConfusionMatrix &cm, bool paper_literal) {
  const long total = cm.total();
  if (total == 0) {
    throw EmptyError("report: empty confusion matrix");
  }
  MetricsReport rep;
  rep.accuracy = accuracy(cm);
  rep.per_class.resize(cm.k);
  rep.class_weights.resize(cm.k);

  double weighted_p = 0.0;
  double weighted_r = 0.0;
  double macro = 0.0;
  for (std::size_t i = 0; i < cm.k; ++i) {
    const double tp = static_cast<double>(cm.at(i, i));
    auto &pc = rep.per_class[i];
    pc.support = cm.support(i);
    pc.precision = safe_div(tp, static_cast<double>(cm.predicted(i)));
    pc.recall = safe_div(tp, static_cast<double>(pc.support));
    pc.f1 = harmonic(pc.precision, pc.recall);
    rep.class_weights[i] =
        static_cast<double>(pc.support) / static_cast<double>(total);
    weighted_p += pc.precision * rep.class_weights[i];
    weighted_r += pc.recall * rep.class_weights[i];
    macro += pc.f1;
  }
  if (paper_literal) {
    weighted_p /= static_cast<double>(cm.k);
    weighted_r /= static_cast<double>(cm.k);
  }
  rep.weighted_precision = weighted_p;
  rep.weighted_recall = weighted_r;
  rep.weighted_f1 = harmonic(weighted_p, weighted_r);
  rep.macro_f1 = macro / static_cast<double>(cm.k);
  return rep;
}

double macro_f1(const ConfusionMatrix &cm) { return report(cm).macro_f1; }

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["weighted_precision"] = weighted_precision;
  j["weighted_recall"] = weighted_recall;
  j["weighted_f1"] = weighted_f1;
  j["macro_f1"] = macro_f1;
  nlohmann::json pcs = nlohmann::json::array();
  for (const auto &pc : per_class) {
    pcs.push_back({{"precision", pc.precision},
                   {"recall", pc.recall},
                   {"f1", pc.f1},
                   {"support", pc.support}});
  }
  j["per_class"] = pcs;
  j["class_weights"] = class_weights;
  return j.dump(2);
}

} // namespace drifttune::metrics

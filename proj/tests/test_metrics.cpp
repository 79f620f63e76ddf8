// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drifttune/metrics.hpp"
#include "drifttune/rng.hpp"

using namespace drifttune;
using namespace drifttune::metrics;

namespace {

// Fixture from the hand-worked example: rows are true classes.
//   cm = [[3, 1],
//         [2, 4]]
// support = (4, 6), w = (0.4, 0.6)
// P = (3/5, 4/5), R = (3/4, 2/3)
// weighted P = 0.72, weighted R = 0.70
// weighted F1 = 2*0.72*0.70 / 1.42 = 0.70985915492957746...
// macro F1   = (0.666666... + 0.727272...) / 2 = 0.69696969...
ConfusionMatrix fixture() {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 3;
  cm.at(0, 1) = 1;
  cm.at(1, 0) = 2;
  cm.at(1, 1) = 4;
  return cm;
}

} // namespace

TEST_CASE("confusion matrix construction") {
  auto cm = confusion({1, 1}, {0, 1}, 2);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.at(0, 0) == 0);
  CHECK(cm.total() == 2);

  auto diag = confusion({0, 1, 2}, {0, 1, 2}, 3);
  CHECK(diag.at(0, 0) == 1);
  CHECK(diag.at(1, 1) == 1);
  CHECK(diag.at(2, 2) == 1);

  auto empty = confusion({}, {}, 2);
  CHECK(empty.total() == 0);

  CHECK_THROWS_AS(confusion({5}, {0}, 2), LabelError);
  CHECK_THROWS_AS(confusion({0}, {7}, 2), LabelError);
  CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), DimensionError);
}

TEST_CASE("accuracy") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 2;
  cm.at(1, 1) = 1;
  cm.at(1, 0) = 1;
  CHECK(accuracy(cm) == doctest::Approx(0.75));

  auto diag = confusion({0, 1}, {0, 1}, 2);
  CHECK(accuracy(diag) == doctest::Approx(1.0));

  auto wrong = confusion({1, 0}, {0, 1}, 2);
  CHECK(accuracy(wrong) == doctest::Approx(0.0));

  ConfusionMatrix empty(2);
  CHECK_THROWS_AS(accuracy(empty), EmptyError);
}

TEST_CASE("weighted F1 on the hand-computed fixture") {
  auto cm = fixture();
  auto rep = report(cm);
  CHECK(rep.class_weights[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(rep.class_weights[1] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(rep.per_class[0].precision == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(rep.per_class[1].precision == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(rep.per_class[0].recall == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(rep.per_class[1].recall ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rep.weighted_precision == doctest::Approx(0.72).epsilon(1e-12));
  CHECK(rep.weighted_recall == doctest::Approx(0.70).epsilon(1e-12));
  CHECK(rep.weighted_f1 == doctest::Approx(0.70986).epsilon(1e-5));
  CHECK(rep.macro_f1 == doctest::Approx(0.69697).epsilon(1e-5));
}

TEST_CASE("literal weighted average divides by the class count") {
  auto cm = fixture();
  auto rep = report(cm);
  auto lit = report(cm, /*paper_literal=*/true);
  // The extra |L| division scales the harmonic mean by exactly 1/k.
  CHECK(lit.weighted_f1 == doctest::Approx(rep.weighted_f1 / 2.0).epsilon(1e-12));
  CHECK(lit.weighted_precision ==
        doctest::Approx(rep.weighted_precision / 2.0).epsilon(1e-12));
}

TEST_CASE("perfect predictions give all ones") {
  auto cm = confusion({0, 1, 1, 0}, {0, 1, 1, 0}, 2);
  auto rep = report(cm);
  CHECK(rep.accuracy == doctest::Approx(1.0));
  CHECK(rep.weighted_precision == doctest::Approx(1.0));
  CHECK(rep.weighted_recall == doctest::Approx(1.0));
  CHECK(rep.weighted_f1 == doctest::Approx(1.0));
  CHECK(rep.macro_f1 == doctest::Approx(1.0));
}

TEST_CASE("zero-division conventions") {
  // Class 2 never appears and is never predicted: P = R = F1 = 0, weight 0.
  auto cm = confusion({0, 1}, {0, 1}, 3);
  auto rep = report(cm);
  CHECK(rep.per_class[2].precision == 0.0);
  CHECK(rep.per_class[2].recall == 0.0);
  CHECK(rep.per_class[2].f1 == 0.0);
  CHECK(rep.class_weights[2] == 0.0);
  CHECK(rep.weighted_f1 == doctest::Approx(1.0));
  // ...but the absent class still drags the unweighted macro mean.
  CHECK(rep.macro_f1 == doctest::Approx(2.0 / 3.0));

  ConfusionMatrix empty(2);
  CHECK_THROWS_AS(report(empty), EmptyError);
  CHECK_THROWS_AS(macro_f1(empty), EmptyError);
}

TEST_CASE("macro F1 on the fixture") {
  auto cm = fixture();
  CHECK(macro_f1(cm) == doctest::Approx(0.69697).epsilon(1e-5));
}

TEST_CASE("accuracy invariant under joint label permutation") {
  Rng rng(42);
  std::vector<int> preds, labels;
  for (int i = 0; i < 200; ++i) {
    preds.push_back(static_cast<int>(rng.below(3)));
    labels.push_back(static_cast<int>(rng.below(3)));
  }
  const double base = accuracy(confusion(preds, labels, 3));
  const int perm[3] = {2, 0, 1};
  std::vector<int> p2, l2;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p2.push_back(perm[preds[i]]);
    l2.push_back(perm[labels[i]]);
  }
  CHECK(accuracy(confusion(p2, l2, 3)) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("weighted F1 equals accuracy on diagonal matrices") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 5;
  cm.at(1, 1) = 2;
  cm.at(2, 2) = 9;
  auto rep = report(cm);
  CHECK(rep.weighted_f1 == doctest::Approx(rep.accuracy).epsilon(1e-12));
  CHECK(rep.accuracy == doctest::Approx(1.0));
}

TEST_CASE("matrix-derived metrics agree with the raw stream") {
  Rng rng(31);
  std::vector<int> preds, labels;
  for (int i = 0; i < 300; ++i) {
    preds.push_back(static_cast<int>(rng.below(3)));
    labels.push_back(static_cast<int>(rng.below(3)));
  }
  auto rep = report(confusion(preds, labels, 3));

  // Stream-side accuracy and per-class tallies, no matrix involved.
  std::size_t correct = 0;
  long tp[3] = {0, 0, 0}, pred_n[3] = {0, 0, 0}, true_n[3] = {0, 0, 0};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    correct += preds[i] == labels[i];
    tp[preds[i]] += preds[i] == labels[i];
    ++pred_n[preds[i]];
    ++true_n[labels[i]];
  }
  CHECK(rep.accuracy ==
        doctest::Approx(double(correct) / 300.0).epsilon(1e-12));
  for (int c = 0; c < 3; ++c) {
    CHECK(rep.per_class[c].precision ==
          doctest::Approx(double(tp[c]) / double(pred_n[c])).epsilon(1e-12));
    CHECK(rep.per_class[c].recall ==
          doctest::Approx(double(tp[c]) / double(true_n[c])).epsilon(1e-12));
    CHECK(rep.per_class[c].support == true_n[c]);
  }
}

TEST_CASE("all metric values stay in [0, 1]") {
  Rng rng(7);
  for (int it = 0; it < 20; ++it) {
    std::vector<int> preds, labels;
    const int n = 1 + static_cast<int>(rng.below(50));
    for (int i = 0; i < n; ++i) {
      preds.push_back(static_cast<int>(rng.below(4)));
      labels.push_back(static_cast<int>(rng.below(4)));
    }
    auto rep = report(confusion(preds, labels, 4));
    for (double v : {rep.accuracy, rep.weighted_precision, rep.weighted_recall,
                     rep.weighted_f1, rep.macro_f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    double wsum = 0.0;
    for (double w : rep.class_weights) {
      wsum += w;
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

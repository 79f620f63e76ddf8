// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "drifttune/sha256.hpp"
#include "drifttune/training.hpp"

using namespace drifttune;
using namespace drifttune::training;

namespace {

model::ModelConfig tiny_model_config() {
  model::ModelConfig mc;
  mc.bb.n_layers = 2;
  mc.bb.d_model = 16;
  mc.bb.n_heads = 2;
  mc.bb.prompt_len = 4;
  mc.bb.max_positions = 5;
  mc.d_c = 8;
  mc.k = 2;
  mc.init_seed = 3;
  return mc;
}

data::Dataset drift_dataset(int per_class = 60, std::uint64_t seed = 41) {
  data::SyntheticConfig sc;
  sc.k = 2;
  sc.n_per_class = per_class;
  sc.d_c = 8;
  sc.noise_sigma = 0.05;
  sc.drift_dependence = true;
  sc.seed = seed;
  auto ds = data::generate_synthetic(sc);
  data::assign_splits(ds, data::SplitFractions{}, seed);
  return ds;
}

} // namespace

TEST_CASE("cross_entropy analytic cases") {
  // Perfect one-hot prediction: zero loss.
  CHECK(cross_entropy({{1.0, 0.0}}, {0}) == doctest::Approx(0.0).epsilon(1e-9));

  // Uniform binary prediction: ln 2.
  CHECK(cross_entropy({{0.5, 0.5}}, {1}) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-12));

  CHECK_THROWS_AS(cross_entropy({{0.5, 0.5}}, {2}), LabelError);
  CHECK_THROWS_AS(cross_entropy({{0.9, 0.6}}, {0}), ConfigError);
}

TEST_CASE("cross_entropy matches an extended-precision oracle") {
  Rng rng(8);
  std::vector<Vec> probs;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    Vec row(4);
    double sum = 0.0;
    for (auto &p : row) {
      p = rng.uniform(0.05, 1.0);
      sum += p;
    }
    for (auto &p : row) {
      p /= sum;
    }
    probs.push_back(row);
    labels.push_back(static_cast<int>(rng.below(4)));
  }
  long double expect = 0.0L;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    expect -= std::log(static_cast<long double>(
        probs[i][static_cast<std::size_t>(labels[i])]));
  }
  expect /= static_cast<long double>(probs.size());
  CHECK(std::abs(cross_entropy(probs, labels) -
                 static_cast<double>(expect)) < 1e-8);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 0.5) == 0.5);
  CHECK(cosine_lr(100, 100, 0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_lr(50, 100, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_lr(5, 0, 0.5), ConfigError);
  CHECK_THROWS_AS(cosine_lr(-1, 10, 0.5), ConfigError);
  CHECK_THROWS_AS(cosine_lr(11, 10, 0.5), ConfigError);
}

namespace {

struct ToyParams {
  Mat decayed{1, 3};
  Mat plain{1, 3};
  Mat g_decayed{1, 3};
  Mat g_plain{1, 3};

  std::vector<model::ParamRef> refs() {
    return {
        model::ParamRef{"w", &decayed, &g_decayed, true, true},
        model::ParamRef{"ln", &plain, &g_plain, true, false},
    };
  }
};

} // namespace

TEST_CASE("adamw: zero-gradient decay shrinks only decayed tensors") {
  ToyParams t;
  t.decayed.fill(2.0);
  t.plain.fill(2.0);
  auto refs = t.refs();
  AdamW opt(/*weight_decay=*/0.01);
  opt.step(refs, /*lr_t=*/0.1);
  for (double v : t.decayed.data) {
    CHECK(v == doctest::Approx(2.0 * 0.999).epsilon(1e-15));
  }
  for (double v : t.plain.data) {
    CHECK(v == 2.0);
  }
  opt.step(refs, 0.1);
  for (double v : t.decayed.data) {
    CHECK(v == doctest::Approx(2.0 * 0.999 * 0.999).epsilon(1e-15));
  }
}

TEST_CASE("adamw: first step matches the hand-computed update") {
  ToyParams t;
  t.decayed.fill(1.0);
  t.plain.fill(1.0);
  t.g_decayed.fill(0.5);
  t.g_plain.fill(-0.25);
  auto refs = t.refs();
  AdamW opt(/*weight_decay=*/0.0);
  const double lr = 0.1;
  opt.step(refs, lr);

  auto expected = [&](double g) {
    const long double m = (1.0L - 0.9L) * g;
    const long double v = (1.0L - 0.999L) * g * g;
    const long double mhat = m / (1.0L - 0.9L);
    const long double vhat = v / (1.0L - 0.999L);
    return static_cast<double>(1.0L -
                               0.1L * mhat / (std::sqrt(vhat) + 1e-8L));
  };
  for (double v : t.decayed.data) {
    CHECK(v == doctest::Approx(expected(0.5)).epsilon(1e-12));
  }
  for (double v : t.plain.data) {
    CHECK(v == doctest::Approx(expected(-0.25)).epsilon(1e-12));
  }
}

TEST_CASE("adamw: repeated identical steps are not idempotent") {
  ToyParams a, b;
  a.decayed.fill(1.0);
  a.g_decayed.fill(0.3);
  b.decayed.fill(1.0);
  b.g_decayed.fill(0.3);
  auto ra = a.refs();
  auto rb = b.refs();
  AdamW o1(0.0), o2(0.0);
  o1.step(ra, 0.1);
  o2.step(rb, 0.1);
  o2.step(rb, 0.1); // second step moves further: the state advanced
  CHECK(a.decayed.at(0, 0) != b.decayed.at(0, 0));
}

TEST_CASE("gradcheck passes on the tiny config") {
  auto report = gradcheck(tiny_model_config(), 7);
  CHECK(report.pass);
  CHECK(report.worst < 1e-4);

  // Every trainable tensor appears exactly once.
  std::set<std::string> names;
  for (const auto &t : report.tensors) {
    CHECK(names.insert(t.name).second);
  }
  CHECK(names.count("adapter.fc1.weight") == 1);
  CHECK(names.count("h.0.ln_1.weight") == 1);
  CHECK(names.count("h.1.ln_2.bias") == 1);
  CHECK(names.count("ln_f.weight") == 1);
  CHECK(names.count("wpe.weight") == 1);
  CHECK(names.count("head.beta") == 1);
  CHECK(names.count("prompt.bank") == 0); // frozen

  // The scalar blend path is exactly differentiable.
  for (const auto &t : report.tensors) {
    if (t.name == "head.beta") {
      CHECK(t.max_rel_err < 1e-6);
    }
  }
}

TEST_CASE("gradcheck holds across ten seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto report = gradcheck(tiny_model_config(), seed);
    CHECK(report.pass);
  }
}

TEST_CASE("gradcheck detects a corrupted LN gradient") {
  GradCheckOptions opts;
  opts.corrupt_tensor = "h.0.ln_1.weight";
  opts.corrupt_scale = 1.02;
  auto report = gradcheck(tiny_model_config(), 7, opts);
  CHECK_FALSE(report.pass);
  CHECK(report.worst_tensor == "h.0.ln_1.weight");
}

TEST_CASE("gradcheck rejects non-tiny configs") {
  auto mc = tiny_model_config();
  mc.bb.n_layers = 3;
  CHECK_THROWS_AS(gradcheck(mc, 1), ConfigError);
}

TEST_CASE("train: lr=0 with patience=1 stops at epoch 2") {
  auto ds = drift_dataset(20);
  TrainConfig tc;
  tc.lr = 0.0;
  tc.batch_size = 8;
  tc.max_epochs = 50;
  tc.patience = 1;
  tc.seed = 5;
  auto result = train(ds, tc, tiny_model_config());
  CHECK(result.history.size() == 2);
  CHECK(result.best_epoch == 1);
}

TEST_CASE("train: same seed gives identical history") {
  auto ds = drift_dataset(30);
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 16;
  tc.max_epochs = 6;
  tc.patience = 20;
  tc.seed = 9;
  auto a = train(ds, tc, tiny_model_config());
  auto b = train(ds, tc, tiny_model_config());
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_acc == b.history[i].val_acc);
    CHECK(a.history[i].val_macro_f1 == b.history[i].val_macro_f1);
    CHECK(a.history[i].lr == b.history[i].lr);
  }
  // Final weights are bitwise identical too.
  for (const auto &[name, mat] : a.best_tensors) {
    CHECK(mat.data == b.best_tensors.at(name).data);
  }
}

TEST_CASE("train: loss decreases over the first epochs on the drift task") {
  auto ds = drift_dataset(60);
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 16;
  tc.max_epochs = 5;
  tc.patience = 20;
  tc.seed = 2;
  auto result = train(ds, tc, tiny_model_config());
  REQUIRE(result.history.size() == 5);
  for (std::size_t i = 1; i < result.history.size(); ++i) {
    CHECK(result.history[i].train_loss < result.history[i - 1].train_loss);
  }
}

TEST_CASE("train: early stopping returns the best validation checkpoint") {
  auto ds = drift_dataset(40);
  TrainConfig tc;
  tc.lr = 5e-4;
  tc.batch_size = 16;
  tc.max_epochs = 15;
  tc.patience = 4;
  tc.seed = 11;
  auto result = train(ds, tc, tiny_model_config());
  double best = -1.0;
  for (const auto &e : result.history) {
    best = std::max(best, e.val_macro_f1);
  }
  CHECK(result.best_val_macro_f1 == best);

  // The stored checkpoint really is the best epoch's model.
  auto mc = tiny_model_config();
  model::Classifier net(mc);
  net.load_tensor_map(result.best_tensors);
  auto val = evaluate(net, ds, data::Split::Val);
  CHECK(val.report.macro_f1 ==
        doctest::Approx(result.best_val_macro_f1).epsilon(1e-12));
}

TEST_CASE("train: frozen tensors are byte-identical before and after") {
  auto ds = drift_dataset(30);
  auto mc = tiny_model_config();
  model::Classifier fresh(mc);
  std::map<std::string, std::string> before;
  for (const auto &[name, mat] : fresh.frozen_tensors()) {
    before[name] = sha256_hex(mat->data);
  }

  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 16;
  tc.max_epochs = 8;
  tc.patience = 20;
  tc.seed = 13;
  auto result = train(ds, tc, mc);

  model::Classifier after(mc);
  after.load_tensor_map(result.best_tensors);
  for (const auto &[name, mat] : after.frozen_tensors()) {
    CHECK(sha256_hex(mat->data) == before.at(name));
  }
}

TEST_CASE("train: missing splits raise SplitError") {
  data::SyntheticConfig sc;
  sc.k = 2;
  sc.n_per_class = 10;
  sc.d_c = 8;
  sc.seed = 1;
  auto ds = data::generate_synthetic(sc); // no split tags
  TrainConfig tc;
  CHECK_THROWS_AS(train(ds, tc, tiny_model_config()), SplitError);
}

TEST_CASE("grid search enumerates lr x batch cells") {
  auto ds = drift_dataset(30);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 20;
  tc.seed = 4;
  tc.lr_grid = {1e-4, 5e-4, 1e-3};
  tc.batch_grid = {16, 32};
  auto grid = grid_search(ds, tc, tiny_model_config());
  CHECK(grid.cells.size() == 6);
  for (const auto &cell : grid.cells) {
    CHECK(cell.ok);
  }

  TrainConfig single = tc;
  single.lr_grid = {5e-4};
  single.batch_grid = {16};
  auto one = grid_search(ds, single, tiny_model_config());
  CHECK(one.cells.size() == 1);
  CHECK(one.best().lr == 5e-4);
}

TEST_CASE("grid search ties resolve to lower lr then smaller batch") {
  auto ds = drift_dataset(20);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 20;
  tc.seed = 6;
  // Learning rates too small to flip any prediction: guaranteed ties.
  tc.lr_grid = {1e-12, 1e-9};
  tc.batch_grid = {8, 16};
  auto grid = grid_search(ds, tc, tiny_model_config());
  REQUIRE(grid.cells.size() == 4);
  const double acc0 = grid.cells[0].result.best_val_acc;
  for (const auto &cell : grid.cells) {
    REQUIRE(cell.result.best_val_acc == acc0);
  }
  CHECK(grid.best().lr == 1e-12);
  CHECK(grid.best().batch_size == 8);
}

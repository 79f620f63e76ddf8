// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_TRAINING_HPP
#define DRIFTTUNE_TRAINING_HPP

#include <map>
#include <string>
#include <vector>

#include "drifttune/data_io.hpp"
#include "drifttune/metrics.hpp"
#include "drifttune/model.hpp"

namespace drifttune::training {

/// Mean over the batch of -log p[label]. Rows must already sum to 1 within
/// 1e-6 (the model's loss path works from logits instead; see
/// Classifier::batch_loss).
double cross_entropy(const std::vector<Vec> &probs,
                     const std::vector<int> &labels);

/// lr_max * 0.5 * (1 + cos(pi * step / total_steps)), floored at 0.
double cosine_lr(long step, long total_steps, double lr_max);

/// AdamW with decoupled weight decay. Decay touches only parameters tagged
/// weight_decay (matrix-shaped weights); LN gains/biases, biases and the
/// blend scalar are exempt.
class AdamW {
public:
  AdamW(double weight_decay = 0.01, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<model::ParamRef> &params, double lr_t);

  long step_count() const { return step_count_; }

private:
  double weight_decay_;
  double beta1_, beta2_, eps_;
  long step_count_ = 0;
  // name -> (first moment, second moment), created lazily on first step
  std::map<std::string, std::pair<Mat, Mat>> moments_;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 96;
  int max_epochs = 200;
  double weight_decay = 0.01;
  int patience = 20;
  std::uint64_t seed = 0;
  std::vector<double> lr_grid = {1e-4, 5e-4, 1e-3};
  std::vector<std::size_t> batch_grid = {96, 128};

  void validate() const;
};

struct EpochStats {
  int epoch = 0; // 1-based
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_macro_f1 = 0.0;
  double lr = 0.0; // learning rate of the last optimizer step of the epoch
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_macro_f1 = 0.0;
  double best_val_acc = 0.0; // accuracy at the early-stopping checkpoint
  store::TensorMap best_tensors;
  long total_steps_run = 0;
};

/// Full training run: seeded shuffle, mini-batches, AdamW + cosine decay,
/// early stopping on validation macro-F1 (ties count as no improvement).
/// Returns the best checkpoint's tensors and the per-epoch history.
TrainResult train(const data::Dataset &ds, const TrainConfig &tc,
                  const model::ModelConfig &mc);

struct EvalResult {
  metrics::MetricsReport report;
  std::vector<int> preds;
  std::vector<int> labels;
};

EvalResult evaluate(const model::Classifier &net, const data::Dataset &ds,
                    data::Split split, bool paper_literal = false);

struct GridCell {
  double lr = 0.0;
  std::size_t batch_size = 0;
  bool ok = false;
  std::string error;
  TrainResult result;
};

struct GridResult {
  std::size_t best_index = 0;
  std::vector<GridCell> cells;

  const GridCell &best() const { return cells[best_index]; }
};

/// Trains every (lr, batch) cell; cell failures are recorded without
/// aborting the rest. Selection is by the early-stopped checkpoint's
/// validation accuracy; ties go to the lower lr, then the smaller batch.
GridResult grid_search(const data::Dataset &ds, const TrainConfig &base,
                       const model::ModelConfig &mc);

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  int batch = 4;
  // Test hook: scales one tensor's analytic gradient to prove the check
  // actually detects a broken backward.
  std::string corrupt_tensor;
  double corrupt_scale = 1.0;
};

struct GradCheckReport {
  struct TensorReport {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t elements = 0;
  };
  std::vector<TensorReport> tensors;
  bool pass = false;
  double worst = 0.0;
  std::string worst_tensor;
};

/// Central-difference check of every trainable tensor on a tiny config
/// (enforced: L <= 2, d_model <= 16, d_c <= 8, batch <= 4).
GradCheckReport gradcheck(const model::ModelConfig &mc, std::uint64_t seed,
                          const GradCheckOptions &opts = {});

} // namespace drifttune::training

#endif

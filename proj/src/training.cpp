// SPDX-License-Identifier: Apache-2.0

#include "drifttune/training.hpp"

#include <algorithm>
#include <cmath>

#include "drifttune/rng.hpp"

namespace drifttune::training {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
} // namespace

double cross_entropy(const std::vector<Vec> &probs,
                     const std::vector<int> &labels) {
  if (probs.size() != labels.size()) {
    throw DimensionError("cross_entropy: probs and labels differ in length");
  }
  if (probs.empty()) {
    throw EmptyError("cross_entropy: empty batch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto &row = probs[i];
    double sum = 0.0;
    for (double p : row) {
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ConfigError("cross_entropy: probability row does not sum to 1");
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= row.size()) {
      throw LabelError("cross_entropy: label out of range at index " +
                       std::to_string(i));
    }
    total += -std::log(row[static_cast<std::size_t>(labels[i])]);
  }
  return total / static_cast<double>(probs.size());
}

double cosine_lr(long step, long total_steps, double lr_max) {
  if (total_steps < 1) {
    throw ConfigError("cosine_lr: total_steps must be >= 1");
  }
  if (step < 0 || step > total_steps) {
    throw ConfigError("cosine_lr: step outside [0, total_steps]");
  }
  const double x = static_cast<double>(step) / static_cast<double>(total_steps);
  return std::max(0.0, lr_max * 0.5 * (1.0 + std::cos(kPi * x)));
}

void AdamW::step(std::vector<model::ParamRef> &params, double lr_t) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (auto &p : params) {
    if (!p.trainable) {
      continue;
    }
    if (p.grad == nullptr || !p.grad->same_shape(*p.value)) {
      throw DimensionError("adamw: gradient shape mismatch for '" + p.name +
                           "'");
    }
    auto [it, inserted] = moments_.try_emplace(
        p.name, std::make_pair(Mat(p.value->rows, p.value->cols),
                               Mat(p.value->rows, p.value->cols)));
    Mat &m = it->second.first;
    Mat &v = it->second.second;
    if (!inserted && !m.same_shape(*p.value)) {
      throw DimensionError("adamw: stale moment shape for '" + p.name + "'");
    }
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double g = p.grad->data[i];
      m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g;
      v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      const double prev = p.value->data[i];
      double next = prev - lr_t * mhat / (std::sqrt(vhat) + eps_);
      if (p.weight_decay) {
        next -= lr_t * weight_decay_ * prev;
      }
      p.value->data[i] = next;
    }
  }
}

void TrainConfig::validate() const {
  if (lr < 0.0) {
    throw ConfigError("train: lr must be >= 0");
  }
  if (batch_size < 1) {
    throw ConfigError("train: batch_size must be >= 1");
  }
  if (patience < 1) {
    throw ConfigError("train: patience must be >= 1");
  }
  if (max_epochs < 1) {
    throw ConfigError("train: max_epochs must be >= 1");
  }
}

EvalResult evaluate(const model::Classifier &net, const data::Dataset &ds,
                    data::Split split, bool paper_literal) {
  EvalResult out;
  for (const auto &s : ds.samples) {
    if (s.split != split) {
      continue;
    }
    out.preds.push_back(net.predict(s));
    out.labels.push_back(s.label);
  }
  auto cm = metrics::confusion(out.preds, out.labels,
                               static_cast<std::size_t>(ds.k));
  out.report = metrics::report(cm, paper_literal);
  return out;
}

TrainResult train(const data::Dataset &ds, const TrainConfig &tc,
                  const model::ModelConfig &mc) {
  tc.validate();
  auto train_idx = ds.indices_of(data::Split::Train);
  const auto val_idx = ds.indices_of(data::Split::Val);
  if (train_idx.empty() || val_idx.empty()) {
    throw SplitError("train: dataset needs non-empty train and val splits");
  }

  model::Classifier net(mc);
  auto params = net.parameters();
  AdamW opt(tc.weight_decay);
  Rng shuffle_rng(tc.seed);

  const long steps_per_epoch = static_cast<long>(
      (train_idx.size() + tc.batch_size - 1) / tc.batch_size);
  const long total_steps = steps_per_epoch * tc.max_epochs;

  TrainResult result;
  double best = -1.0;
  int epochs_since_best = 0;
  long global_step = 0;

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double loss_sum = 0.0;
    double last_lr = 0.0;
    for (std::size_t start = 0; start < train_idx.size();
         start += tc.batch_size) {
      const std::size_t end =
          std::min(start + tc.batch_size, train_idx.size());
      std::vector<const data::Sample *> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&ds.samples[train_idx[i]]);
      }
      net.zero_grads();
      const double loss = net.forward_backward(batch);
      if (!std::isfinite(loss)) {
        throw DivergenceError("train: non-finite loss at epoch " +
                                  std::to_string(epoch) + ", step " +
                                  std::to_string(global_step),
                              epoch, global_step);
      }
      last_lr = cosine_lr(global_step, total_steps, tc.lr);
      opt.step(params, last_lr);
      net.bump_revision();
      ++global_step;
      loss_sum += loss * static_cast<double>(batch.size());
    }

    auto val = evaluate(net, ds, data::Split::Val);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_idx.size());
    stats.val_acc = val.report.accuracy;
    stats.val_macro_f1 = val.report.macro_f1;
    stats.lr = last_lr;
    result.history.push_back(stats);

    if (stats.val_macro_f1 > best) {
      best = stats.val_macro_f1;
      result.best_epoch = epoch;
      result.best_val_macro_f1 = stats.val_macro_f1;
      result.best_val_acc = stats.val_acc;
      result.best_tensors = net.tensor_map();
      epochs_since_best = 0;
    } else {
      // A tie is no improvement.
      ++epochs_since_best;
      if (epochs_since_best >= tc.patience) {
        break;
      }
    }
  }
  result.total_steps_run = global_step;
  return result;
}

GridResult grid_search(const data::Dataset &ds, const TrainConfig &base,
                       const model::ModelConfig &mc) {
  if (base.lr_grid.empty() || base.batch_grid.empty()) {
    throw ConfigError("grid_search: empty grid");
  }
  auto lrs = base.lr_grid;
  auto batches = base.batch_grid;
  std::sort(lrs.begin(), lrs.end());
  std::sort(batches.begin(), batches.end());

  GridResult grid;
  double best_acc = -1.0;
  for (double lr : lrs) {
    for (std::size_t bs : batches) {
      GridCell cell;
      cell.lr = lr;
      cell.batch_size = bs;
      TrainConfig tc = base;
      tc.lr = lr;
      tc.batch_size = bs;
      try {
        cell.result = train(ds, tc, mc);
        cell.ok = true;
      } catch (const Error &e) {
        cell.ok = false;
        cell.error = e.what();
      }
      grid.cells.push_back(std::move(cell));
      const auto &placed = grid.cells.back();
      if (placed.ok && placed.result.best_val_acc > best_acc) {
        best_acc = placed.result.best_val_acc;
        grid.best_index = grid.cells.size() - 1;
      }
    }
  }
  if (best_acc < 0.0) {
    throw Error("grid_search: every cell failed");
  }
  return grid;
}

GradCheckReport gradcheck(const model::ModelConfig &mc, std::uint64_t seed,
                          const GradCheckOptions &opts) {
  if (mc.bb.n_layers > 2 || mc.bb.d_model > 16 || mc.d_c > 8 ||
      opts.batch > 4 || opts.batch < 1) {
    throw ConfigError("gradcheck: config exceeds the tiny-config limits");
  }

  // Random unit-vector samples with random labels.
  Rng rng(seed);
  std::vector<data::Sample> samples;
  for (int i = 0; i < opts.batch; ++i) {
    data::Sample s;
    s.id = "g" + std::to_string(i);
    Vec img(mc.d_c), txt(mc.d_c);
    double si = 0.0, st = 0.0;
    for (std::size_t j = 0; j < mc.d_c; ++j) {
      img[j] = rng.gaussian();
      si += img[j] * img[j];
      txt[j] = rng.gaussian();
      st += txt[j] * txt[j];
    }
    for (std::size_t j = 0; j < mc.d_c; ++j) {
      img[j] /= std::sqrt(si);
      txt[j] /= std::sqrt(st);
    }
    s.image_emb = img;
    s.text_emb = txt;
    s.label = static_cast<int>(rng.below(mc.k));
    samples.push_back(std::move(s));
  }
  std::vector<const data::Sample *> batch;
  for (const auto &s : samples) {
    batch.push_back(&s);
  }

  model::Classifier net(mc);
  net.zero_grads();
  net.forward_backward(batch);

  GradCheckReport report;
  report.pass = true;
  for (auto &p : net.parameters()) {
    if (!p.trainable) {
      continue;
    }
    GradCheckReport::TensorReport tr;
    tr.name = p.name;
    tr.elements = p.value->size();
    const double scale =
        p.name == opts.corrupt_tensor ? opts.corrupt_scale : 1.0;
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double analytic = p.grad->data[i] * scale;
      const double saved = p.value->data[i];
      p.value->data[i] = saved + opts.h;
      const double up = net.batch_loss(batch);
      p.value->data[i] = saved - opts.h;
      const double down = net.batch_loss(batch);
      p.value->data[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.h);
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      tr.max_rel_err =
          std::max(tr.max_rel_err, std::abs(analytic - numeric) / denom);
    }
    if (tr.max_rel_err > report.worst) {
      report.worst = tr.max_rel_err;
      report.worst_tensor = tr.name;
    }
    if (tr.max_rel_err >= opts.tolerance) {
      report.pass = false;
    }
    report.tensors.push_back(std::move(tr));
  }
  return report;
}

} // namespace drifttune::training

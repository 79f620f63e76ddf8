// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_HARNESS_HPP
#define DRIFTTUNE_HARNESS_HPP

#include <string>
#include <vector>

#include "drifttune/training.hpp"

namespace drifttune::harness {

/// Writes content to path atomically (temp file + rename).
void write_text_atomic(const std::string &path, const std::string &content);

std::string read_text(const std::string &path);

/// SHA-256 of a file's raw bytes, lowercase hex.
std::string file_sha256(const std::string &path);

/// Formats a double with enough digits to reproduce the value (%.12g).
std::string fmt(double v);

/// History CSV: epoch,train_loss,val_acc,val_macro_f1,lr
std::string history_csv(const std::vector<training::EpochStats> &history);

/// One experiment record: what ran, on which data, and what came out.
/// The resolved_args vector replayed through the CLI reproduces the run.
struct RunManifest {
  std::string command;
  std::vector<std::string> resolved_args;
  std::uint64_t seed = 0;
  std::string dataset_path;
  std::string dataset_sha256;
  double wall_clock_sec = 0.0;
  std::vector<std::pair<std::string, double>> metric_results;
  std::vector<std::string> artifact_paths;
  std::string notes;

  std::string to_json() const;
};

/// One trained arm of an ablation table.
struct ArmResult {
  std::string axis_value; // selection name, alpha, prompt mode, or depth
  bool ok = false;
  std::string error;
  double test_w_f1 = 0.0;
  double test_acc = 0.0;
  int best_epoch = 0;
  std::size_t params_total = 0;
  std::size_t params_trainable = 0;
  double trainable_fraction = 0.0;
  int seq_length = 0;
};

/// Trains one configuration and scores the requested split with the best
/// (early-stopped) checkpoint reloaded from its tensor map.
ArmResult run_arm(const data::Dataset &ds, const training::TrainConfig &tc,
                  const model::ModelConfig &mc, const std::string &axis_value);

/// All 7 non-empty subsets of {image, drift, text}, trained with a shared
/// seed and split. Row order mirrors the combination table: I, S, T, I+S,
/// S+T, I+T, I+S+T.
std::vector<ArmResult> ablate_embeddings(const data::Dataset &ds,
                                         const training::TrainConfig &tc,
                                         const model::ModelConfig &mc);

/// Full-selection model trained at each interpolation weight.
std::vector<ArmResult> sweep_alpha(const data::Dataset &ds,
                                   const training::TrainConfig &tc,
                                   const model::ModelConfig &mc,
                                   const std::vector<double> &alphas);

/// Prompt-construction arms: raw [T,I], raw [T,S,I], fused alone (m=0),
/// fused + frozen bank and fused + trainable bank at each length.
std::vector<ArmResult> ablate_prompt(const data::Dataset &ds,
                                     const training::TrainConfig &tc,
                                     const model::ModelConfig &mc,
                                     const std::vector<std::size_t> &lengths);

/// Depth arms holding d_model fixed.
std::vector<ArmResult> ablate_depth(const data::Dataset &ds,
                                    const training::TrainConfig &tc,
                                    const model::ModelConfig &mc,
                                    const std::vector<std::size_t> &depths);

std::string embeddings_csv(const std::vector<ArmResult> &rows);
std::string alpha_csv(const std::vector<ArmResult> &rows);
std::string prompt_csv(const std::vector<ArmResult> &rows);
std::string depth_csv(const std::vector<ArmResult> &rows);

} // namespace drifttune::harness

#endif

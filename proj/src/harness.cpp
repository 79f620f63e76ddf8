// SPDX-License-Identifier: Apache-2.0

#include "drifttune/harness.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "drifttune/sha256.hpp"

namespace drifttune::harness {

void write_text_atomic(const std::string &path, const std::string &content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out.is_open()) {
      throw IoError("cannot open '" + tmp + "' for writing");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out.good()) {
      throw IoError("write failure on '" + tmp + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move '" + tmp + "' to '" + path +
                  "': " + ec.message());
  }
}

std::string read_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw IoError("cannot open '" + path + "' for reading");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_sha256(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw IoError("cannot open '" + path + "' for hashing");
  }
  Sha256 h;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  const auto digest = h.digest();
  static const char *digits = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : digest) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string history_csv(const std::vector<training::EpochStats> &history) {
  std::string out = "epoch,train_loss,val_acc,val_macro_f1,lr\n";
  for (const auto &e : history) {
    out += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," +
           fmt(e.val_acc) + "," + fmt(e.val_macro_f1) + "," + fmt(e.lr) + "\n";
  }
  return out;
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["resolved_args"] = resolved_args;
  j["seed"] = seed;
  j["dataset_path"] = dataset_path;
  j["dataset_sha256"] = dataset_sha256;
  j["wall_clock_sec"] = wall_clock_sec;
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto &[name, value] : metric_results) {
    metrics[name] = value;
  }
  j["metric_results"] = metrics;
  j["artifact_paths"] = artifact_paths;
  j["notes"] = notes;
  return j.dump(2);
}

ArmResult run_arm(const data::Dataset &ds, const training::TrainConfig &tc,
                  const model::ModelConfig &mc,
                  const std::string &axis_value) {
  ArmResult arm;
  arm.axis_value = axis_value;
  try {
    auto result = training::train(ds, tc, mc);
    model::Classifier net(mc);
    net.load_tensor_map(result.best_tensors);
    auto test = training::evaluate(net, ds, data::Split::Test);
    arm.ok = true;
    arm.test_w_f1 = test.report.weighted_f1;
    arm.test_acc = test.report.accuracy;
    arm.best_epoch = result.best_epoch;
    auto counts = net.pipeline_counts();
    arm.params_total = counts.total;
    arm.params_trainable = counts.trainable;
    arm.trainable_fraction = counts.fraction;
    arm.seq_length = mc.prompt_mode == model::PromptMode::Fused
                         ? static_cast<int>(mc.bb.prompt_len) + 1
                         : static_cast<int>(mc.raw_order.size());
  } catch (const Error &e) {
    arm.ok = false;
    arm.error = e.what();
  }
  return arm;
}

std::vector<ArmResult> ablate_embeddings(const data::Dataset &ds,
                                         const training::TrainConfig &tc,
                                         const model::ModelConfig &mc) {
  static const char *kSubsets[] = {"I", "S", "T", "I+S", "S+T", "I+T", "I+S+T"};
  std::vector<ArmResult> rows;
  for (const char *sel : kSubsets) {
    model::ModelConfig arm_mc = mc;
    arm_mc.prompt_mode = model::PromptMode::Fused;
    arm_mc.selection = fusion::EmbeddingSelection::parse(sel);
    rows.push_back(run_arm(ds, tc, arm_mc, sel));
  }
  return rows;
}

std::vector<ArmResult> sweep_alpha(const data::Dataset &ds,
                                   const training::TrainConfig &tc,
                                   const model::ModelConfig &mc,
                                   const std::vector<double> &alphas) {
  if (alphas.empty()) {
    throw ConfigError("sweep_alpha: empty alpha grid");
  }
  std::vector<ArmResult> rows;
  for (double a : alphas) {
    model::ModelConfig arm_mc = mc;
    arm_mc.prompt_mode = model::PromptMode::Fused;
    arm_mc.selection = fusion::EmbeddingSelection::parse("I+S+T");
    arm_mc.alpha = a;
    rows.push_back(run_arm(ds, tc, arm_mc, fmt(a)));
  }
  return rows;
}

std::vector<ArmResult> ablate_prompt(const data::Dataset &ds,
                                     const training::TrainConfig &tc,
                                     const model::ModelConfig &mc,
                                     const std::vector<std::size_t> &lengths) {
  std::vector<ArmResult> rows;

  auto raw_arm = [&](const std::string &order, const std::string &name) {
    model::ModelConfig arm_mc = mc;
    arm_mc.prompt_mode = model::PromptMode::RawSequence;
    arm_mc.raw_order = order;
    arm_mc.bb.prompt_len = 0;
    rows.push_back(run_arm(ds, tc, arm_mc, name));
  };
  raw_arm("ti", "raw[T,I]");
  raw_arm("tsi", "raw[T,S,I]");

  auto fused_arm = [&](std::size_t m, bool trainable, const std::string &name) {
    model::ModelConfig arm_mc = mc;
    arm_mc.prompt_mode = model::PromptMode::Fused;
    arm_mc.bb.prompt_len = m;
    arm_mc.bb.max_positions = std::max(arm_mc.bb.max_positions, m + 1);
    arm_mc.bank_trainable = trainable;
    rows.push_back(run_arm(ds, tc, arm_mc, name));
  };
  fused_arm(0, false, "fused");
  for (std::size_t m : lengths) {
    fused_arm(m, false, "fused+frozen");
  }
  for (std::size_t m : lengths) {
    fused_arm(m, true, "fused+trainable");
  }
  return rows;
}

std::vector<ArmResult> ablate_depth(const data::Dataset &ds,
                                    const training::TrainConfig &tc,
                                    const model::ModelConfig &mc,
                                    const std::vector<std::size_t> &depths) {
  if (depths.empty()) {
    throw ConfigError("ablate_depth: empty depth grid");
  }
  std::vector<ArmResult> rows;
  for (std::size_t depth : depths) {
    model::ModelConfig arm_mc = mc;
    arm_mc.bb.n_layers = depth;
    rows.push_back(run_arm(ds, tc, arm_mc, std::to_string(depth)));
  }
  return rows;
}

namespace {

std::string metric_cell(const ArmResult &r, double value) {
  return r.ok ? fmt(value) : "nan";
}

} // namespace

std::string embeddings_csv(const std::vector<ArmResult> &rows) {
  std::string out = "selection,w_f1,acc\n";
  for (const auto &r : rows) {
    out += r.axis_value + "," + metric_cell(r, r.test_w_f1) + "," +
           metric_cell(r, r.test_acc) + "\n";
  }
  return out;
}

std::string alpha_csv(const std::vector<ArmResult> &rows) {
  std::string out = "alpha,w_f1,acc\n";
  for (const auto &r : rows) {
    out += r.axis_value + "," + metric_cell(r, r.test_w_f1) + "," +
           metric_cell(r, r.test_acc) + "\n";
  }
  return out;
}

std::string prompt_csv(const std::vector<ArmResult> &rows) {
  std::string out =
      "# word-instruction arms omitted: this build has no tokenizer\n"
      "mode,length,w_f1,acc\n";
  for (const auto &r : rows) {
    out += r.axis_value + "," + std::to_string(r.seq_length) + "," +
           metric_cell(r, r.test_w_f1) + "," + metric_cell(r, r.test_acc) +
           "\n";
  }
  return out;
}

std::string depth_csv(const std::vector<ArmResult> &rows) {
  std::string out = "L,w_f1,acc,params_total,params_trainable,trainable_fraction\n";
  for (const auto &r : rows) {
    out += r.axis_value + "," + metric_cell(r, r.test_w_f1) + "," +
           metric_cell(r, r.test_acc) + "," + std::to_string(r.params_total) +
           "," + std::to_string(r.params_trainable) + "," +
           metric_cell(r, r.trainable_fraction) + "\n";
  }
  return out;
}

} // namespace drifttune::harness

// SPDX-License-Identifier: Apache-2.0
//
// drifttune: SLERP-drift embedding fusion with LayerNorm-only tuning of a
// frozen transformer backbone, plus the experiment harness around it.
//
// Exit codes: 0 success, 1 check failure, 2 usage error, 3 runtime/data error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "drifttune/harness.hpp"

namespace fs = std::filesystem;
using namespace drifttune;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

// Output root override: relative --out paths are resolved against
// DRIFTTUNE_OUT_ROOT when it is set.
fs::path resolve_out(const std::string &out) {
  fs::path p(out);
  if (p.is_relative()) {
    if (const char *root = std::getenv("DRIFTTUNE_OUT_ROOT")) {
      return fs::path(root) / p;
    }
  }
  return p;
}

struct ModelFlags {
  std::size_t layers = 2;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t m = 10;
  std::size_t max_positions = 0; // 0 = fit to prompt length
  bool no_causal = false;
  double alpha = 0.8;
  std::string selection = "I+S+T";

  void attach(CLI::App *cmd) {
    cmd->add_option("--layers", layers, "Transformer blocks (L)")
        ->capture_default_str();
    cmd->add_option("--width", width, "Hidden width (d_g)")
        ->capture_default_str();
    cmd->add_option("--heads", heads, "Attention heads")->capture_default_str();
    cmd->add_option("--m", m, "Frozen prompt length")->capture_default_str();
    cmd->add_option("--max-positions", max_positions,
                    "Position-embedding rows (default: prompt length + 1)");
    cmd->add_flag("--no-causal", no_causal, "Disable the causal mask");
    cmd->add_option("--alpha", alpha,
                    "Interpolation weight toward the text embedding")
        ->capture_default_str();
    cmd->add_option("--selection", selection,
                    "Embeddings fed to the adapter, subset of I,S,T")
        ->capture_default_str();
  }

  model::ModelConfig to_config(const data::Dataset &ds,
                               std::uint64_t seed) const {
    model::ModelConfig mc;
    mc.bb.n_layers = layers;
    mc.bb.d_model = width;
    mc.bb.n_heads = heads;
    mc.bb.prompt_len = m;
    mc.bb.max_positions = max_positions > 0 ? max_positions : m + 1;
    mc.bb.causal = !no_causal;
    mc.d_c = ds.d_c;
    mc.k = static_cast<std::size_t>(ds.k);
    mc.alpha = alpha;
    mc.selection = fusion::EmbeddingSelection::parse(selection);
    mc.init_seed = seed;
    return mc;
  }

  std::vector<std::string> resolved_args() const {
    std::vector<std::string> args = {
        "--layers",  std::to_string(layers),
        "--width",   std::to_string(width),
        "--heads",   std::to_string(heads),
        "--m",       std::to_string(m),
        "--alpha",   harness::fmt(alpha),
        "--selection", selection};
    if (max_positions > 0) {
      args.push_back("--max-positions");
      args.push_back(std::to_string(max_positions));
    }
    if (no_causal) {
      args.push_back("--no-causal");
    }
    return args;
  }
};

struct TrainFlags {
  double lr = 1e-3;
  std::size_t batch = 96;
  int epochs = 200;
  double wd = 0.01;
  int patience = 20;
  std::uint64_t seed = 0;
  std::vector<double> split_fractions;
  bool grid = false;

  void attach(CLI::App *cmd) {
    cmd->add_option("--lr", lr, "Peak learning rate")->capture_default_str();
    cmd->add_option("--batch", batch, "Mini-batch size")->capture_default_str();
    cmd->add_option("--epochs", epochs, "Maximum epochs")
        ->capture_default_str();
    cmd->add_option("--wd", wd, "Decoupled weight decay")
        ->capture_default_str();
    cmd->add_option("--patience", patience,
                    "Epochs without val macro-F1 improvement before stopping")
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Seed for split/init/shuffle")
        ->capture_default_str();
    cmd->add_option("--split", split_fractions,
                    "Re-split fractions train val test (e.g. 0.6 0.2 0.2)")
        ->expected(3);
  }

  training::TrainConfig to_config() const {
    training::TrainConfig tc;
    tc.lr = lr;
    tc.batch_size = batch;
    tc.max_epochs = epochs;
    tc.weight_decay = wd;
    tc.patience = patience;
    tc.seed = seed;
    return tc;
  }

  std::vector<std::string> resolved_args() const {
    std::vector<std::string> args = {
        "--lr",       harness::fmt(lr),
        "--batch",    std::to_string(batch),
        "--epochs",   std::to_string(epochs),
        "--wd",       harness::fmt(wd),
        "--patience", std::to_string(patience),
        "--seed",     std::to_string(seed)};
    if (!split_fractions.empty()) {
      args.push_back("--split");
      for (double f : split_fractions) {
        args.push_back(harness::fmt(f));
      }
    }
    return args;
  }
};

struct SplitRecipe {
  bool applied = false;
  data::SplitFractions fractions;
  std::uint64_t seed = 0;
};

// Tags the dataset if it is untagged or an explicit --split was given. The
// recipe is recorded in the checkpoint sidecar; the assignment is a pure
// function of (ids, fractions, seed), so eval re-derives the same split.
SplitRecipe ensure_splits(data::Dataset &ds, const TrainFlags &tf) {
  SplitRecipe recipe;
  recipe.seed = tf.seed;
  if (!tf.split_fractions.empty()) {
    recipe.fractions = {tf.split_fractions[0], tf.split_fractions[1],
                        tf.split_fractions[2]};
    recipe.applied = true;
  } else if (ds.count_of(data::Split::Train) == 0 ||
             ds.count_of(data::Split::Val) == 0) {
    recipe.applied = true;
  }
  if (recipe.applied) {
    data::assign_splits(ds, recipe.fractions, recipe.seed);
  }
  return recipe;
}

void write_manifest(const fs::path &dir, const harness::RunManifest &m) {
  harness::write_text_atomic((dir / "manifest.json").string(), m.to_json());
}

std::string grid_csv(const training::GridResult &grid) {
  std::string out = "lr,batch,ok,best_epoch,val_acc,val_macro_f1\n";
  for (const auto &cell : grid.cells) {
    out += harness::fmt(cell.lr) + "," + std::to_string(cell.batch_size) + ",";
    if (cell.ok) {
      out += "1," + std::to_string(cell.result.best_epoch) + "," +
             harness::fmt(cell.result.best_val_acc) + "," +
             harness::fmt(cell.result.best_val_macro_f1);
    } else {
      out += "0,0,nan,nan";
    }
    out += "\n";
  }
  return out;
}

void save_checkpoint_files(const fs::path &dir, const model::ModelConfig &mc,
                           const store::TensorMap &tensors, int epoch,
                           double val_macro_f1, double val_acc,
                           const SplitRecipe &recipe) {
  store::write_tensors(tensors, (dir / "checkpoint.tensors").string());
  nlohmann::json side;
  side["model"] = nlohmann::json::parse(mc.to_json());
  side["epoch"] = epoch;
  side["val_macro_f1"] = val_macro_f1;
  side["val_acc"] = val_acc;
  side["split"] = {{"applied", recipe.applied},
                   {"fractions",
                    {recipe.fractions.train, recipe.fractions.val,
                     recipe.fractions.test}},
                   {"seed", recipe.seed}};
  harness::write_text_atomic((dir / "checkpoint.json").string(), side.dump(2));
}

int cmd_generate(const std::string &out, int classes, int per_class, int dim,
                 double sigma, bool drift_dependent, std::uint64_t seed) {
  Timer timer;
  data::SyntheticConfig sc;
  sc.k = classes;
  sc.n_per_class = per_class;
  sc.d_c = static_cast<std::size_t>(dim);
  sc.noise_sigma = sigma;
  sc.drift_dependence = drift_dependent;
  sc.seed = seed;
  auto ds = data::generate_synthetic(sc);
  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) {
    fs::create_directories(out_path.parent_path());
  }
  data::save_ndjson(ds, out_path.string());

  harness::RunManifest m;
  m.command = "generate";
  m.resolved_args = {"--classes", std::to_string(classes),
                     "--per-class", std::to_string(per_class),
                     "--dim", std::to_string(dim),
                     "--sigma", harness::fmt(sigma),
                     "--seed", std::to_string(seed),
                     "-o", out};
  if (drift_dependent) {
    m.resolved_args.push_back("--drift-dependent");
  }
  m.seed = seed;
  m.dataset_path = out_path.string();
  m.dataset_sha256 = harness::file_sha256(out_path.string());
  m.wall_clock_sec = timer.seconds();
  m.artifact_paths = {out_path.string()};
  harness::write_text_atomic(out_path.string() + ".manifest.json", m.to_json());

  std::cout << "wrote " << ds.size() << " samples (d_c=" << ds.d_c
            << ", k=" << ds.k << ") to " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_train(const std::string &data_path, const std::string &out,
              const ModelFlags &mf, const TrainFlags &tf) {
  Timer timer;
  auto ds = data::load_ndjson(data_path);
  const SplitRecipe recipe = ensure_splits(ds, tf);

  const fs::path dir = resolve_out(out);
  fs::create_directories(dir);

  auto mc = mf.to_config(ds, tf.seed);
  auto tc = tf.to_config();

  training::TrainResult best;
  std::string grid_note;
  if (tf.grid) {
    auto grid = training::grid_search(ds, tc, mc);
    harness::write_text_atomic((dir / "grid.csv").string(), grid_csv(grid));
    best = grid.best().result;
    tc.lr = grid.best().lr;
    tc.batch_size = grid.best().batch_size;
    grid_note = "grid: selected lr=" + harness::fmt(tc.lr) +
                " batch=" + std::to_string(tc.batch_size);
  } else {
    best = training::train(ds, tc, mc);
  }

  harness::write_text_atomic((dir / "history.csv").string(),
                             harness::history_csv(best.history));
  save_checkpoint_files(dir, mc, best.best_tensors, best.best_epoch,
                        best.best_val_macro_f1, best.best_val_acc, recipe);

  // Score the test split with the checkpoint as written to disk, so eval
  // on the same file reproduces these numbers bit for bit.
  auto net = model::Classifier::load_checkpoint(
      (dir / "checkpoint.tensors").string(), mc);
  const auto split = ds.count_of(data::Split::Test) > 0 ? data::Split::Test
                                                        : data::Split::Val;
  auto test = training::evaluate(net, ds, split);
  harness::write_text_atomic((dir / "report.json").string(),
                             test.report.to_json());

  harness::RunManifest m;
  m.command = "train";
  m.resolved_args = {"--data", data_path, "--out", out};
  for (const auto &a : mf.resolved_args()) {
    m.resolved_args.push_back(a);
  }
  for (const auto &a : tf.resolved_args()) {
    m.resolved_args.push_back(a);
  }
  if (tf.grid) {
    m.resolved_args.push_back("--grid");
  }
  m.seed = tf.seed;
  m.dataset_path = data_path;
  m.dataset_sha256 = harness::file_sha256(data_path);
  m.wall_clock_sec = timer.seconds();
  m.metric_results = {{"best_epoch", double(best.best_epoch)},
                      {"val_macro_f1", best.best_val_macro_f1},
                      {"val_acc", best.best_val_acc},
                      {"test_acc", test.report.accuracy},
                      {"test_w_f1", test.report.weighted_f1}};
  m.artifact_paths = {(dir / "checkpoint.tensors").string(),
                      (dir / "checkpoint.json").string(),
                      (dir / "history.csv").string(),
                      (dir / "report.json").string()};
  m.notes = grid_note;
  write_manifest(dir, m);

  std::cout << "best epoch " << best.best_epoch
            << "  val macro-F1 " << harness::fmt(best.best_val_macro_f1)
            << "  val acc " << harness::fmt(best.best_val_acc) << "\n"
            << "test acc " << harness::fmt(test.report.accuracy)
            << "  test W-F1 " << harness::fmt(test.report.weighted_f1) << "\n";
  return kExitOk;
}

int cmd_eval(const std::string &ckpt, const std::string &data_path,
             const std::string &split_name, bool paper_literal,
             const std::string &out) {
  auto ds = data::load_ndjson(data_path);
  const fs::path tensors_path(ckpt);
  fs::path sidecar = tensors_path;
  sidecar.replace_extension(".json");
  auto side = nlohmann::json::parse(harness::read_text(sidecar.string()));
  auto mc = model::ModelConfig::from_json(side.at("model").dump());

  // Replay the training-time split so scores refer to the same samples.
  if (side.contains("split") && side["split"]["applied"].get<bool>()) {
    data::SplitFractions f;
    f.train = side["split"]["fractions"][0].get<double>();
    f.val = side["split"]["fractions"][1].get<double>();
    f.test = side["split"]["fractions"][2].get<double>();
    data::assign_splits(ds, f, side["split"]["seed"].get<std::uint64_t>());
  }

  if (ds.d_c != mc.d_c) {
    throw DimensionError("checkpoint d_c=" + std::to_string(mc.d_c) +
                         " does not match dataset d_c=" +
                         std::to_string(ds.d_c));
  }
  if (static_cast<std::size_t>(ds.k) != mc.k) {
    throw DimensionError("checkpoint k=" + std::to_string(mc.k) +
                         " does not match dataset k=" + std::to_string(ds.k));
  }

  auto net = model::Classifier::load_checkpoint(tensors_path.string(), mc);
  auto result =
      training::evaluate(net, ds, data::parse_split(split_name), paper_literal);
  const std::string json = result.report.to_json();
  if (!out.empty()) {
    harness::write_text_atomic(resolve_out(out).string(), json);
  }
  std::cout << json << "\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
  // The reference tiny configuration.
  model::ModelConfig mc;
  mc.bb.n_layers = 2;
  mc.bb.d_model = 16;
  mc.bb.n_heads = 2;
  mc.bb.prompt_len = 4;
  mc.bb.max_positions = 5;
  mc.d_c = 8;
  mc.k = 2;
  mc.init_seed = seed;
  auto report = training::gradcheck(mc, seed);
  for (const auto &t : report.tensors) {
    std::cout << (t.max_rel_err < 1e-4 ? "ok   " : "FAIL ") << t.name << "  "
              << harness::fmt(t.max_rel_err) << "  (" << t.elements
              << " elements)\n";
  }
  if (!report.pass) {
    std::cout << "gradcheck FAILED: worst tensor " << report.worst_tensor
              << " rel err " << harness::fmt(report.worst) << "\n";
    return kExitCheckFailure;
  }
  std::cout << "gradcheck passed: worst rel err " << harness::fmt(report.worst)
            << " (" << report.worst_tensor << ")\n";
  return kExitOk;
}

int run_ablation(const std::string &kind, const std::string &data_path,
                 const std::string &out, const ModelFlags &mf,
                 const TrainFlags &tf, const std::vector<double> &alphas,
                 const std::vector<std::size_t> &lengths,
                 const std::vector<std::size_t> &depths) {
  Timer timer;
  auto ds = data::load_ndjson(data_path);
  ensure_splits(ds, tf);
  const fs::path dir = resolve_out(out);
  fs::create_directories(dir);

  auto mc = mf.to_config(ds, tf.seed);
  auto tc = tf.to_config();

  std::vector<harness::ArmResult> rows;
  std::string csv, csv_name;
  if (kind == "embeddings") {
    rows = harness::ablate_embeddings(ds, tc, mc);
    csv = harness::embeddings_csv(rows);
    csv_name = "embeddings.csv";
  } else if (kind == "alpha") {
    rows = harness::sweep_alpha(ds, tc, mc, alphas);
    csv = harness::alpha_csv(rows);
    csv_name = "alpha.csv";
  } else if (kind == "prompt") {
    // Prompt arms need room for the longest bank.
    std::size_t longest = 0;
    for (auto m : lengths) {
      longest = std::max(longest, m);
    }
    auto arm_mf = mf;
    arm_mf.max_positions = std::max<std::size_t>(mf.max_positions, longest + 1);
    mc = arm_mf.to_config(ds, tf.seed);
    rows = harness::ablate_prompt(ds, tc, mc, lengths);
    csv = harness::prompt_csv(rows);
    csv_name = "prompt.csv";
  } else {
    rows = harness::ablate_depth(ds, tc, mc, depths);
    csv = harness::depth_csv(rows);
    csv_name = "depth.csv";
  }
  harness::write_text_atomic((dir / csv_name).string(), csv);

  harness::RunManifest m;
  m.command = "ablate-" + kind;
  m.resolved_args = {"--data", data_path, "--out", out};
  for (const auto &a : mf.resolved_args()) {
    m.resolved_args.push_back(a);
  }
  for (const auto &a : tf.resolved_args()) {
    m.resolved_args.push_back(a);
  }
  m.seed = tf.seed;
  m.dataset_path = data_path;
  m.dataset_sha256 = harness::file_sha256(data_path);
  m.wall_clock_sec = timer.seconds();
  for (const auto &r : rows) {
    if (r.ok) {
      m.metric_results.emplace_back(r.axis_value + ".acc", r.test_acc);
      m.metric_results.emplace_back(r.axis_value + ".w_f1", r.test_w_f1);
    } else {
      m.notes += r.axis_value + ": " + r.error + "; ";
    }
  }
  m.artifact_paths = {(dir / csv_name).string()};
  write_manifest(dir, m);

  std::cout << csv;
  return kExitOk;
}

int cmd_export(const std::string &data_path, double alpha,
               const std::string &out) {
  auto ds = data::load_ndjson(data_path);
  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) {
    fs::create_directories(out_path.parent_path());
  }
  data::export_embeddings(ds, alpha, out_path.string());
  std::cout << "wrote " << 3 * ds.size() << " rows to " << out_path.string()
            << "\n";
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{
      "drifttune: spherical-interpolation drift features, frozen-backbone "
      "LayerNorm tuning, and the ablation harness around them.\n\n"
      "File formats:\n"
      "  dataset      NDJSON, one object per line: {\"id\": str, "
      "\"image_emb\": [f..], \"text_emb\": [f..], \"label\": int, \"split\": "
      "str?}\n"
      "  checkpoint   named-tensor container (8-byte LE header length, JSON "
      "header, f32 payload) + .json sidecar\n"
      "  history.csv  epoch,train_loss,val_acc,val_macro_f1,lr\n"
      "  ablation CSVs  embeddings: selection,w_f1,acc | alpha: "
      "alpha,w_f1,acc | prompt: mode,length,w_f1,acc | depth: "
      "L,w_f1,acc,params_total,params_trainable,trainable_fraction\n"
      "  export CSV   id,kind,label,c0..c{d_c-1}\n\n"
      "DRIFTTUNE_OUT_ROOT prefixes relative output paths.\n"
      "Exit codes: 0 success, 1 check failure, 2 usage error, 3 runtime "
      "error."};
  app.require_subcommand(1);

  // generate
  auto *gen = app.add_subcommand("generate", "Write a synthetic dataset");
  std::string gen_out;
  int gen_classes = 2, gen_per_class = 100, gen_dim = 32;
  double gen_sigma = 0.05;
  bool gen_drift = false;
  std::uint64_t gen_seed = 0;
  gen->add_option("-o,--out", gen_out, "Output NDJSON path")->required();
  gen->add_option("--classes", gen_classes, "Number of classes")
      ->capture_default_str();
  gen->add_option("--per-class", gen_per_class, "Samples per class")
      ->capture_default_str();
  gen->add_option("--dim", gen_dim, "Embedding dimension d_c")
      ->capture_default_str();
  gen->add_option("--sigma", gen_sigma, "Prototype noise sigma")
      ->capture_default_str();
  gen->add_flag("--drift-dependent", gen_drift,
                "Labels from the SLERP-midpoint hyperplane rule (k=2)");
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();

  // train
  auto *tr = app.add_subcommand("train", "Train and write a checkpoint");
  std::string tr_data, tr_out = "run";
  ModelFlags tr_mf;
  TrainFlags tr_tf;
  tr->add_option("--data", tr_data, "Dataset NDJSON")
      ->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Output directory")->capture_default_str();
  tr_mf.attach(tr);
  tr_tf.attach(tr);
  tr->add_flag("--grid", tr_tf.grid,
               "Search lr x batch over {1e-4,5e-4,1e-3} x {96,128} and keep "
               "the cell with the best early-stopped val accuracy");

  // eval
  auto *ev = app.add_subcommand("eval", "Score a checkpoint on a split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
  bool ev_literal = false;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint.tensors path")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Dataset NDJSON")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--split", ev_split, "train|val|test")->capture_default_str();
  ev->add_flag("--paper-literal", ev_literal,
               "Divide weighted averages by the class count");
  ev->add_option("-o,--out", ev_out, "Also write the report JSON here");

  // gradcheck
  auto *gc = app.add_subcommand(
      "gradcheck", "Finite-difference check of every trainable tensor");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed, "Seed")->capture_default_str();

  // ablations
  std::string ab_data, ab_out;
  ModelFlags ab_mf;
  TrainFlags ab_tf;
  std::vector<double> ab_alphas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::size_t> ab_lengths = {5, 10, 14};
  std::vector<std::size_t> ab_depths = {6, 12};
  auto attach_ablation = [&](CLI::App *cmd) {
    cmd->add_option("--data", ab_data, "Dataset NDJSON")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", ab_out, "Output directory")->required();
    ab_mf.attach(cmd);
    ab_tf.attach(cmd);
  };
  auto *ab_emb = app.add_subcommand(
      "ablate-embeddings", "Train all 7 non-empty subsets of {I,S,T}");
  attach_ablation(ab_emb);
  auto *ab_alpha = app.add_subcommand(
      "sweep-alpha", "Train the full selection across interpolation weights");
  attach_ablation(ab_alpha);
  ab_alpha->add_option("--alphas", ab_alphas, "Alpha grid")
      ->capture_default_str();
  auto *ab_prompt = app.add_subcommand(
      "ablate-prompt", "Raw-sequence, fused-only and banked prompt arms");
  attach_ablation(ab_prompt);
  ab_prompt->add_option("--lengths", ab_lengths, "Bank lengths")
      ->capture_default_str();
  auto *ab_depth =
      app.add_subcommand("ablate-depth", "Train at several block counts");
  attach_ablation(ab_depth);
  ab_depth->add_option("--depths", ab_depths, "Depth grid")
      ->capture_default_str();

  // export-embeddings
  auto *ex = app.add_subcommand("export-embeddings",
                                "CSV of image/text/slerp rows per sample");
  std::string ex_data, ex_out;
  double ex_alpha = 0.8;
  ex->add_option("--data", ex_data, "Dataset NDJSON")
      ->required()
      ->check(CLI::ExistingFile);
  ex->add_option("-o,--out", ex_out, "Output CSV path")->required();
  ex->add_option("--alpha", ex_alpha, "Interpolation weight")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(gen_out, gen_classes, gen_per_class, gen_dim,
                          gen_sigma, gen_drift, gen_seed);
    }
    if (tr->parsed()) {
      return cmd_train(tr_data, tr_out, tr_mf, tr_tf);
    }
    if (ev->parsed()) {
      return cmd_eval(ev_ckpt, ev_data, ev_split, ev_literal, ev_out);
    }
    if (gc->parsed()) {
      return cmd_gradcheck(gc_seed);
    }
    if (ab_emb->parsed()) {
      return run_ablation("embeddings", ab_data, ab_out, ab_mf, ab_tf,
                          ab_alphas, ab_lengths, ab_depths);
    }
    if (ab_alpha->parsed()) {
      return run_ablation("alpha", ab_data, ab_out, ab_mf, ab_tf, ab_alphas,
                          ab_lengths, ab_depths);
    }
    if (ab_prompt->parsed()) {
      return run_ablation("prompt", ab_data, ab_out, ab_mf, ab_tf, ab_alphas,
                          ab_lengths, ab_depths);
    }
    if (ab_depth->parsed()) {
      return run_ablation("depth", ab_data, ab_out, ab_mf, ab_tf, ab_alphas,
                          ab_lengths, ab_depths);
    }
    if (ex->parsed()) {
      return cmd_export(ex_data, ex_alpha, ex_out);
    }
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError &e) {
    std::cerr << "error: " << e.what() << " (epoch " << e.epoch << ", step "
              << e.step << ")\n";
    return kExitRuntime;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

// SPDX-License-Identifier: Apache-2.0

#include "drifttune/model.hpp"

#include <cmath>

#include <json.hpp>

#include "drifttune/geometry.hpp"

namespace drifttune::model {

void ModelConfig::validate() const {
  bb.validate();
  if (d_c < 2) {
    throw ConfigError("model: d_c must be >= 2");
  }
  if (k < 2) {
    throw ConfigError("model: k must be >= 2");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw ConfigError("model: alpha outside [0, 1]");
  }
  if (prompt_mode == PromptMode::Fused) {
    if (selection.count() == 0) {
      throw ConfigError("model: empty embedding selection");
    }
  } else {
    if (raw_order.size() < 2) {
      throw ConfigError("model: raw sequence needs at least two embeddings");
    }
    for (char c : raw_order) {
      if (c != 't' && c != 's' && c != 'i') {
        throw ConfigError("model: raw_order may only contain t, s, i");
      }
    }
    if (raw_order.size() + 1 > bb.max_positions + 1) {
      throw ConfigError("model: raw sequence longer than max_positions");
    }
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["n_layers"] = bb.n_layers;
  j["d_model"] = bb.d_model;
  j["n_heads"] = bb.n_heads;
  j["prompt_len"] = bb.prompt_len;
  j["max_positions"] = bb.max_positions;
  j["causal"] = bb.causal;
  j["d_c"] = d_c;
  j["k"] = k;
  j["alpha"] = alpha;
  j["selection"] = selection.name();
  j["prompt_mode"] = prompt_mode == PromptMode::Fused ? "fused" : "raw";
  j["raw_order"] = raw_order;
  j["bank_trainable"] = bank_trainable;
  j["init_seed"] = init_seed;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string &text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("model config: bad JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.bb.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.bb.d_model = j.at("d_model").get<std::size_t>();
    cfg.bb.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.bb.prompt_len = j.at("prompt_len").get<std::size_t>();
    cfg.bb.max_positions = j.at("max_positions").get<std::size_t>();
    cfg.bb.causal = j.at("causal").get<bool>();
    cfg.d_c = j.at("d_c").get<std::size_t>();
    cfg.k = j.at("k").get<std::size_t>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.selection = fusion::EmbeddingSelection::parse(j.at("selection"));
    cfg.prompt_mode = j.at("prompt_mode").get<std::string>() == "raw"
                          ? PromptMode::RawSequence
                          : PromptMode::Fused;
    cfg.raw_order = j.at("raw_order").get<std::string>();
    cfg.bank_trainable = j.at("bank_trainable").get<bool>();
    cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("model config: missing field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

std::size_t fused_in_dim(const ModelConfig &cfg) {
  return static_cast<std::size_t>(cfg.selection.count()) * cfg.d_c;
}

} // namespace

Classifier::Classifier(const ModelConfig &cfg)
    : cfg_((cfg.validate(), cfg)), bb_grads_(cfg.bb) {
  // Deterministic init order: backbone, bank, adapter/lift, head.
  Rng rng(cfg_.init_seed);
  weights_ = backbone::BackboneWeights::init(cfg_.bb, rng);
  bank_ = backbone::PromptBank::init(cfg_.bb.prompt_len, cfg_.bb.d_model, rng);
  if (cfg_.prompt_mode == PromptMode::Fused) {
    adapter_ = fusion::FusionParams::init(fused_in_dim(cfg_), cfg_.d_c,
                                          cfg_.bb.d_model, rng);
  } else {
    lift_ = Mat(cfg_.d_c, cfg_.bb.d_model);
    xavier_uniform(lift_, rng);
  }
  head_ = backbone::HeadParams::init(cfg_.bb.d_model, cfg_.k, rng);

  adapter_grads_ = fusion::FfnGrads(adapter_);
  lift_grad_ = Mat(lift_.rows, lift_.cols);
  if (cfg_.bank_trainable) {
    bank_grad_ = Mat(bank_.vectors.rows, bank_.vectors.cols);
  }
  head_w_grad_ = Mat(head_.w.rows, head_.w.cols);
  head_b_grad_ = Mat(1, cfg_.k);
  beta_grad_ = Mat(1, 1);
}

struct Classifier::SampleFlow {
  geometry::ConceptTriple triple;
  Vec concat;
  Vec fused;
  backbone::ForwardCache cache;
  Mat hidden;   // S x d_g
  Vec f_prime;
  bool blended = false;
};

std::vector<Vec> Classifier::build_prompt(const data::Sample &s,
                                          SampleFlow *flow) const {
  if (s.image_emb.size() != cfg_.d_c || s.text_emb.size() != cfg_.d_c) {
    throw DimensionError("sample '" + s.id + "': embedding width " +
                         std::to_string(s.image_emb.size()) +
                         " does not match model d_c=" +
                         std::to_string(cfg_.d_c));
  }
  auto triple = geometry::concept_triple(s.image_emb, s.text_emb, cfg_.alpha);
  if (cfg_.prompt_mode == PromptMode::Fused) {
    Vec x = fusion::concat_triple(triple, cfg_.selection);
    Vec f = fusion::ffn_forward(adapter_, x);
    auto seq = backbone::assemble_prompt(bank_, f);
    if (flow) {
      flow->triple = triple;
      flow->concat = std::move(x);
      flow->fused = std::move(f);
    }
    return seq;
  }
  std::vector<Vec> seq;
  seq.reserve(cfg_.raw_order.size());
  for (char c : cfg_.raw_order) {
    const Vec &e = c == 'i'   ? triple.e_img.components
                   : c == 's' ? triple.e_drift.components
                              : triple.e_text.components;
    Vec lifted(cfg_.bb.d_model, 0.0);
    for (std::size_t r = 0; r < cfg_.d_c; ++r) {
      const double ev = e[r];
      const double *wr = lift_.row(r);
      for (std::size_t j = 0; j < cfg_.bb.d_model; ++j) {
        lifted[j] += ev * wr[j];
      }
    }
    seq.push_back(std::move(lifted));
  }
  if (flow) {
    flow->triple = triple;
  }
  return seq;
}

Vec Classifier::logits_for(const data::Sample &s, SampleFlow *flow) const {
  SampleFlow local;
  SampleFlow &fl = flow ? *flow : local;
  auto prompt = build_prompt(s, &fl);
  fl.hidden = backbone::forward(cfg_.bb, weights_, prompt, &fl.cache);
  if (fl.hidden.rows >= 2) {
    fl.f_prime = backbone::blend(fl.hidden, head_.beta.at(0, 0));
    fl.blended = true;
  } else {
    // Single-position prompt (m = 0): nothing to blend with.
    fl.f_prime.assign(fl.hidden.row(0), fl.hidden.row(0) + fl.hidden.cols);
    fl.blended = false;
  }
  Vec logits(cfg_.k);
  for (std::size_t j = 0; j < cfg_.k; ++j) {
    logits[j] = head_.b.at(0, j);
  }
  for (std::size_t i = 0; i < fl.f_prime.size(); ++i) {
    const double f = fl.f_prime[i];
    const double *wr = head_.w.row(i);
    for (std::size_t j = 0; j < cfg_.k; ++j) {
      logits[j] += f * wr[j];
    }
  }
  return logits;
}

Vec Classifier::predict_probs(const data::Sample &s) const {
  Vec z = logits_for(s, nullptr);
  double mx = z[0];
  for (double v : z) {
    mx = std::max(mx, v);
  }
  double denom = 0.0;
  for (auto &v : z) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (auto &v : z) {
    v /= denom;
  }
  return z;
}

int Classifier::predict(const data::Sample &s) const {
  Vec p = predict_probs(s);
  int best = 0;
  for (std::size_t j = 1; j < p.size(); ++j) {
    if (p[j] > p[best]) {
      best = static_cast<int>(j);
    }
  }
  return best;
}

namespace {

double lse(const Vec &z) {
  double mx = z[0];
  for (double v : z) {
    mx = std::max(mx, v);
  }
  double s = 0.0;
  for (double v : z) {
    s += std::exp(v - mx);
  }
  return mx + std::log(s);
}

} // namespace

double Classifier::batch_loss(
    const std::vector<const data::Sample *> &batch) const {
  if (batch.empty()) {
    throw ConfigError("batch_loss: empty batch");
  }
  double total = 0.0;
  for (const auto *s : batch) {
    if (s->label < 0 || static_cast<std::size_t>(s->label) >= cfg_.k) {
      throw LabelError("sample '" + s->id + "': label out of range");
    }
    Vec z = logits_for(*s, nullptr);
    total += lse(z) - z[static_cast<std::size_t>(s->label)];
  }
  return total / static_cast<double>(batch.size());
}

double Classifier::forward_backward(
    const std::vector<const data::Sample *> &batch) {
  if (batch.empty()) {
    throw ConfigError("forward_backward: empty batch");
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const std::size_t d = cfg_.bb.d_model;
  double total = 0.0;

  for (const auto *s : batch) {
    if (s->label < 0 || static_cast<std::size_t>(s->label) >= cfg_.k) {
      throw LabelError("sample '" + s->id + "': label out of range");
    }
    SampleFlow fl;
    Vec z = logits_for(*s, &fl);
    const double z_lse = lse(z);
    total += z_lse - z[static_cast<std::size_t>(s->label)];

    // dLoss/dlogits = (softmax - onehot) / N
    Vec dlogits(cfg_.k);
    for (std::size_t j = 0; j < cfg_.k; ++j) {
      dlogits[j] = std::exp(z[j] - z_lse) * inv_n;
    }
    dlogits[static_cast<std::size_t>(s->label)] -= inv_n;

    // Head: logits = f' W + b
    Vec df(fl.f_prime.size(), 0.0);
    for (std::size_t i = 0; i < fl.f_prime.size(); ++i) {
      const double f = fl.f_prime[i];
      const double *wr = head_.w.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < cfg_.k; ++j) {
        head_w_grad_.at(i, j) += f * dlogits[j];
        acc += wr[j] * dlogits[j];
      }
      df[i] = acc;
    }
    for (std::size_t j = 0; j < cfg_.k; ++j) {
      head_b_grad_.at(0, j) += dlogits[j];
    }

    // Blend: f' = beta H[-1] + (1 - beta) H[-2]
    const std::size_t rows = fl.hidden.rows;
    Mat dh(rows, d);
    if (fl.blended) {
      const double beta = head_.beta.at(0, 0);
      const double *last = fl.hidden.row(rows - 1);
      const double *prev = fl.hidden.row(rows - 2);
      double dbeta = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dbeta += df[j] * (last[j] - prev[j]);
        dh.at(rows - 1, j) = beta * df[j];
        dh.at(rows - 2, j) = (1.0 - beta) * df[j];
      }
      beta_grad_.at(0, 0) += dbeta;
    } else {
      for (std::size_t j = 0; j < d; ++j) {
        dh.at(rows - 1, j) = df[j];
      }
    }

    Mat dprompt =
        backbone::backward(cfg_.bb, weights_, fl.cache, dh, bb_grads_);

    if (cfg_.prompt_mode == PromptMode::Fused) {
      if (cfg_.bank_trainable) {
        for (std::size_t i = 0; i + 1 < rows; ++i) {
          const double *dr = dprompt.row(i);
          double *br = bank_grad_.row(i);
          for (std::size_t j = 0; j < d; ++j) {
            br[j] += dr[j];
          }
        }
      }
      Vec dfused(dprompt.row(rows - 1), dprompt.row(rows - 1) + d);
      fusion::ffn_backward(adapter_, fl.concat, dfused, adapter_grads_);
    } else {
      for (std::size_t pos = 0; pos < cfg_.raw_order.size(); ++pos) {
        const char c = cfg_.raw_order[pos];
        const Vec &e = c == 'i'   ? fl.triple.e_img.components
                       : c == 's' ? fl.triple.e_drift.components
                                  : fl.triple.e_text.components;
        const double *dr = dprompt.row(pos);
        for (std::size_t r = 0; r < cfg_.d_c; ++r) {
          double *gr = lift_grad_.row(r);
          const double ev = e[r];
          for (std::size_t j = 0; j < d; ++j) {
            gr[j] += ev * dr[j];
          }
        }
      }
    }
  }
  return total * inv_n;
}

void Classifier::zero_grads() {
  adapter_grads_.zero();
  lift_grad_.zero();
  if (cfg_.bank_trainable) {
    bank_grad_.zero();
  }
  bb_grads_.zero();
  head_w_grad_.zero();
  head_b_grad_.zero();
  beta_grad_.zero();
}

std::vector<ParamRef> Classifier::parameters() {
  std::vector<ParamRef> out;
  auto add = [&](const std::string &name, Mat &value, Mat *grad,
                 bool trainable, bool decay) {
    out.push_back(ParamRef{name, &value, grad, trainable, decay});
  };

  if (cfg_.prompt_mode == PromptMode::Fused) {
    add("adapter.fc1.weight", adapter_.w1, &adapter_grads_.w1, true, true);
    add("adapter.fc1.bias", adapter_.b1, &adapter_grads_.b1, true, false);
    add("adapter.fc2.weight", adapter_.w2, &adapter_grads_.w2, true, true);
    add("adapter.fc2.bias", adapter_.b2, &adapter_grads_.b2, true, false);
  } else {
    add("lift.weight", lift_, &lift_grad_, true, true);
  }
  if (bank_.vectors.rows > 0) {
    add("prompt.bank", bank_.vectors,
        cfg_.bank_trainable ? &bank_grad_ : nullptr, cfg_.bank_trainable,
        cfg_.bank_trainable);
  }
  for (std::size_t i = 0; i < weights_.blocks.size(); ++i) {
    const std::string p = "h." + std::to_string(i) + ".";
    auto &b = weights_.blocks[i];
    auto &g = bb_grads_.blocks[i];
    add(p + "ln_1.weight", b.ln1_g, &g.ln1_g, true, false);
    add(p + "ln_1.bias", b.ln1_b, &g.ln1_b, true, false);
    add(p + "attn.c_attn.weight", b.attn_qkv_w, nullptr, false, false);
    add(p + "attn.c_attn.bias", b.attn_qkv_b, nullptr, false, false);
    add(p + "attn.c_proj.weight", b.attn_proj_w, nullptr, false, false);
    add(p + "attn.c_proj.bias", b.attn_proj_b, nullptr, false, false);
    add(p + "ln_2.weight", b.ln2_g, &g.ln2_g, true, false);
    add(p + "ln_2.bias", b.ln2_b, &g.ln2_b, true, false);
    add(p + "mlp.c_fc.weight", b.mlp_fc_w, nullptr, false, false);
    add(p + "mlp.c_fc.bias", b.mlp_fc_b, nullptr, false, false);
    add(p + "mlp.c_proj.weight", b.mlp_proj_w, nullptr, false, false);
    add(p + "mlp.c_proj.bias", b.mlp_proj_b, nullptr, false, false);
  }
  add("ln_f.weight", weights_.ln_f_g, &bb_grads_.ln_f_g, true, false);
  add("ln_f.bias", weights_.ln_f_b, &bb_grads_.ln_f_b, true, false);
  add("wpe.weight", weights_.pos_emb, &bb_grads_.pos_emb, true, true);
  add("head.weight", head_.w, &head_w_grad_, true, true);
  add("head.bias", head_.b, &head_b_grad_, true, false);
  add("head.beta", head_.beta, &beta_grad_, true, false);
  return out;
}

std::vector<std::pair<std::string, const Mat *>> Classifier::frozen_tensors() {
  std::vector<std::pair<std::string, const Mat *>> out;
  for (const auto &p : parameters()) {
    if (!p.trainable) {
      out.emplace_back(p.name, p.value);
    }
  }
  return out;
}

backbone::ParamCounts Classifier::backbone_counts() const {
  return backbone::count_backbone_params(cfg_.bb);
}

backbone::ParamCounts Classifier::pipeline_counts() const {
  auto counts = backbone::count_backbone_params(cfg_.bb);
  auto add = [&](std::size_t n, bool trainable) {
    counts.total += n;
    if (trainable) {
      counts.trainable += n;
    }
  };
  if (cfg_.prompt_mode == PromptMode::Fused) {
    add(adapter_.w1.size() + adapter_.b1.size() + adapter_.w2.size() +
            adapter_.b2.size(),
        true);
  } else {
    add(lift_.size(), true);
  }
  add(bank_.vectors.size(), cfg_.bank_trainable);
  add(head_.w.size() + head_.b.size() + head_.beta.size(), true);
  counts.fraction = static_cast<double>(counts.trainable) /
                    static_cast<double>(counts.total);
  return counts;
}

store::TensorMap Classifier::tensor_map() {
  store::TensorMap map;
  for (const auto &p : parameters()) {
    map.emplace(p.name, *p.value);
  }
  return map;
}

void Classifier::load_tensor_map(const store::TensorMap &map) {
  for (auto &p : parameters()) {
    auto it = map.find(p.name);
    if (it == map.end()) {
      throw FormatError("checkpoint: missing tensor '" + p.name + "'");
    }
    if (!it->second.same_shape(*p.value)) {
      throw FormatError("checkpoint: tensor '" + p.name + "' shape mismatch");
    }
    *p.value = it->second;
  }
  weights_.revision++;
}

void Classifier::save_checkpoint(const std::string &path) {
  store::write_tensors(tensor_map(), path);
}

Classifier Classifier::load_checkpoint(const std::string &tensors_path,
                                       const ModelConfig &cfg) {
  Classifier c(cfg);
  c.load_tensor_map(store::read_tensors(tensors_path));
  return c;
}

} // namespace drifttune::model

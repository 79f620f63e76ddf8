// SPDX-License-Identifier: Apache-2.0

#include "drifttune/backbone.hpp"

#include <cmath>

#include "drifttune/errors.hpp"
#include "drifttune/tensor_store.hpp"

namespace drifttune::backbone {

namespace {
constexpr double kLnEps = 1e-5;
} // namespace

void BackboneConfig::validate() const {
  if (n_layers < 1) {
    throw ConfigError("backbone: n_layers must be >= 1");
  }
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw ConfigError("backbone: d_model must be divisible by n_heads");
  }
  if (max_positions < prompt_len + 1) {
    throw ConfigError("backbone: max_positions must be >= prompt_len + 1");
  }
}

PromptBank PromptBank::init(std::size_t m, std::size_t d_g, Rng &rng) {
  PromptBank bank;
  bank.vectors = Mat(m, d_g);
  if (m > 0) {
    xavier_uniform(bank.vectors, rng);
  }
  return bank;
}

BackboneWeights BackboneWeights::init(const BackboneConfig &cfg, Rng &rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  BackboneWeights w;
  w.pos_emb = Mat(cfg.max_positions, d);
  xavier_uniform(w.pos_emb, rng);
  w.ln_f_g = Mat(1, d);
  w.ln_f_g.fill(1.0);
  w.ln_f_b = Mat(1, d);
  for (std::size_t b = 0; b < cfg.n_layers; ++b) {
    BlockWeights blk;
    blk.ln1_g = Mat(1, d);
    blk.ln1_g.fill(1.0);
    blk.ln1_b = Mat(1, d);
    blk.attn_qkv_w = Mat(d, 3 * d);
    xavier_uniform(blk.attn_qkv_w, rng);
    blk.attn_qkv_b = Mat(1, 3 * d);
    blk.attn_proj_w = Mat(d, d);
    xavier_uniform(blk.attn_proj_w, rng);
    blk.attn_proj_b = Mat(1, d);
    blk.ln2_g = Mat(1, d);
    blk.ln2_g.fill(1.0);
    blk.ln2_b = Mat(1, d);
    blk.mlp_fc_w = Mat(d, cfg.mlp_dim());
    xavier_uniform(blk.mlp_fc_w, rng);
    blk.mlp_fc_b = Mat(1, cfg.mlp_dim());
    blk.mlp_proj_w = Mat(cfg.mlp_dim(), d);
    xavier_uniform(blk.mlp_proj_w, rng);
    blk.mlp_proj_b = Mat(1, d);
    w.blocks.push_back(std::move(blk));
  }
  return w;
}

HeadParams HeadParams::init(std::size_t d_g, std::size_t k, Rng &rng) {
  HeadParams h;
  h.w = Mat(d_g, k);
  xavier_uniform(h.w, rng);
  h.b = Mat(1, k);
  h.beta = Mat(1, 1);
  h.beta.at(0, 0) = 0.5;
  return h;
}

BackboneGrads::BackboneGrads(const BackboneConfig &cfg) {
  const std::size_t d = cfg.d_model;
  for (std::size_t b = 0; b < cfg.n_layers; ++b) {
    blocks.push_back(BlockGrads{Mat(1, d), Mat(1, d), Mat(1, d), Mat(1, d)});
  }
  ln_f_g = Mat(1, d);
  ln_f_b = Mat(1, d);
  pos_emb = Mat(cfg.max_positions, d);
}

void BackboneGrads::zero() {
  for (auto &b : blocks) {
    b.ln1_g.zero();
    b.ln1_b.zero();
    b.ln2_g.zero();
    b.ln2_b.zero();
  }
  ln_f_g.zero();
  ln_f_b.zero();
  pos_emb.zero();
}

std::vector<Vec> assemble_prompt(const PromptBank &bank, const Vec &fused) {
  if (bank.vectors.rows > 0 && bank.vectors.cols != fused.size()) {
    throw DimensionError("assemble_prompt: bank width does not match fused");
  }
  std::vector<Vec> seq;
  seq.reserve(bank.vectors.rows + 1);
  for (std::size_t i = 0; i < bank.vectors.rows; ++i) {
    seq.emplace_back(bank.vectors.row(i), bank.vectors.row(i) + bank.vectors.cols);
  }
  seq.push_back(fused);
  return seq;
}

namespace {

// y = g * xhat + b per row; xhat and rstd are cached for backward.
void layer_norm(const Mat &x, const Mat &g, const Mat &b, Mat &y, Mat &xhat,
                Vec &rstd) {
  const std::size_t s = x.rows, d = x.cols;
  y = Mat(s, d);
  xhat = Mat(s, d);
  rstd.assign(s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    const double *xr = x.row(i);
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mu += xr[j];
    }
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + kLnEps);
    rstd[i] = r;
    double *xh = xhat.row(i);
    double *yr = y.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (xr[j] - mu) * r;
      yr[j] = g.at(0, j) * xh[j] + b.at(0, j);
    }
  }
}

// Returns dx; accumulates dgain/dbias.
Mat layer_norm_backward(const Mat &g, const Mat &xhat, const Vec &rstd,
                        const Mat &dy, Mat &dgain, Mat &dbias) {
  const std::size_t s = dy.rows, d = dy.cols;
  Mat dx(s, d);
  Vec dxhat(d);
  for (std::size_t i = 0; i < s; ++i) {
    const double *xh = xhat.row(i);
    const double *dyr = dy.row(i);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dgain.at(0, j) += dyr[j] * xh[j];
      dbias.at(0, j) += dyr[j];
      dxhat[j] = dyr[j] * g.at(0, j);
      m1 += dxhat[j];
      m2 += dxhat[j] * xh[j];
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    double *dxr = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      dxr[j] = rstd[i] * (dxhat[j] - m1 - xh[j] * m2);
    }
  }
  return dx;
}

// y = x * w + b, x: S x in, w: in x out.
Mat affine(const Mat &x, const Mat &w, const Mat &b) {
  Mat y(x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double *xr = x.row(i);
    double *yr = y.row(i);
    for (std::size_t j = 0; j < w.cols; ++j) {
      yr[j] = b.at(0, j);
    }
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double xv = xr[k];
      const double *wr = w.row(k);
      for (std::size_t j = 0; j < w.cols; ++j) {
        yr[j] += xv * wr[j];
      }
    }
  }
  return y;
}

// dx = dy * w^T (the weight is frozen, so no dW is produced).
Mat affine_backward_input(const Mat &dy, const Mat &w) {
  Mat dx(dy.rows, w.rows);
  for (std::size_t i = 0; i < dy.rows; ++i) {
    const double *dyr = dy.row(i);
    double *dxr = dx.row(i);
    for (std::size_t k = 0; k < w.rows; ++k) {
      dxr[k] = dot(w.row(k), dyr, w.cols);
    }
  }
  return dx;
}

void attention_forward(const BackboneConfig &cfg, const BlockWeights &blk,
                       const Mat &ln1_out, ForwardCache::BlockCache &bc,
                       Mat &attn_out) {
  const std::size_t s = ln1_out.rows;
  const std::size_t d = cfg.d_model;
  const std::size_t nh = cfg.n_heads;
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  bc.qkv = affine(ln1_out, blk.attn_qkv_w, blk.attn_qkv_b);
  bc.att_probs.assign(nh, Mat(s, s));
  bc.att_ctx = Mat(s, d);

  Vec scores(s);
  for (std::size_t h = 0; h < nh; ++h) {
    Mat &probs = bc.att_probs[h];
    const std::size_t qo = h * dh;
    const std::size_t ko = d + h * dh;
    const std::size_t vo = 2 * d + h * dh;
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t jmax = cfg.causal ? i : s - 1;
      const double *qi = bc.qkv.row(i) + qo;
      double mx = -1e300;
      for (std::size_t j = 0; j <= jmax; ++j) {
        scores[j] = dot(qi, bc.qkv.row(j) + ko, dh) * scale;
        mx = std::max(mx, scores[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j <= jmax; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        denom += scores[j];
      }
      double *pr = probs.row(i);
      for (std::size_t j = 0; j <= jmax; ++j) {
        pr[j] = scores[j] / denom;
      }
      double *ctx = bc.att_ctx.row(i) + qo;
      for (std::size_t j = 0; j <= jmax; ++j) {
        const double p = pr[j];
        const double *vj = bc.qkv.row(j) + vo;
        for (std::size_t c = 0; c < dh; ++c) {
          ctx[c] += p * vj[c];
        }
      }
    }
  }
  attn_out = affine(bc.att_ctx, blk.attn_proj_w, blk.attn_proj_b);
}

// Gradient through attention; returns d(ln1_out).
Mat attention_backward(const BackboneConfig &cfg, const BlockWeights &blk,
                       const ForwardCache::BlockCache &bc, const Mat &dout) {
  const std::size_t s = dout.rows;
  const std::size_t d = cfg.d_model;
  const std::size_t nh = cfg.n_heads;
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dctx = affine_backward_input(dout, blk.attn_proj_w);
  Mat dqkv(s, 3 * d);

  Vec dprobs(s), dscores(s);
  for (std::size_t h = 0; h < nh; ++h) {
    const Mat &probs = bc.att_probs[h];
    const std::size_t qo = h * dh;
    const std::size_t ko = d + h * dh;
    const std::size_t vo = 2 * d + h * dh;
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t jmax = cfg.causal ? i : s - 1;
      const double *dci = dctx.row(i) + qo;
      const double *pr = probs.row(i);
      // ctx_i = sum_j p_ij v_j
      for (std::size_t j = 0; j <= jmax; ++j) {
        dprobs[j] = dot(dci, bc.qkv.row(j) + vo, dh);
        double *dvj = dqkv.row(j) + vo;
        for (std::size_t c = 0; c < dh; ++c) {
          dvj[c] += pr[j] * dci[c];
        }
      }
      // softmax
      double inner = 0.0;
      for (std::size_t j = 0; j <= jmax; ++j) {
        inner += dprobs[j] * pr[j];
      }
      for (std::size_t j = 0; j <= jmax; ++j) {
        dscores[j] = pr[j] * (dprobs[j] - inner);
      }
      // s_ij = scale * q_i . k_j
      const double *qi = bc.qkv.row(i) + qo;
      double *dqi = dqkv.row(i) + qo;
      for (std::size_t j = 0; j <= jmax; ++j) {
        const double dsj = dscores[j] * scale;
        const double *kj = bc.qkv.row(j) + ko;
        double *dkj = dqkv.row(j) + ko;
        for (std::size_t c = 0; c < dh; ++c) {
          dqi[c] += dsj * kj[c];
          dkj[c] += dsj * qi[c];
        }
      }
    }
  }
  return affine_backward_input(dqkv, blk.attn_qkv_w);
}

} // namespace

Mat forward(const BackboneConfig &cfg, const BackboneWeights &w,
            const std::vector<Vec> &prompt, ForwardCache *cache) {
  cfg.validate();
  const std::size_t s = prompt.size();
  const std::size_t d = cfg.d_model;
  if (s == 0 || s > cfg.max_positions) {
    throw ConfigError("forward: sequence length " + std::to_string(s) +
                      " outside [1, max_positions]");
  }
  for (const auto &p : prompt) {
    if (p.size() != d) {
      throw DimensionError("forward: prompt vector width != d_model");
    }
  }

  ForwardCache local;
  ForwardCache &c = cache ? *cache : local;
  c.blocks.assign(cfg.n_layers, {});
  c.seq_len = s;
  c.revision = w.revision;

  Mat x(s, d);
  for (std::size_t i = 0; i < s; ++i) {
    const double *pe = w.pos_emb.row(i);
    double *xr = x.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xr[j] = prompt[i][j] + pe[j];
    }
  }

  for (std::size_t b = 0; b < cfg.n_layers; ++b) {
    const BlockWeights &blk = w.blocks[b];
    auto &bc = c.blocks[b];
    bc.x_in = x;

    Mat ln1_out;
    layer_norm(x, blk.ln1_g, blk.ln1_b, ln1_out, bc.ln1_xhat, bc.ln1_rstd);
    Mat attn_out;
    attention_forward(cfg, blk, ln1_out, bc, attn_out);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x.data[i] += attn_out.data[i];
    }
    bc.x_mid = x;

    Mat ln2_out;
    layer_norm(x, blk.ln2_g, blk.ln2_b, ln2_out, bc.ln2_xhat, bc.ln2_rstd);
    bc.mlp_pre = affine(ln2_out, blk.mlp_fc_w, blk.mlp_fc_b);
    bc.mlp_act = Mat(s, cfg.mlp_dim());
    for (std::size_t i = 0; i < bc.mlp_pre.size(); ++i) {
      bc.mlp_act.data[i] = gelu(bc.mlp_pre.data[i]);
    }
    Mat mlp_out = affine(bc.mlp_act, blk.mlp_proj_w, blk.mlp_proj_b);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x.data[i] += mlp_out.data[i];
    }
  }

  c.x_final = x;
  Mat h;
  layer_norm(x, w.ln_f_g, w.ln_f_b, h, c.lnf_xhat, c.lnf_rstd);
  return h;
}

Vec blend(const Mat &hidden, double beta) {
  if (hidden.rows < 2) {
    throw ConfigError("blend: needs at least two positions");
  }
  const std::size_t d = hidden.cols;
  Vec out(d);
  const double *last = hidden.row(hidden.rows - 1);
  const double *prev = hidden.row(hidden.rows - 2);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = beta * last[j] + (1.0 - beta) * prev[j];
  }
  return out;
}

Vec classify(const HeadParams &head, const Vec &f_prime) {
  if (f_prime.size() != head.w.rows) {
    throw DimensionError("classify: feature width != head input");
  }
  const std::size_t k = head.w.cols;
  Vec logits(k);
  for (std::size_t j = 0; j < k; ++j) {
    logits[j] = head.b.at(0, j);
  }
  for (std::size_t i = 0; i < f_prime.size(); ++i) {
    const double f = f_prime[i];
    const double *wr = head.w.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      logits[j] += f * wr[j];
    }
  }
  double mx = logits[0];
  for (double z : logits) {
    mx = std::max(mx, z);
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    logits[j] = std::exp(logits[j] - mx);
    denom += logits[j];
  }
  for (std::size_t j = 0; j < k; ++j) {
    logits[j] /= denom;
  }
  return logits;
}

Mat backward(const BackboneConfig &cfg, const BackboneWeights &w,
             const ForwardCache &cache, const Mat &upstream,
             BackboneGrads &acc) {
  if (cache.revision != w.revision) {
    throw StateError("backward: cache is stale (weights were updated)");
  }
  if (cache.blocks.size() != cfg.n_layers || upstream.rows != cache.seq_len ||
      upstream.cols != cfg.d_model) {
    throw StateError("backward: cache does not match config/upstream");
  }
  const std::size_t s = cache.seq_len;
  const std::size_t d = cfg.d_model;

  Mat dx = layer_norm_backward(w.ln_f_g, cache.lnf_xhat, cache.lnf_rstd,
                               upstream, acc.ln_f_g, acc.ln_f_b);

  for (std::size_t bi = cfg.n_layers; bi-- > 0;) {
    const BlockWeights &blk = w.blocks[bi];
    const auto &bc = cache.blocks[bi];
    auto &bg = acc.blocks[bi];

    // x_out = x_mid + mlp_proj(gelu(mlp_fc(ln2(x_mid))))
    Mat dact = affine_backward_input(dx, blk.mlp_proj_w);
    Mat dpre(s, cfg.mlp_dim());
    for (std::size_t i = 0; i < dpre.size(); ++i) {
      dpre.data[i] = dact.data[i] * gelu_grad(bc.mlp_pre.data[i]);
    }
    Mat dln2_out = affine_backward_input(dpre, blk.mlp_fc_w);
    Mat dres = layer_norm_backward(blk.ln2_g, bc.ln2_xhat, bc.ln2_rstd,
                                   dln2_out, bg.ln2_g, bg.ln2_b);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx.data[i] += dres.data[i];
    }

    // x_mid = x_in + attn(ln1(x_in))
    Mat dln1_out = attention_backward(cfg, blk, bc, dx);
    Mat dres2 = layer_norm_backward(blk.ln1_g, bc.ln1_xhat, bc.ln1_rstd,
                                    dln1_out, bg.ln1_g, bg.ln1_b);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx.data[i] += dres2.data[i];
    }
  }

  // x_0 = prompt + pos_emb
  for (std::size_t i = 0; i < s; ++i) {
    double *pg = acc.pos_emb.row(i);
    const double *dxr = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      pg[j] += dxr[j];
    }
  }
  return dx;
}

ParamCounts count_backbone_params(const BackboneConfig &cfg) {
  const std::size_t d = cfg.d_model;
  const std::size_t ln = 2 * d;
  const std::size_t per_block = 2 * ln                       // ln_1, ln_2
                                + d * 3 * d + 3 * d          // c_attn
                                + d * d + d                  // attn c_proj
                                + d * cfg.mlp_dim() + cfg.mlp_dim() // c_fc
                                + cfg.mlp_dim() * d + d;     // mlp c_proj
  ParamCounts counts;
  counts.total = cfg.n_layers * per_block + ln + cfg.max_positions * d;
  counts.trainable = cfg.n_layers * 2 * ln + ln + cfg.max_positions * d;
  counts.fraction = static_cast<double>(counts.trainable) /
                    static_cast<double>(counts.total);
  return counts;
}

std::vector<std::pair<std::string, const Mat *>>
named_tensors(const BackboneWeights &w) {
  std::vector<std::pair<std::string, const Mat *>> out;
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const std::string p = "h." + std::to_string(i) + ".";
    const BlockWeights &b = w.blocks[i];
    out.emplace_back(p + "ln_1.weight", &b.ln1_g);
    out.emplace_back(p + "ln_1.bias", &b.ln1_b);
    out.emplace_back(p + "attn.c_attn.weight", &b.attn_qkv_w);
    out.emplace_back(p + "attn.c_attn.bias", &b.attn_qkv_b);
    out.emplace_back(p + "attn.c_proj.weight", &b.attn_proj_w);
    out.emplace_back(p + "attn.c_proj.bias", &b.attn_proj_b);
    out.emplace_back(p + "ln_2.weight", &b.ln2_g);
    out.emplace_back(p + "ln_2.bias", &b.ln2_b);
    out.emplace_back(p + "mlp.c_fc.weight", &b.mlp_fc_w);
    out.emplace_back(p + "mlp.c_fc.bias", &b.mlp_fc_b);
    out.emplace_back(p + "mlp.c_proj.weight", &b.mlp_proj_w);
    out.emplace_back(p + "mlp.c_proj.bias", &b.mlp_proj_b);
  }
  out.emplace_back("ln_f.weight", &w.ln_f_g);
  out.emplace_back("ln_f.bias", &w.ln_f_b);
  out.emplace_back("wpe.weight", &w.pos_emb);
  return out;
}

void export_weights(const BackboneWeights &w, const std::string &path) {
  store::TensorMap map;
  for (const auto &[name, mat] : named_tensors(w)) {
    map.emplace(name, *mat);
  }
  store::write_tensors(map, path);
}

namespace {

Mat take_tensor(const store::TensorMap &map, const std::string &name,
                std::size_t rows, std::size_t cols) {
  auto it = map.find(name);
  if (it == map.end()) {
    throw FormatError("missing tensor '" + name + "'");
  }
  const Mat &m = it->second;
  if (m.rows != rows || m.cols != cols) {
    throw FormatError("tensor '" + name + "': shape mismatch, expected " +
                      std::to_string(rows) + "x" + std::to_string(cols) +
                      ", found " + std::to_string(m.rows) + "x" +
                      std::to_string(m.cols));
  }
  return m;
}

} // namespace

BackboneWeights import_weights(const BackboneConfig &cfg,
                               const std::string &path) {
  cfg.validate();
  const auto map = store::read_tensors(path);
  const std::size_t d = cfg.d_model;
  BackboneWeights w;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string p = "h." + std::to_string(i) + ".";
    BlockWeights b;
    b.ln1_g = take_tensor(map, p + "ln_1.weight", 1, d);
    b.ln1_b = take_tensor(map, p + "ln_1.bias", 1, d);
    b.attn_qkv_w = take_tensor(map, p + "attn.c_attn.weight", d, 3 * d);
    b.attn_qkv_b = take_tensor(map, p + "attn.c_attn.bias", 1, 3 * d);
    b.attn_proj_w = take_tensor(map, p + "attn.c_proj.weight", d, d);
    b.attn_proj_b = take_tensor(map, p + "attn.c_proj.bias", 1, d);
    b.ln2_g = take_tensor(map, p + "ln_2.weight", 1, d);
    b.ln2_b = take_tensor(map, p + "ln_2.bias", 1, d);
    b.mlp_fc_w = take_tensor(map, p + "mlp.c_fc.weight", d, cfg.mlp_dim());
    b.mlp_fc_b = take_tensor(map, p + "mlp.c_fc.bias", 1, cfg.mlp_dim());
    b.mlp_proj_w = take_tensor(map, p + "mlp.c_proj.weight", cfg.mlp_dim(), d);
    b.mlp_proj_b = take_tensor(map, p + "mlp.c_proj.bias", 1, d);
    w.blocks.push_back(std::move(b));
  }
  w.ln_f_g = take_tensor(map, "ln_f.weight", 1, d);
  w.ln_f_b = take_tensor(map, "ln_f.bias", 1, d);
  w.pos_emb = take_tensor(map, "wpe.weight", cfg.max_positions, d);
  return w;
}

} // namespace drifttune::backbone

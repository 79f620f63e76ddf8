// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_BACKBONE_HPP
#define DRIFTTUNE_BACKBONE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "drifttune/mat.hpp"
#include "drifttune/rng.hpp"

namespace drifttune::backbone {

struct BackboneConfig {
  std::size_t n_layers = 2;     // L
  std::size_t d_model = 64;     // d_g
  std::size_t n_heads = 4;
  std::size_t prompt_len = 10;  // m
  std::size_t max_positions = 16;
  bool causal = true;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t mlp_dim() const { return 4 * d_model; }
  void validate() const;
};

/// The m frozen prompt vectors. Xavier-uniform at init; never updated
/// unless a prompt ablation explicitly marks the bank trainable.
struct PromptBank {
  Mat vectors; // m x d_g

  static PromptBank init(std::size_t m, std::size_t d_g, Rng &rng);
};

/// One pre-LN transformer block. Attention and MLP weights are frozen;
/// only the LayerNorm gains/biases are trainable.
struct BlockWeights {
  Mat ln1_g, ln1_b;     // 1 x d_g
  Mat attn_qkv_w;       // d_g x 3 d_g
  Mat attn_qkv_b;       // 1 x 3 d_g
  Mat attn_proj_w;      // d_g x d_g
  Mat attn_proj_b;      // 1 x d_g
  Mat ln2_g, ln2_b;     // 1 x d_g
  Mat mlp_fc_w;         // d_g x 4 d_g
  Mat mlp_fc_b;         // 1 x 4 d_g
  Mat mlp_proj_w;       // 4 d_g x d_g
  Mat mlp_proj_b;       // 1 x d_g
};

struct BackboneWeights {
  std::vector<BlockWeights> blocks;
  Mat ln_f_g, ln_f_b;   // 1 x d_g
  Mat pos_emb;          // max_positions x d_g

  // Bumped by the optimizer after each step; forward caches record it so
  // backward can reject stale activations.
  std::uint64_t revision = 0;

  /// Random stand-in for a pretrained backbone: Xavier-uniform matrices,
  /// zero biases, unit LN gains.
  static BackboneWeights init(const BackboneConfig &cfg, Rng &rng);
};

struct HeadParams {
  Mat w;    // d_g x k
  Mat b;    // 1 x k
  Mat beta; // 1 x 1, initialized to 0.5

  static HeadParams init(std::size_t d_g, std::size_t k, Rng &rng);
};

/// Gradients for the trainable backbone tensors only. Frozen tensors have
/// no storage here at all.
struct BackboneGrads {
  struct BlockGrads {
    Mat ln1_g, ln1_b, ln2_g, ln2_b;
  };
  std::vector<BlockGrads> blocks;
  Mat ln_f_g, ln_f_b;
  Mat pos_emb;

  explicit BackboneGrads(const BackboneConfig &cfg);
  void zero();
};

/// Per-sample activations captured by forward() for the reverse pass.
struct ForwardCache {
  struct BlockCache {
    Mat x_in;        // S x d_g
    Mat ln1_xhat;    // S x d_g
    Vec ln1_rstd;    // S
    Mat qkv;         // S x 3 d_g
    std::vector<Mat> att_probs; // per head, S x S
    Mat att_ctx;     // S x d_g
    Mat x_mid;       // S x d_g
    Mat ln2_xhat;
    Vec ln2_rstd;
    Mat mlp_pre;     // S x 4 d_g
    Mat mlp_act;     // S x 4 d_g
  };
  std::vector<BlockCache> blocks;
  Mat x_final;   // S x d_g (input of ln_f)
  Mat lnf_xhat;  // S x d_g
  Vec lnf_rstd;  // S
  std::size_t seq_len = 0;
  std::uint64_t revision = 0;
};

/// [bank vectors..., fused] — length m+1 with the fused feature last.
std::vector<Vec> assemble_prompt(const PromptBank &bank, const Vec &fused);

/// Pre-LN transformer over the prompt sequence. Returns the S x d_g final
/// hidden states; fills `cache` when provided.
Mat forward(const BackboneConfig &cfg, const BackboneWeights &w,
            const std::vector<Vec> &prompt, ForwardCache *cache = nullptr);

/// beta * H[-1] + (1 - beta) * H[-2]. Needs at least two positions.
Vec blend(const Mat &hidden, double beta);

/// Softmax probabilities over F' W_c + b_c (max-subtracted).
Vec classify(const HeadParams &head, const Vec &f_prime);

/// Reverse pass through the transformer. `upstream` is dLoss/dH (S x d_g).
/// Accumulates LN and position-embedding gradients into `acc` and returns
/// the gradient with respect to the input prompt sequence.
Mat backward(const BackboneConfig &cfg, const BackboneWeights &w,
             const ForwardCache &cache, const Mat &upstream,
             BackboneGrads &acc);

struct ParamCounts {
  std::size_t total = 0;
  std::size_t trainable = 0;
  double fraction = 0.0;
};

/// Exact backbone parameter counts from the config (no tensors needed).
ParamCounts count_backbone_params(const BackboneConfig &cfg);

/// Name -> tensor map in the container naming scheme (h.{i}.ln_1.weight,
/// h.{i}.attn.c_attn.weight, ..., ln_f.weight, wpe.weight).
std::vector<std::pair<std::string, const Mat *>>
named_tensors(const BackboneWeights &w);

void export_weights(const BackboneWeights &w, const std::string &path);

/// Loads a container written by export_weights (or an external dump using
/// the same names). Missing tensors and shape mismatches raise FormatError
/// naming the tensor; unknown extra tensors are ignored.
BackboneWeights import_weights(const BackboneConfig &cfg,
                               const std::string &path);

} // namespace drifttune::backbone

#endif

// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_FUSION_HPP
#define DRIFTTUNE_FUSION_HPP

#include <string>

#include "drifttune/geometry.hpp"
#include "drifttune/mat.hpp"
#include "drifttune/rng.hpp"

namespace drifttune::fusion {

/// Which embeddings of the concept triple feed the adapter. Canonical
/// concatenation order is image, drift, text regardless of how the
/// selection was written.
struct EmbeddingSelection {
  bool image = true;
  bool drift = true;
  bool text = true;

  int count() const {
    return (image ? 1 : 0) + (drift ? 1 : 0) + (text ? 1 : 0);
  }

  /// Parses strings like "I", "S+T", "i+s+t" (case-insensitive, any order).
  static EmbeddingSelection parse(const std::string &text);

  /// Canonical name, e.g. "I+S+T".
  std::string name() const;

  bool operator==(const EmbeddingSelection &) const = default;
};

/// Two-layer GELU adapter mapping the concatenated triple to backbone
/// width: y = GELU(x W1 + b1) W2 + b2. All four tensors are trainable.
struct FusionParams {
  Mat w1; // in_dim x d_c
  Mat b1; // 1 x d_c
  Mat w2; // d_c x d_g
  Mat b2; // 1 x d_g

  std::size_t in_dim() const { return w1.rows; }
  std::size_t out_dim() const { return w2.cols; }

  /// Xavier-uniform weights, zero biases.
  static FusionParams init(std::size_t in_dim, std::size_t d_c,
                           std::size_t d_g, Rng &rng);
};

/// Gradient accumulator shaped like FusionParams.
struct FfnGrads {
  Mat w1, b1, w2, b2;

  FfnGrads() = default;
  explicit FfnGrads(const FusionParams &p)
      : w1(p.w1.rows, p.w1.cols), b1(p.b1.rows, p.b1.cols),
        w2(p.w2.rows, p.w2.cols), b2(p.b2.rows, p.b2.cols) {}

  void zero() {
    w1.zero();
    b1.zero();
    w2.zero();
    b2.zero();
  }
};

/// Concatenation of the selected embeddings, length count * d_c.
Vec concat_triple(const geometry::ConceptTriple &t,
                  const EmbeddingSelection &sel);

Vec ffn_forward(const FusionParams &p, const Vec &x);

/// Accumulates parameter gradients into `acc` and returns the gradient with
/// respect to x. Recomputes the hidden activations from x.
Vec ffn_backward(const FusionParams &p, const Vec &x, const Vec &upstream,
                 FfnGrads &acc);

} // namespace drifttune::fusion

#endif

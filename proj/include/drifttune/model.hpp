// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_MODEL_HPP
#define DRIFTTUNE_MODEL_HPP

#include <optional>
#include <string>
#include <vector>

#include "drifttune/backbone.hpp"
#include "drifttune/data_io.hpp"
#include "drifttune/fusion.hpp"
#include "drifttune/tensor_store.hpp"

namespace drifttune::model {

/// How the backbone input sequence is built.
///   Fused:       [bank..., adapter(concat(triple))]  (the default pipeline)
///   RawSequence: selected embeddings lifted to d_g by one shared projection
///                and fed directly, no bank, no adapter
enum class PromptMode { Fused, RawSequence };

struct ModelConfig {
  backbone::BackboneConfig bb;
  std::size_t d_c = 16;
  std::size_t k = 2;
  double alpha = 0.8;
  fusion::EmbeddingSelection selection;
  PromptMode prompt_mode = PromptMode::Fused;
  std::string raw_order = "ti"; // RawSequence positions, chars of {t, s, i}
  bool bank_trainable = false;
  std::uint64_t init_seed = 0;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string &text);
};

/// A named parameter tensor with its partition tags. Frozen tensors carry
/// no gradient storage (grad == nullptr).
struct ParamRef {
  std::string name;
  Mat *value = nullptr;
  Mat *grad = nullptr;
  bool trainable = false;
  bool weight_decay = false;
};

/// The assembled classifier. Owns every tensor of the pipeline plus the
/// gradient buffers for the trainable subset.
class Classifier {
public:
  explicit Classifier(const ModelConfig &cfg);

  const ModelConfig &config() const { return cfg_; }

  /// Softmax probabilities for one sample.
  Vec predict_probs(const data::Sample &s) const;

  /// Argmax class; ties break toward the lowest index.
  int predict(const data::Sample &s) const;

  /// Mean cross-entropy of the batch (log-sum-exp over logits), no grads.
  double batch_loss(const std::vector<const data::Sample *> &batch) const;

  /// Mean loss plus gradient accumulation into the trainable tensors'
  /// buffers (callers zero_grads() first).
  double forward_backward(const std::vector<const data::Sample *> &batch);

  void zero_grads();

  /// Every tensor of the pipeline with partition tags, in a fixed order.
  std::vector<ParamRef> parameters();

  /// Name/tensor pairs of the frozen partition (for hashing).
  std::vector<std::pair<std::string, const Mat *>> frozen_tensors();

  /// Marks cached activations stale; called after each optimizer step.
  void bump_revision() { weights_.revision++; }

  backbone::ParamCounts backbone_counts() const;
  backbone::ParamCounts pipeline_counts() const;

  /// All tensors (frozen and trainable) for checkpointing.
  store::TensorMap tensor_map();
  void load_tensor_map(const store::TensorMap &map);

  void save_checkpoint(const std::string &path);
  static Classifier load_checkpoint(const std::string &tensors_path,
                                    const ModelConfig &cfg);

  backbone::BackboneWeights &weights() { return weights_; }
  backbone::PromptBank &bank() { return bank_; }
  backbone::HeadParams &head() { return head_; }

private:
  struct SampleFlow; // per-sample activations for the reverse pass

  std::vector<Vec> build_prompt(const data::Sample &s, SampleFlow *flow) const;
  Vec logits_for(const data::Sample &s, SampleFlow *flow) const;

  ModelConfig cfg_;
  fusion::FusionParams adapter_;      // Fused mode
  Mat lift_;                          // RawSequence mode, d_c x d_g
  backbone::PromptBank bank_;
  backbone::BackboneWeights weights_;
  backbone::HeadParams head_;

  // Gradient buffers, trainable tensors only.
  fusion::FfnGrads adapter_grads_;
  Mat lift_grad_;
  Mat bank_grad_;
  backbone::BackboneGrads bb_grads_;
  Mat head_w_grad_, head_b_grad_, beta_grad_;
};

} // namespace drifttune::model

#endif

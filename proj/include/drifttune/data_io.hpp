// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_DATA_IO_HPP
#define DRIFTTUNE_DATA_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "drifttune/errors.hpp"
#include "drifttune/mat.hpp"

namespace drifttune::data {

enum class Split { Train, Val, Test, Unassigned };

std::string split_name(Split s);
Split parse_split(const std::string &name);

/// One labelled embedding pair.
struct Sample {
  std::string id;
  Vec image_emb;
  Vec text_emb;
  int label = 0;
  Split split = Split::Unassigned;

  bool operator==(const Sample &) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t d_c = 0;
  int k = 2;
  std::string task_name; // display metadata, not serialized

  std::size_t size() const { return samples.size(); }
  std::vector<std::size_t> indices_of(Split s) const;
  std::size_t count_of(Split s) const;

  /// Semantic identity: samples, d_c and k (task_name excluded).
  bool operator==(const Dataset &o) const {
    return samples == o.samples && d_c == o.d_c && k == o.k;
  }
};

/// One JSON object per line:
///   {"id": str, "image_emb": [...], "text_emb": [...], "label": int,
///    "split": str?}
/// d_c is taken from the first record; k is inferred as max(label)+1 (at
/// least 2), so a class with no samples at all is not representable.
Dataset load_ndjson(const std::string &path);

/// Inverse of load_ndjson; load(save(ds)) == ds exactly.
void save_ndjson(const Dataset &ds, const std::string &path);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Tags every sample with train/val/test. Counts are floor(N*f_train),
/// floor(N*f_val) and the remainder. The assignment is a pure function of
/// (ids, fractions, seed): samples are ranked by id before the seeded
/// shuffle, so file order does not matter.
void assign_splits(Dataset &ds, const SplitFractions &f, std::uint64_t seed);

struct SyntheticConfig {
  int k = 2;
  int n_per_class = 100;
  std::size_t d_c = 16;
  double noise_sigma = 0.05;
  bool drift_dependence = false;
  std::uint64_t seed = 0;
};

/// Per class, an image prototype and a text prototype are drawn uniformly
/// on the unit sphere; samples are unit-normalized noisy copies.
///
/// With drift_dependence the task becomes binary and labels stop following
/// the prototype index: a sample is positive iff its image/text SLERP
/// midpoint has positive inner product with a fixed seeded hyperplane
/// normal. The normal is drawn orthogonal to every class's prototype
/// midpoint, so the label is carried by the joint image+text noise — the
/// midpoint features separate the classes exactly while either endpoint
/// alone only sees half of the signal.
Dataset generate_synthetic(const SyntheticConfig &cfg);

/// Replays the generator's draws up to the hyperplane normal, so labels can
/// be re-derived from the seed alone.
Vec drift_hyperplane_normal(const SyntheticConfig &cfg);

/// CSV export with header id,kind,label,c0,...,c{d_c-1}; three rows per
/// sample (kind = image, text, slerp), image/text rows L2-normalized and
/// slerp rows interpolated at the given alpha.
void export_embeddings(const Dataset &ds, double alpha,
                       const std::string &path);

} // namespace drifttune::data

#endif

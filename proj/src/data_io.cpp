// SPDX-License-Identifier: Apache-2.0

#include "drifttune/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "drifttune/geometry.hpp"
#include "drifttune/rng.hpp"

namespace drifttune::data {

std::string split_name(Split s) {
  switch (s) {
  case Split::Train:
    return "train";
  case Split::Val:
    return "val";
  case Split::Test:
    return "test";
  case Split::Unassigned:
    return "unassigned";
  }
  return "unassigned";
}

Split parse_split(const std::string &name) {
  if (name == "train") {
    return Split::Train;
  }
  if (name == "val") {
    return Split::Val;
  }
  if (name == "test") {
    return Split::Test;
  }
  if (name == "unassigned") {
    return Split::Unassigned;
  }
  throw FormatError("unknown split tag '" + name + "'");
}

std::vector<std::size_t> Dataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == s) {
      out.push_back(i);
    }
  }
  return out;
}

std::size_t Dataset::count_of(Split s) const { return indices_of(s).size(); }

namespace {

Vec read_vec(const nlohmann::json &j, const char *key, std::size_t line_no) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw FormatError("line " + std::to_string(line_no) + ": missing array '" +
                      key + "'");
  }
  Vec v;
  v.reserve(j[key].size());
  for (const auto &c : j[key]) {
    if (!c.is_number()) {
      throw FormatError("line " + std::to_string(line_no) +
                        ": non-numeric component in '" + key + "'");
    }
    const double x = c.get<double>();
    if (!std::isfinite(x)) {
      throw FormatError("line " + std::to_string(line_no) +
                        ": non-finite component in '" + key + "'");
    }
    v.push_back(x);
  }
  return v;
}

} // namespace

Dataset load_ndjson(const std::string &path) {
  std::ifstream in(path);
  if (!in.is_open()) {
    throw IoError("cannot open '" + path + "' for reading");
  }
  Dataset ds;
  ds.d_c = 0;
  int max_label = -1;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    Sample s;
    if (!j.contains("id") || !j["id"].is_string()) {
      throw FormatError("line " + std::to_string(line_no) +
                        ": missing string 'id'");
    }
    s.id = j["id"].get<std::string>();
    if (!seen_ids.insert(s.id).second) {
      throw FormatError("line " + std::to_string(line_no) + ": duplicate id '" +
                        s.id + "'");
    }
    s.image_emb = read_vec(j, "image_emb", line_no);
    s.text_emb = read_vec(j, "text_emb", line_no);
    if (s.image_emb.size() != s.text_emb.size()) {
      throw FormatError("line " + std::to_string(line_no) +
                        ": image_emb and text_emb lengths differ");
    }
    if (ds.samples.empty()) {
      ds.d_c = s.image_emb.size();
    } else if (s.image_emb.size() != ds.d_c) {
      throw FormatError("line " + std::to_string(line_no) +
                        ": vector length " +
                        std::to_string(s.image_emb.size()) +
                        " does not match d_c=" + std::to_string(ds.d_c));
    }
    if (!j.contains("label") || !j["label"].is_number_integer()) {
      throw FormatError("line " + std::to_string(line_no) +
                        ": missing integer 'label'");
    }
    s.label = j["label"].get<int>();
    if (s.label < 0) {
      throw FormatError("line " + std::to_string(line_no) + ": negative label");
    }
    max_label = std::max(max_label, s.label);
    if (j.contains("split")) {
      if (!j["split"].is_string()) {
        throw FormatError("line " + std::to_string(line_no) +
                          ": 'split' must be a string");
      }
      try {
        s.split = parse_split(j["split"].get<std::string>());
      } catch (const FormatError &e) {
        throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    ds.samples.push_back(std::move(s));
  }
  ds.k = std::max(2, max_label + 1);
  return ds;
}

void save_ndjson(const Dataset &ds, const std::string &path) {
  for (const auto &s : ds.samples) {
    for (const Vec *v : {&s.image_emb, &s.text_emb}) {
      for (double c : *v) {
        if (!std::isfinite(c)) {
          throw FormatError("save_ndjson: non-finite component in sample '" +
                            s.id + "'");
        }
      }
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out.is_open()) {
      throw IoError("cannot open '" + tmp + "' for writing");
    }
    for (const auto &s : ds.samples) {
      nlohmann::json j;
      j["id"] = s.id;
      j["image_emb"] = s.image_emb;
      j["text_emb"] = s.text_emb;
      j["label"] = s.label;
      j["split"] = split_name(s.split);
      out << j.dump() << "\n";
    }
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

void assign_splits(Dataset &ds, const SplitFractions &f, std::uint64_t seed) {
  if (!(f.train > 0.0) || !(f.val > 0.0) || !(f.test > 0.0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const std::size_t n = ds.samples.size();
  if (n < 3) {
    throw SplitError("need at least 3 samples to split, have " +
                     std::to_string(n));
  }
  // Rank by id so the assignment depends on ids, not file order.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ds.samples[a].id < ds.samples[b].id;
  });
  Rng rng(seed);
  rng.shuffle(order);

  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * f.train));
  const auto n_val =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.val));
  for (std::size_t i = 0; i < n; ++i) {
    Split s = Split::Test;
    if (i < n_train) {
      s = Split::Train;
    } else if (i < n_train + n_val) {
      s = Split::Val;
    }
    ds.samples[order[i]].split = s;
  }
}

namespace {

Vec random_unit_vec(Rng &rng, std::size_t d) {
  Vec x(d);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto &c : x) {
      c = rng.gaussian();
      sq += c * c;
    }
  } while (sq < 1e-12);
  const double inv = 1.0 / std::sqrt(sq);
  for (auto &c : x) {
    c *= inv;
  }
  return x;
}

void validate(const SyntheticConfig &cfg) {
  if (cfg.k < 2) {
    throw ConfigError("generate_synthetic: k must be >= 2");
  }
  if (cfg.d_c < 8) {
    throw ConfigError("generate_synthetic: d_c must be >= 8");
  }
  if (cfg.n_per_class < 1) {
    throw ConfigError("generate_synthetic: n_per_class must be >= 1");
  }
  if (cfg.noise_sigma < 0.0) {
    throw ConfigError("generate_synthetic: noise_sigma must be >= 0");
  }
}

struct GenPrelude {
  int k_eff = 0;
  std::vector<Vec> img_proto;
  std::vector<Vec> txt_proto;
  Vec normal; // empty unless drift_dependence
};

// Draw order is part of the format: prototypes (image, text per class),
// then the hyperplane normal, then per-sample noise. The helper exists so
// drift labels can be re-derived from the seed alone.
GenPrelude gen_prelude(const SyntheticConfig &cfg, Rng &rng) {
  validate(cfg);
  GenPrelude p;
  p.k_eff = cfg.drift_dependence ? 2 : cfg.k;
  for (int c = 0; c < p.k_eff; ++c) {
    p.img_proto.push_back(random_unit_vec(rng, cfg.d_c));
    p.txt_proto.push_back(random_unit_vec(rng, cfg.d_c));
  }
  if (!cfg.drift_dependence) {
    return p;
  }
  // Orthonormal basis of the prototype-midpoint span.
  std::vector<Vec> basis;
  for (int c = 0; c < p.k_eff; ++c) {
    auto mid = geometry::slerp(geometry::UnitVector{p.img_proto[c]},
                               geometry::UnitVector{p.txt_proto[c]}, 0.5);
    Vec b = mid.components;
    for (const auto &prev : basis) {
      const double proj = dot(b.data(), prev.data(), cfg.d_c);
      for (std::size_t i = 0; i < cfg.d_c; ++i) {
        b[i] -= proj * prev[i];
      }
    }
    double nsq = dot(b.data(), b.data(), cfg.d_c);
    if (nsq > 1e-12) {
      const double inv = 1.0 / std::sqrt(nsq);
      for (auto &c2 : b) {
        c2 *= inv;
      }
      basis.push_back(std::move(b));
    }
  }
  // The label hyperplane passes through every prototype midpoint, so the
  // within-cluster noise decides the class.
  for (;;) {
    Vec n = random_unit_vec(rng, cfg.d_c);
    for (const auto &b : basis) {
      const double proj = dot(n.data(), b.data(), cfg.d_c);
      for (std::size_t i = 0; i < cfg.d_c; ++i) {
        n[i] -= proj * b[i];
      }
    }
    const double nsq = dot(n.data(), n.data(), cfg.d_c);
    if (nsq > 1e-6) {
      const double inv = 1.0 / std::sqrt(nsq);
      for (auto &c2 : n) {
        c2 *= inv;
      }
      p.normal = std::move(n);
      return p;
    }
  }
}

} // namespace

Dataset generate_synthetic(const SyntheticConfig &cfg) {
  Rng rng(cfg.seed);
  GenPrelude p = gen_prelude(cfg, rng);

  Dataset ds;
  ds.d_c = cfg.d_c;
  ds.k = cfg.drift_dependence ? 2 : cfg.k;
  ds.task_name = cfg.drift_dependence ? "synthetic-drift" : "synthetic";

  std::size_t idx = 0;
  for (int c = 0; c < p.k_eff; ++c) {
    for (int j = 0; j < cfg.n_per_class; ++j) {
      Sample s;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "s%06zu", idx++);
      s.id = buf;

      Vec img(cfg.d_c), txt(cfg.d_c);
      for (std::size_t i = 0; i < cfg.d_c; ++i) {
        img[i] = p.img_proto[c][i] + cfg.noise_sigma * rng.gaussian();
      }
      for (std::size_t i = 0; i < cfg.d_c; ++i) {
        txt[i] = p.txt_proto[c][i] + cfg.noise_sigma * rng.gaussian();
      }
      s.image_emb = geometry::normalize(img).components;
      s.text_emb = geometry::normalize(txt).components;

      if (cfg.drift_dependence) {
        auto mid = geometry::slerp(geometry::UnitVector{s.image_emb},
                                   geometry::UnitVector{s.text_emb}, 0.5);
        const double side =
            dot(mid.components.data(), p.normal.data(), cfg.d_c);
        s.label = side > 0.0 ? 1 : 0;
      } else {
        s.label = c;
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Vec drift_hyperplane_normal(const SyntheticConfig &cfg) {
  if (!cfg.drift_dependence) {
    throw ConfigError("drift_hyperplane_normal: drift_dependence is not set");
  }
  Rng rng(cfg.seed);
  return gen_prelude(cfg, rng).normal;
}

void export_embeddings(const Dataset &ds, double alpha,
                       const std::string &path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out.is_open()) {
      throw IoError("cannot open '" + tmp + "' for writing");
    }
    out << "id,kind,label";
    for (std::size_t i = 0; i < ds.d_c; ++i) {
      out << ",c" << i;
    }
    out << "\n";
    char buf[40];
    auto write_row = [&](const Sample &s, const char *kind, const Vec &v) {
      out << s.id << "," << kind << "," << s.label;
      for (double c : v) {
        std::snprintf(buf, sizeof(buf), "%.9g", c);
        out << "," << buf;
      }
      out << "\n";
    };
    for (const auto &s : ds.samples) {
      auto t = geometry::concept_triple(s.image_emb, s.text_emb, alpha);
      write_row(s, "image", t.e_img.components);
      write_row(s, "text", t.e_text.components);
      write_row(s, "slerp", t.e_drift.components);
    }
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

} // namespace drifttune::data

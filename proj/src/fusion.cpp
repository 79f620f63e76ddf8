// SPDX-License-Identifier: Apache-2.0

#include "drifttune/fusion.hpp"

#include <cctype>

namespace drifttune::fusion {

EmbeddingSelection EmbeddingSelection::parse(const std::string &text) {
  EmbeddingSelection sel{false, false, false};
  bool any = false;
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (c == '+' || c == ',' || c == ' ') {
      continue;
    }
    if (c == 'i') {
      sel.image = true;
    } else if (c == 's') {
      sel.drift = true;
    } else if (c == 't') {
      sel.text = true;
    } else {
      throw ConfigError("selection: unknown embedding '" + std::string(1, raw) +
                        "' (expected I, S, T)");
    }
    any = true;
  }
  if (!any) {
    throw ConfigError("selection: empty");
  }
  return sel;
}

std::string EmbeddingSelection::name() const {
  std::string out;
  auto append = [&](const char *tag) {
    if (!out.empty()) {
      out += "+";
    }
    out += tag;
  };
  if (image) {
    append("I");
  }
  if (drift) {
    append("S");
  }
  if (text) {
    append("T");
  }
  return out;
}

FusionParams FusionParams::init(std::size_t in_dim, std::size_t d_c,
                                std::size_t d_g, Rng &rng) {
  FusionParams p;
  p.w1 = Mat(in_dim, d_c);
  p.b1 = Mat(1, d_c);
  p.w2 = Mat(d_c, d_g);
  p.b2 = Mat(1, d_g);
  xavier_uniform(p.w1, rng);
  xavier_uniform(p.w2, rng);
  return p;
}

Vec concat_triple(const geometry::ConceptTriple &t,
                  const EmbeddingSelection &sel) {
  if (sel.count() == 0) {
    throw ConfigError("concat_triple: empty selection");
  }
  Vec out;
  out.reserve(static_cast<std::size_t>(sel.count()) * t.e_img.size());
  if (sel.image) {
    out.insert(out.end(), t.e_img.components.begin(), t.e_img.components.end());
  }
  if (sel.drift) {
    out.insert(out.end(), t.e_drift.components.begin(),
               t.e_drift.components.end());
  }
  if (sel.text) {
    out.insert(out.end(), t.e_text.components.begin(),
               t.e_text.components.end());
  }
  return out;
}

Vec ffn_forward(const FusionParams &p, const Vec &x) {
  if (x.size() != p.w1.rows) {
    throw DimensionError("ffn_forward: input length does not match W1");
  }
  const std::size_t hidden = p.w1.cols;
  Vec h(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    double s = p.b1.at(0, j);
    for (std::size_t i = 0; i < x.size(); ++i) {
      s += x[i] * p.w1.at(i, j);
    }
    h[j] = gelu(s);
  }
  Vec y(p.w2.cols);
  for (std::size_t j = 0; j < p.w2.cols; ++j) {
    double s = p.b2.at(0, j);
    for (std::size_t i = 0; i < hidden; ++i) {
      s += h[i] * p.w2.at(i, j);
    }
    y[j] = s;
  }
  return y;
}

Vec ffn_backward(const FusionParams &p, const Vec &x, const Vec &upstream,
                 FfnGrads &acc) {
  if (x.size() != p.w1.rows) {
    throw DimensionError("ffn_backward: input length does not match W1");
  }
  if (upstream.size() != p.w2.cols) {
    throw DimensionError("ffn_backward: upstream length does not match W2");
  }
  const std::size_t hidden = p.w1.cols;

  Vec h_pre(hidden);
  Vec h(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    double s = p.b1.at(0, j);
    for (std::size_t i = 0; i < x.size(); ++i) {
      s += x[i] * p.w1.at(i, j);
    }
    h_pre[j] = s;
    h[j] = gelu(s);
  }

  // y = h W2 + b2
  Vec dh(hidden, 0.0);
  for (std::size_t j = 0; j < p.w2.cols; ++j) {
    const double u = upstream[j];
    acc.b2.at(0, j) += u;
    for (std::size_t i = 0; i < hidden; ++i) {
      acc.w2.at(i, j) += h[i] * u;
      dh[i] += p.w2.at(i, j) * u;
    }
  }

  Vec dpre(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    dpre[j] = dh[j] * gelu_grad(h_pre[j]);
    acc.b1.at(0, j) += dpre[j];
  }

  Vec dx(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < hidden; ++j) {
      acc.w1.at(i, j) += x[i] * dpre[j];
      dx[i] += p.w1.at(i, j) * dpre[j];
    }
  }
  return dx;
}

} // namespace drifttune::fusion

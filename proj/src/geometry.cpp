// SPDX-License-Identifier: Apache-2.0

#include "drifttune/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace drifttune::geometry {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kParallelEps = 1e-6;
} // namespace

UnitVector normalize(const Vec &x) {
  double sq = 0.0;
  for (double c : x) {
    sq += c * c;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > 1e-12)) {
    throw DegenerateVectorError("normalize: vector norm below 1e-12");
  }
  UnitVector out;
  out.components.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.components[i] = x[i] / norm;
  }
  return out;
}

double angle(const UnitVector &v, const UnitVector &w) {
  if (v.size() != w.size()) {
    throw DimensionError("angle: vector lengths differ");
  }
  double d = dot(v.components.data(), w.components.data(), v.size());
  d = std::clamp(d, -1.0, 1.0);
  return std::acos(d);
}

UnitVector slerp(const UnitVector &v, const UnitVector &w, double alpha) {
  if (v.size() != w.size()) {
    throw DimensionError("slerp: vector lengths differ");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw ConfigError("slerp: alpha outside [0, 1]");
  }
  const double theta = angle(v, w);
  if (theta > kPi - kParallelEps) {
    throw AntipodalError("slerp: endpoints are antipodal");
  }
  UnitVector out;
  out.components.resize(v.size());
  if (theta < kParallelEps) {
    // Nearly identical endpoints: normalized linear interpolation.
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.components[i] = (1.0 - alpha) * v[i] + alpha * w[i];
    }
    return normalize(out.components);
  }
  const double s = std::sin(theta);
  const double cv = std::sin((1.0 - alpha) * theta) / s;
  const double cw = std::sin(alpha * theta) / s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.components[i] = cv * v[i] + cw * w[i];
  }
  return out;
}

ConceptTriple concept_triple(const Vec &image_emb, const Vec &text_emb,
                             double alpha) {
  ConceptTriple t;
  t.e_img = normalize(image_emb);
  t.e_text = normalize(text_emb);
  t.theta = angle(t.e_img, t.e_text);
  t.e_drift = slerp(t.e_img, t.e_text, alpha);
  return t;
}

} // namespace drifttune::geometry

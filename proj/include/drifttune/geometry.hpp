// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_GEOMETRY_HPP
#define DRIFTTUNE_GEOMETRY_HPP

#include <vector>

#include "drifttune/errors.hpp"
#include "drifttune/mat.hpp"

namespace drifttune::geometry {

/// L2-normalized vector. Produced by normalize()/slerp(); norm is within
/// 1e-6 of 1 for anything built through this module.
struct UnitVector {
  Vec components;

  std::size_t size() const { return components.size(); }
  double operator[](std::size_t i) const { return components[i]; }
};

/// Image/drift/text embedding triple sharing one dimension, plus the angle
/// between the image and text directions.
struct ConceptTriple {
  UnitVector e_img;
  UnitVector e_drift;
  UnitVector e_text;
  double theta = 0.0;
};

/// x / ||x||. Throws DegenerateVectorError when ||x|| <= 1e-12.
UnitVector normalize(const Vec &x);

/// Angle in [0, pi] between two unit vectors (dot clamped into [-1, 1]).
double angle(const UnitVector &v, const UnitVector &w);

/// Spherical linear interpolation along the great circle from v to w.
///
/// For theta below 1e-6 the endpoints are nearly identical and a normalized
/// linear interpolation is used instead; for theta within 1e-6 of pi the
/// interpolation plane is undefined and AntipodalError is thrown.
UnitVector slerp(const UnitVector &v, const UnitVector &w, double alpha);

/// Normalizes both embeddings and builds the drifted vector at the given
/// interpolation weight.
ConceptTriple concept_triple(const Vec &image_emb, const Vec &text_emb,
                             double alpha = 0.8);

} // namespace drifttune::geometry

#endif

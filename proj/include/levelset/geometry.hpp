#pragma once

// Dense vector helpers used by the predictor/corrector walk: projection,
// rejection, normalization and angles between directions.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "levelset/errors.hpp"

namespace levelset {

using Vector = Eigen::VectorXd;

/// Norms below this are treated as zero when forming unit vectors.
inline constexpr double kDegenerateNorm = 1e-30;

namespace detail {

inline void require_same_dim(const Vector& a, const Vector& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": dimension mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
}

inline double checked_norm(const Vector& v, const char* op) {
  const double n = v.norm();
  if (!(n >= kDegenerateNorm)) {
    throw DegenerateDirectionError(std::string(op) + ": zero-norm direction");
  }
  return n;
}

} // namespace detail

inline Vector normalize(const Vector& v) {
  return v / detail::checked_norm(v, "normalize");
}

/// Component of `a` along `b`: (a·b̂) b̂.
inline Vector project(const Vector& a, const Vector& b) {
  detail::require_same_dim(a, b, "project");
  const Vector unit = b / detail::checked_norm(b, "project");
  return a.dot(unit) * unit;
}

/// Component of `a` orthogonal to `b`.
inline Vector reject(const Vector& a, const Vector& b) {
  return a - project(a, b);
}

inline double cosine_similarity(const Vector& a, const Vector& b) {
  detail::require_same_dim(a, b, "cosine_similarity");
  const double na = detail::checked_norm(a, "cosine_similarity");
  const double nb = detail::checked_norm(b, "cosine_similarity");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Angle between two directions in degrees, in [0, 180].
inline double angle_degrees(const Vector& a, const Vector& b) {
  return std::acos(cosine_similarity(a, b)) * 180.0 / std::numbers::pi;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

} // namespace levelset

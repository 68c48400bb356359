#pragma once

// Trajectory analysis: principal components of traversal weight vectors,
// projection into and out of the top-k subspace, training-loss grids over the
// top-2 plane, and endpoint averaging.
//
// The fit works on the Gram matrix of the centered samples (count × count), so
// the parameter-space covariance (N × N) is never formed.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "levelset/errors.hpp"
#include "levelset/geometry.hpp"
#include "levelset/network.hpp"

namespace levelset {

struct PcaModel {
  Vector mean;
  Matrix components; ///< N × k, orthonormal columns ordered by decreasing variance
  Vector explained_variance;       ///< per-component sample variance
  Vector explained_variance_ratio; ///< share of the total variance

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index k() const { return components.cols(); }
};

/// Every `stride`-th point starting from the first.
inline std::vector<Vector> subsample_every(std::span<const Vector> points, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("stride must be positive");
  std::vector<Vector> out;
  for (std::size_t i = 0; i < points.size(); i += stride) out.push_back(points[i]);
  return out;
}

inline PcaModel pca_fit(std::span<const Vector> points, Eigen::Index k) {
  const auto count = static_cast<Eigen::Index>(points.size());
  if (count < 2) throw ShapeError("pca_fit needs at least two points");
  const Eigen::Index dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("pca_fit: points have different dimensions");
  }
  if (k < 1 || k > std::min(count - 1, dim)) {
    throw ShapeError("pca_fit: k = " + std::to_string(k) + " must be in [1, min(count - 1, dim)] = [1, " +
                     std::to_string(std::min(count - 1, dim)) + "]");
  }

  PcaModel m;
  m.mean = Vector::Zero(dim);
  for (const auto& p : points) m.mean += p;
  m.mean /= static_cast<double>(count);

  Matrix centered(dim, count);
  for (Eigen::Index i = 0; i < count; ++i) centered.col(i) = points[static_cast<std::size_t>(i)] - m.mean;

  const Matrix gram = centered.transpose() * centered;
  const double total = gram.trace();
  if (!(total > 0.0)) throw DegenerateDirectionError("pca_fit: all points coincide");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalFailure("pca_fit: eigendecomposition failed");
  const Vector& evals = eig.eigenvalues(); // ascending

  m.components.resize(dim, k);
  m.explained_variance.resize(k);
  m.explained_variance_ratio.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index src = count - 1 - c;
    const double lambda = std::max(evals[src], 0.0);
    if (lambda <= 1e-12 * evals[count - 1]) {
      throw DegenerateDirectionError("pca_fit: component " + std::to_string(c + 1) + " has zero variance");
    }
    Vector dir = centered * eig.eigenvectors().col(src) / std::sqrt(lambda);
    // one Gram-Schmidt pass against earlier components
    for (Eigen::Index j = 0; j < c; ++j) dir -= m.components.col(j).dot(dir) * m.components.col(j);
    dir.normalize();
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (std::abs(dir[i]) > 1e-12) {
        if (dir[i] < 0) dir = -dir;
        break;
      }
    }
    m.components.col(c) = dir;
    m.explained_variance[c] = lambda / static_cast<double>(count - 1);
    m.explained_variance_ratio[c] = lambda / total;
  }
  return m;
}

inline PcaModel pca_fit(const std::vector<Vector>& points, Eigen::Index k) {
  return pca_fit(std::span<const Vector>(points), k);
}

inline Vector pca_project(const PcaModel& m, const Vector& point) {
  if (point.size() != m.dim()) throw ShapeError("pca_project: dimension mismatch");
  return m.components.transpose() * (point - m.mean);
}

inline Vector pca_inverse(const PcaModel& m, const Vector& coords) {
  if (coords.size() != m.k()) throw ShapeError("pca_inverse: expected " + std::to_string(m.k()) + " coordinates");
  return m.mean + m.components * coords;
}

// ---------------------------------------------------------------------------
// Loss grid over the top-2 plane

struct GridRanges {
  double c1_min = 0, c1_max = 0, c2_min = 0, c2_max = 0;
};

/// Bounding box of the first two coordinates, widened by `pad` of its extent on each side.
inline GridRanges ranges_around(std::span<const Vector> coords, double pad = 0.1) {
  if (coords.empty()) throw std::invalid_argument("ranges_around: no points");
  GridRanges r{coords[0][0], coords[0][0], coords[0][1], coords[0][1]};
  for (const auto& c : coords) {
    r.c1_min = std::min(r.c1_min, c[0]);
    r.c1_max = std::max(r.c1_max, c[0]);
    r.c2_min = std::min(r.c2_min, c[1]);
    r.c2_max = std::max(r.c2_max, c[1]);
  }
  const double w1 = std::max(r.c1_max - r.c1_min, 1e-12);
  const double w2 = std::max(r.c2_max - r.c2_min, 1e-12);
  r.c1_min -= pad * w1;
  r.c1_max += pad * w1;
  r.c2_min -= pad * w2;
  r.c2_max += pad * w2;
  return r;
}

struct LossGrid {
  GridRanges ranges;
  int resolution = 0;
  Matrix loss;                 ///< loss(i, j) at c1 index i, c2 index j; NaN where flagged
  std::vector<char> flagged;   ///< row-major over (i, j); set where the forward pass overflowed
  Vector explained_variance_ratio;

  double c1(int i) const { return axis(ranges.c1_min, ranges.c1_max, i); }
  double c2(int j) const { return axis(ranges.c2_min, ranges.c2_max, j); }

private:
  double axis(double lo, double hi, int i) const {
    return resolution == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  }
};

/// Training loss at each grid point, mapped back to weight space with the remaining coordinates zero.
inline LossGrid loss_grid(const PcaModel& model, const NetworkSpec& spec, const Batch& train, const GridRanges& ranges,
                          int resolution = 100) {
  if (model.k() < 2) throw ShapeError("loss_grid needs at least two components");
  if (resolution < 1) throw std::invalid_argument("resolution must be positive");
  LossGrid g;
  g.ranges = ranges;
  g.resolution = resolution;
  g.loss.resize(resolution, resolution);
  g.flagged.assign(static_cast<std::size_t>(resolution) * resolution, 0);
  g.explained_variance_ratio = model.explained_variance_ratio;
  Vector coords = Vector::Zero(model.k());
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      coords[0] = g.c1(i);
      coords[1] = g.c2(j);
      const double v = loss_value(spec, pca_inverse(model, coords), train);
      if (std::isfinite(v) && v >= 0.0) {
        g.loss(i, j) = v;
      } else {
        g.loss(i, j) = std::numeric_limits<double>::quiet_NaN();
        g.flagged[static_cast<std::size_t>(i) * resolution + j] = 1;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Endpoint averaging

struct MeanEndpoint {
  Vector theta;
  double train_loss = 0.0;
};

inline Vector mean_vector(std::span<const Vector> points) {
  if (points.empty()) throw std::invalid_argument("mean of no points");
  Vector m = Vector::Zero(points.front().size());
  for (const auto& p : points) {
    if (p.size() != m.size()) throw ShapeError("mean_vector: points have different dimensions");
    m += p;
  }
  return m / static_cast<double>(points.size());
}

inline MeanEndpoint mean_endpoint(std::span<const Vector> endpoints, const NetworkSpec& spec, const Batch& train) {
  if (endpoints.size() < 2) throw std::invalid_argument("mean_endpoint needs at least two endpoints");
  for (const auto& e : endpoints) {
    if (static_cast<std::size_t>(e.size()) != spec.param_count()) {
      throw ShapeError("mean_endpoint: endpoint does not match the network's parameter count");
    }
  }
  MeanEndpoint r;
  r.theta = mean_vector(endpoints);
  r.train_loss = loss_value(spec, r.theta, train);
  return r;
}

} // namespace levelset

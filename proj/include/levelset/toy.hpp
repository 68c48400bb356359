#pragma once

// Minimize x + y on the unit circle, driven by the same predictor/corrector
// engine: the circle x² + y² = 1 plays the loss level set and x + y plays the
// regularizer.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

#include "levelset/traversal.hpp"

namespace levelset::toy {

inline Vector point(double x, double y) {
  Vector p(2);
  p << x, y;
  return p;
}

/// Constrained minimizer (−√2/2, −√2/2).
inline Vector optimum() { return point(-std::numbers::sqrt2 / 2, -std::numbers::sqrt2 / 2); }

/// D = (x² + y² − reference)² and its gradient 2(x² + y² − reference)·(2x, 2y).
inline ValueGradient constraint_deviation(const Vector& p, double reference) {
  const LossDeviation dev(reference);
  return dev.value_and_gradient(p.squaredNorm(), 2.0 * p);
}

class CircleProblem {
public:
  LossGradient loss_and_gradient(const Vector& p) {
    ++evals_;
    return {p.squaredNorm(), 2.0 * p};
  }

  ValueGradient regularizer(const Vector& p) const { return {p.sum(), Vector::Ones(p.size())}; }

  std::uint64_t grad_evals() const { return evals_; }

  /// Both held-out columns carry the objective x + y.
  void observe(const Vector& p, TraceRecord& rec) const {
    rec.test_loss = p.sum();
    rec.test_metric = p.sum();
  }

private:
  std::uint64_t evals_ = 0;
};

static_assert(LevelSetProblem<CircleProblem>);

/// Defaults for the circle: the anti-parallel tolerance is tighter than for networks because
/// 1° of arc is already 0.017 away from the optimum.
inline TraversalConfig default_config() {
  TraversalConfig cfg;
  cfg.max_predictor_steps = 20000;
  cfg.antiparallel_stop_deg = 0.1;
  return cfg;
}

/// Uniform point on the unit circle.
inline Vector random_start(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const double a = angle(rng);
  return point(std::cos(a), std::sin(a));
}

inline TraversalResult traverse(const Vector& start, const TraversalConfig& cfg = default_config(),
                                const PointObserver& on_point = {}) {
  if (start.size() != 2 || !start.allFinite()) throw std::invalid_argument("toy start must be a finite 2-D point");
  if (std::abs(start.squaredNorm() - 1.0) > 1e-9) {
    throw std::invalid_argument("toy start must lie on the unit circle");
  }
  CircleProblem problem;
  return levelset::traverse(problem, start, cfg, on_point);
}

} // namespace levelset::toy

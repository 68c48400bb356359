#pragma once

#include <cmath>
#include <cstdint>

#include "levelset/geometry.hpp"

namespace levelset {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t t = 0;

  static AdamState zeros(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n), 0}; }
};

/// One bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, Vector& theta, const Vector& grad, const AdamConfig& cfg) {
  if (grad.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size()) {
    throw ShapeError("adam_step: dimension mismatch");
  }
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  theta.array() -= cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

} // namespace levelset

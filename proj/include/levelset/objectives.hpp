#pragma once

// Scalar fields whose gradients steer the level-set walk: the squared-L2
// regularizer and the squared deviation of the training loss from its value
// at the starting point.

#include <cmath>
#include <stdexcept>

#include "levelset/geometry.hpp"

namespace levelset {

struct ValueGradient {
  double value = 0.0;
  Vector gradient;
};

/// R(θ) = θᵀθ over every parameter, biases included. ∇R = 2θ.
inline ValueGradient squared_l2(const Vector& theta) {
  return {theta.squaredNorm(), 2.0 * theta};
}

/// Squared deviation of the current loss from a fixed reference loss.
class LossDeviation {
public:
  explicit LossDeviation(double reference_loss) : reference_(reference_loss) {
    if (!std::isfinite(reference_loss) || reference_loss < 0.0) {
      throw std::invalid_argument("reference loss must be finite and non-negative");
    }
  }

  double reference_loss() const { return reference_; }

  double value(double current_loss) const {
    const double d = current_loss - reference_;
    return d * d;
  }

  /// D = (L - L_ref)², ∇D = 2 (L - L_ref) ∇L.
  ValueGradient value_and_gradient(double current_loss, const Vector& loss_gradient) const {
    const double d = current_loss - reference_;
    return {d * d, (2.0 * d) * loss_gradient};
  }

private:
  double reference_;
};

} // namespace levelset

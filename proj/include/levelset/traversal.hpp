#pragma once

// Predictor/corrector walk along a fixed-loss level set.
//
// Each iteration first runs corrector steps until the squared loss deviation
// from the starting loss drops to the threshold, then records a trace row, then
// takes one predictor step along the regularizer gradient with its component
// along the loss gradient removed. Both step types move a distance equal to
// their own learning rate along a unit direction; each learning rate shrinks
// or grows depending on how far its direction turned since the previous step.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "levelset/geometry.hpp"
#include "levelset/network.hpp"
#include "levelset/objectives.hpp"

namespace levelset {

enum class DirectionMode {
  minimize_regularizer, ///< r = ∇R, stepping against it
  random_walk,          ///< r ~ Normal(0, I), fresh each predictor step
};

struct TraversalConfig {
  double deviation_threshold = 1e-10;
  int max_predictor_steps = 20000;
  double angle_change_threshold_deg = 0.1;
  double lr_decrease_factor = 0.1;
  double lr_increase_factor = 1.1;
  double initial_lr_predictor = 1e-3;
  double initial_lr_corrector = 1e-3;
  int max_corrector_steps_per_predictor = 1000;
  double antiparallel_stop_deg = 1.0;
  /// Relative size of δ_p (against ‖∇R‖) below which the gradients count as anti-parallel.
  double predictor_degeneracy_ratio = 1e-12;
  /// Test metrics are evaluated on every k-th trace row; other rows carry NaN.
  int metrics_every = 1;
  DirectionMode direction = DirectionMode::minimize_regularizer;
  std::uint64_t random_direction_seed = 0;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(deviation_threshold, "deviation_threshold");
    positive(angle_change_threshold_deg, "angle_change_threshold_deg");
    positive(initial_lr_predictor, "initial_lr_predictor");
    positive(initial_lr_corrector, "initial_lr_corrector");
    positive(antiparallel_stop_deg, "antiparallel_stop_deg");
    positive(predictor_degeneracy_ratio, "predictor_degeneracy_ratio");
    if (!(lr_decrease_factor > 0.0 && lr_decrease_factor < 1.0 && lr_increase_factor > 1.0)) {
      throw std::invalid_argument("learning-rate factors must satisfy 0 < decrease < 1 < increase");
    }
    if (max_predictor_steps < 1) throw std::invalid_argument("max_predictor_steps must be >= 1");
    if (max_corrector_steps_per_predictor < 0) {
      throw std::invalid_argument("max_corrector_steps_per_predictor must be >= 0");
    }
    if (metrics_every < 1) throw std::invalid_argument("metrics_every must be >= 1");
  }
};

struct TraceRecord {
  std::uint64_t predictor_index = 0;
  double train_loss = 0.0;
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_metric = std::numeric_limits<double>::quiet_NaN();
  double sq_norm = 0.0;
  double angle_deg = 0.0;
  double lr_predictor = 0.0;
  double lr_corrector = 0.0;
  std::uint64_t corrector_steps = 0;
  std::uint64_t cum_grad_evals = 0;
};

enum class StopReason { max_steps, anti_parallel, numerical_failure };

inline const char* to_string(StopReason s) {
  switch (s) {
  case StopReason::max_steps: return "max-steps";
  case StopReason::anti_parallel: return "anti-parallel";
  case StopReason::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

struct TraversalResult {
  std::vector<TraceRecord> trace;
  Vector final_theta;
  StopReason stop_reason = StopReason::max_steps;
  double reference_loss = 0.0;
  std::uint64_t predictor_steps = 0;
  std::uint64_t corrector_steps = 0;
  /// Predictor iterations whose corrector ended by stalling or exhausting its budget.
  std::uint64_t corrector_stalls = 0;
  std::uint64_t corrector_budget_hits = 0;
  std::string failure_message;
};

// ---------------------------------------------------------------------------
// Single steps

struct Step {
  Vector theta;
  Vector direction; ///< raw (unnormalized) step direction
};

/// δ_p = r − proj_{∇L} r. Empty when δ_p is degenerate, i.e. r and ∇L are (anti-)parallel.
inline std::optional<Vector> predictor_direction(const Vector& loss_grad, const Vector& reg_grad,
                                                 double degeneracy_ratio = 1e-12) {
  Vector dp = reject(reg_grad, loss_grad);
  const double n = dp.norm();
  if (!(n >= kDegenerateNorm) || n < degeneracy_ratio * reg_grad.norm()) return std::nullopt;
  return dp;
}

/// θ − lr·δ̂_p. Empty on the anti-parallel stop signal.
inline std::optional<Step> predictor_step(const Vector& theta, const Vector& loss_grad, const Vector& reg_grad,
                                          double lr, double degeneracy_ratio = 1e-12) {
  auto dp = predictor_direction(loss_grad, reg_grad, degeneracy_ratio);
  if (!dp) return std::nullopt;
  return Step{theta - lr * normalize(*dp), std::move(*dp)};
}

/// δ_c = ∇D − proj_{δ_p} ∇D, or ∇D itself before any predictor step. Empty when the corrector stalls.
inline std::optional<Vector> corrector_direction(const Vector& deviation_grad, const Vector* delta_p) {
  Vector dc = delta_p != nullptr ? reject(deviation_grad, *delta_p) : deviation_grad;
  const double ref = deviation_grad.norm();
  if (!(dc.norm() >= kDegenerateNorm) || dc.norm() < 1e-12 * ref) return std::nullopt;
  return dc;
}

/// θ − lr·δ̂_c. Empty when the deviation gradient lies along δ_p.
inline std::optional<Step> corrector_step(const Vector& theta, const Vector& deviation_grad, const Vector& delta_p,
                                          double lr) {
  auto dc = corrector_direction(deviation_grad, &delta_p);
  if (!dc) return std::nullopt;
  return Step{theta - lr * normalize(*dc), std::move(*dc)};
}

/// Shrinks lr when the direction turned by more than the threshold since the previous step,
/// grows it otherwise. Without a previous direction lr is returned unchanged.
inline double adapt_lr(const Vector* prev_direction, const Vector& new_direction, double lr,
                       const TraversalConfig& cfg) {
  if (prev_direction == nullptr) return lr;
  const double turn = angle_degrees(*prev_direction, new_direction);
  return turn > cfg.angle_change_threshold_deg ? lr * cfg.lr_decrease_factor : lr * cfg.lr_increase_factor;
}

/// Learning rate plus the last unit direction it was used with.
class StepSizeController {
public:
  explicit StepSizeController(double lr) : lr_(lr) {}

  /// Adapts to `direction` and returns the learning rate to use for it.
  double update(const Vector& unit_direction, const TraversalConfig& cfg) {
    lr_ = adapt_lr(prev_ ? &*prev_ : nullptr, unit_direction, lr_, cfg);
    prev_ = unit_direction;
    return lr_;
  }

  double lr() const { return lr_; }

private:
  double lr_;
  std::optional<Vector> prev_;
};

// ---------------------------------------------------------------------------
// Engine

/// What the walk needs from a problem: the constraint function with its gradient (counted),
/// the regularizer with its gradient, and optional held-out metrics.
template <class P>
concept LevelSetProblem = requires(P& p, const Vector& x, TraceRecord& rec) {
  { p.loss_and_gradient(x) } -> std::same_as<LossGradient>;
  { p.regularizer(x) } -> std::same_as<ValueGradient>;
  { p.grad_evals() } -> std::convertible_to<std::uint64_t>;
  p.observe(x, rec);
};

/// Called with every recorded point (after its trace row is filled in).
using PointObserver = std::function<void(const TraceRecord&, const Vector& theta)>;

template <LevelSetProblem P>
TraversalResult traverse(P& problem, const Vector& theta0, const TraversalConfig& cfg,
                         const PointObserver& on_point = {}) {
  cfg.validate();
  TraversalResult res;
  Vector theta = theta0;

  std::mt19937_64 walk_rng(cfg.random_direction_seed);
  std::normal_distribution<double> gauss;

  LossGradient lg;
  try {
    lg = problem.loss_and_gradient(theta);
  } catch (const NumericalFailure& e) {
    res.final_theta = theta;
    res.stop_reason = StopReason::numerical_failure;
    res.failure_message = e.what();
    return res;
  }
  const LossDeviation deviation(lg.loss);
  res.reference_loss = lg.loss;

  StepSizeController predictor_lr(cfg.initial_lr_predictor);
  StepSizeController corrector_lr(cfg.initial_lr_corrector);
  std::optional<Vector> delta_p;

  for (std::uint64_t k = 0;; ++k) {
    std::uint64_t csteps = 0;
    try {
      while (deviation.value(lg.loss) > cfg.deviation_threshold &&
             csteps < static_cast<std::uint64_t>(cfg.max_corrector_steps_per_predictor)) {
        const Vector dgrad = deviation.value_and_gradient(lg.loss, lg.gradient).gradient;
        auto dc = corrector_direction(dgrad, delta_p ? &*delta_p : nullptr);
        if (!dc) {
          ++res.corrector_stalls;
          break;
        }
        const Vector unit = normalize(*dc);
        theta -= corrector_lr.update(unit, cfg) * unit;
        ++csteps;
        lg = problem.loss_and_gradient(theta);
      }
      if (deviation.value(lg.loss) > cfg.deviation_threshold &&
          csteps == static_cast<std::uint64_t>(cfg.max_corrector_steps_per_predictor)) {
        ++res.corrector_budget_hits;
      }
    } catch (const NumericalFailure& e) {
      res.corrector_steps += csteps;
      res.stop_reason = StopReason::numerical_failure;
      res.failure_message = e.what();
      break;
    }
    res.corrector_steps += csteps;

    const ValueGradient reg = problem.regularizer(theta);
    TraceRecord rec;
    rec.predictor_index = k;
    rec.train_loss = lg.loss;
    rec.sq_norm = theta.squaredNorm();
    rec.angle_deg = angle_degrees(lg.gradient, reg.gradient);
    rec.lr_predictor = predictor_lr.lr();
    rec.lr_corrector = corrector_lr.lr();
    rec.corrector_steps = csteps;
    rec.cum_grad_evals = problem.grad_evals();
    if (k % static_cast<std::uint64_t>(cfg.metrics_every) == 0) problem.observe(theta, rec);
    res.trace.push_back(rec);
    if (on_point) on_point(rec, theta);

    if (cfg.direction == DirectionMode::minimize_regularizer &&
        rec.angle_deg >= 180.0 - cfg.antiparallel_stop_deg) {
      res.stop_reason = StopReason::anti_parallel;
      break;
    }
    if (k + 1 >= static_cast<std::uint64_t>(cfg.max_predictor_steps)) {
      res.stop_reason = StopReason::max_steps;
      break;
    }

    Vector r;
    if (cfg.direction == DirectionMode::minimize_regularizer) {
      r = reg.gradient;
    } else {
      r.resize(theta.size());
      for (auto& v : r) v = gauss(walk_rng);
    }
    auto dp = predictor_direction(lg.gradient, r, cfg.predictor_degeneracy_ratio);
    if (!dp) {
      res.stop_reason = StopReason::anti_parallel;
      break;
    }
    const Vector unit = normalize(*dp);
    theta -= predictor_lr.update(unit, cfg) * unit;
    delta_p = unit;
    ++res.predictor_steps;
    try {
      lg = problem.loss_and_gradient(theta);
    } catch (const NumericalFailure& e) {
      res.stop_reason = StopReason::numerical_failure;
      res.failure_message = e.what();
      break;
    }
  }

  res.final_theta = std::move(theta);
  return res;
}

// ---------------------------------------------------------------------------
// Network adapter

/// Full-batch training loss as the constraint, θᵀθ as the regularizer, test-split metrics.
class NetworkProblem {
public:
  NetworkProblem(const NetworkSpec& spec, const Batch& train, const Batch* test, GradEvalCounter counter = {})
      : spec_(spec), train_(train), test_(test), counter_(counter) {}

  LossGradient loss_and_gradient(const Vector& theta) { return levelset::loss_and_gradient(spec_, theta, train_, counter_); }

  ValueGradient regularizer(const Vector& theta) const { return squared_l2(theta); }

  std::uint64_t grad_evals() const { return counter_.count; }

  void observe(const Vector& theta, TraceRecord& rec) const {
    if (test_ == nullptr || test_->size() == 0) return;
    rec.test_loss = loss_value(spec_, theta, *test_);
    rec.test_metric = test_metric(spec_, theta, *test_);
  }

  const GradEvalCounter& counter() const { return counter_; }

private:
  const NetworkSpec& spec_;
  const Batch& train_;
  const Batch* test_;
  GradEvalCounter counter_;
};

static_assert(LevelSetProblem<NetworkProblem>);

} // namespace levelset

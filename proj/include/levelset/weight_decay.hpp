#pragma once

// Weight-decay comparison arm: single-phase Adam training on L(θ) + λ θᵀθ,
// swept over a grid of λ values with several seeds per value.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "levelset/datasets.hpp"
#include "levelset/parallel.hpp"
#include "levelset/training.hpp"

namespace levelset {

/// 10^lo, 10^(lo+1), ..., 10^hi.
inline std::vector<double> log10_grid(int lo, int hi) {
  std::vector<double> g;
  for (int e = lo; e <= hi; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

struct DecayConfig {
  std::vector<double> lambda_grid = log10_grid(-6, 6);
  int runs_per_lambda = 10;
  TrainConfig train; ///< seed and weight_decay are overwritten per run
  std::uint64_t seed_base = 0;
  unsigned jobs = 1;

  void validate() const {
    if (lambda_grid.empty()) throw std::invalid_argument("lambda grid is empty");
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
      if (!(lambda_grid[i] >= 0.0)) throw std::invalid_argument("lambda values must be non-negative");
      if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1])) throw std::invalid_argument("lambda grid must ascend");
    }
    if (runs_per_lambda < 1) throw std::invalid_argument("runs_per_lambda must be >= 1");
    train.validate();
  }
};

struct DecayRun {
  double lambda = 0.0;
  int run = 0;
  std::uint64_t seed = 0;
  double test_metric = 0.0;
  double final_sq_norm = 0.0;
  bool failed = false;
  std::uint64_t grad_evals = 0;
  Vector theta;
};

struct LambdaAggregate {
  double lambda = 0.0;
  double mean = 0.0;
  double stddev = 0.0; ///< population standard deviation over successful runs
  int successes = 0;
  int failures = 0;
};

struct SweepResult {
  std::vector<DecayRun> runs; ///< grid-major, then run index
  std::vector<LambdaAggregate> aggregates; ///< only λ values with at least one successful run
  double best_lambda = 0.0;
  bool higher_is_better = true;
  std::vector<std::string> warnings;

  const LambdaAggregate& best() const {
    for (const auto& a : aggregates) {
      if (a.lambda == best_lambda) return a;
    }
    throw std::logic_error("best lambda missing from aggregates");
  }
};

/// Trains one network on the penalized objective. Divergence marks the run failed instead of throwing.
inline DecayRun train_weight_decay(const NetworkSpec& spec, const data::Split& split, double lambda,
                                   TrainConfig cfg) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  cfg.weight_decay = lambda;
  DecayRun r;
  r.lambda = lambda;
  r.seed = cfg.seed;
  GradEvalCounter counter;
  try {
    auto trained = train_minibatch(spec, split.train, cfg, counter);
    r.test_metric = test_metric(spec, trained.theta, split.test);
    r.final_sq_norm = trained.theta.squaredNorm();
    r.failed = !std::isfinite(r.test_metric);
    r.theta = std::move(trained.theta);
  } catch (const NumericalFailure&) {
    r.failed = true;
    r.test_metric = std::nan("");
    r.final_sq_norm = std::nan("");
  }
  r.grad_evals = counter.count;
  return r;
}

/// Aggregates per λ and picks the best mean (max accuracy or min MSE); ties go to the smaller λ.
inline SweepResult aggregate_sweep(std::vector<DecayRun> runs, const std::vector<double>& grid, bool higher_is_better) {
  SweepResult s;
  s.higher_is_better = higher_is_better;
  s.runs = std::move(runs);
  for (double lambda : grid) {
    LambdaAggregate a;
    a.lambda = lambda;
    std::vector<double> vals;
    for (const auto& r : s.runs) {
      if (r.lambda != lambda) continue;
      if (r.failed) ++a.failures;
      else vals.push_back(r.test_metric);
    }
    if (vals.empty()) {
      s.warnings.push_back("all runs failed for lambda " + std::to_string(lambda) + "; excluded");
      continue;
    }
    a.successes = static_cast<int>(vals.size());
    for (double v : vals) a.mean += v;
    a.mean /= static_cast<double>(vals.size());
    for (double v : vals) a.stddev += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(a.stddev / static_cast<double>(vals.size()));
    if (a.failures > 0) {
      s.warnings.push_back(std::to_string(a.failures) + " failed run(s) for lambda " + std::to_string(lambda));
    }
    s.aggregates.push_back(a);
  }
  if (s.aggregates.empty()) throw NumericalFailure("every weight-decay run failed");
  const LambdaAggregate* best = &s.aggregates.front();
  for (const auto& a : s.aggregates) {
    const bool better = higher_is_better ? a.mean > best->mean : a.mean < best->mean;
    if (better) best = &a;
  }
  s.best_lambda = best->lambda;
  return s;
}

/// Seeds are seed_base + run index, identical across λ values.
inline SweepResult lambda_sweep(const NetworkSpec& spec, const data::Split& split, const DecayConfig& cfg) {
  cfg.validate();
  const std::size_t runs = static_cast<std::size_t>(cfg.runs_per_lambda);
  std::vector<DecayRun> results(cfg.lambda_grid.size() * runs);
  parallel_for(results.size(), cfg.jobs, [&](std::size_t i) {
    TrainConfig tc = cfg.train;
    const int run = static_cast<int>(i % runs);
    tc.seed = cfg.seed_base + static_cast<std::uint64_t>(run);
    results[i] = train_weight_decay(spec, split, cfg.lambda_grid[i / runs], tc);
    results[i].run = run;
  });
  return aggregate_sweep(std::move(results), cfg.lambda_grid, metric_higher_is_better(spec.head));
}

} // namespace levelset

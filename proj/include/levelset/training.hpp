#pragma once

// Minibatch Adam training from a Glorot initialization. Serves both the first
// phase of the level-set method (plain loss) and the weight-decay baseline
// (loss + λ θᵀθ).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "levelset/adam.hpp"
#include "levelset/network.hpp"

namespace levelset {

struct TrainConfig {
  int batch_size = 32;
  int epochs = 500;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Coefficient λ of the θᵀθ penalty; 0 gives plain loss minimization.
  double weight_decay = 0.0;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be non-negative");
  }
};

struct TrainResult {
  Vector theta;
  /// Plain training loss (no penalty) on the full training split.
  double final_train_loss = 0.0;
  double initial_train_loss = 0.0;
};

/// Shuffled index order for one epoch. The shuffling stream is separate from the init stream.
class EpochShuffler {
public:
  EpochShuffler(std::size_t n, std::uint64_t seed) : order_(n) {
    std::seed_seq seq{seed, std::uint64_t{0x5eed}};
    rng_.seed(seq);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  const std::vector<std::size_t>& next() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    return order_;
  }

private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
};

/// Trains from glorot_init(spec, cfg.seed). The last partial minibatch of each epoch is kept.
/// Every minibatch gradient adds its size to `counter`.
inline TrainResult train_minibatch(const NetworkSpec& spec, const Batch& train, const TrainConfig& cfg,
                                   GradEvalCounter& counter) {
  cfg.validate();
  if (train.size() == 0) throw std::invalid_argument("training split is empty");

  TrainResult r;
  r.theta = glorot_init(spec, cfg.seed);
  r.initial_train_loss = loss_value(spec, r.theta, train);

  AdamState adam = AdamState::zeros(r.theta.size());
  EpochShuffler shuffler(train.size(), cfg.seed);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto& order = shuffler.next();
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      const Batch mb = select_rows(train, std::span(order).subspan(start, len));
      LossGradient lg;
      try {
        lg = loss_and_gradient(spec, r.theta, mb, counter);
      } catch (const NumericalFailure& e) {
        throw NumericalFailure(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
      if (cfg.weight_decay != 0.0) {
        lg.gradient += (2.0 * cfg.weight_decay) * r.theta;
        if (!lg.gradient.allFinite()) {
          throw NumericalFailure("non-finite weight-decay gradient at epoch " + std::to_string(epoch));
        }
      }
      adam_step(adam, r.theta, lg.gradient, cfg.adam);
    }
  }

  r.final_train_loss = loss_value(spec, r.theta, train);
  if (!std::isfinite(r.final_train_loss) || !r.theta.allFinite()) {
    throw NumericalFailure("training diverged: final loss is not finite");
  }
  return r;
}

/// Phase-1 training: plain loss minimization to a near-zero loss starting point.
inline TrainResult train_phase1(const NetworkSpec& spec, const Batch& train, TrainConfig cfg,
                                GradEvalCounter& counter) {
  cfg.weight_decay = 0.0;
  return train_minibatch(spec, train, cfg, counter);
}

/// Value and gradient of the weight-decay objective L(θ) + λ θᵀθ on one batch.
inline LossGradient weight_decay_objective(const NetworkSpec& spec, const Vector& theta, const Batch& batch,
                                           double lambda, GradEvalCounter& counter) {
  LossGradient lg = loss_and_gradient(spec, theta, batch, counter);
  lg.loss += lambda * theta.squaredNorm();
  lg.gradient += (2.0 * lambda) * theta;
  return lg;
}

} // namespace levelset

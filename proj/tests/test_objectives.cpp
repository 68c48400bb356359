#include <gtest/gtest.h>

#include <random>

#include "levelset/adam.hpp"
#include "levelset/objectives.hpp"
#include "levelset/training.hpp"
#include "test_util.hpp"

using namespace levelset;
using namespace levelset::testing;

TEST(SquaredL2, Examples) {
  const auto z = squared_l2(Vector::Zero(3));
  EXPECT_EQ(z.value, 0.0);
  EXPECT_TRUE(z.gradient.isZero(0.0));
  const auto r = squared_l2((Vector(2) << 1, 2).finished());
  EXPECT_EQ(r.value, 5.0);
  EXPECT_EQ(r.gradient, (Vector(2) << 2, 4).finished());
}

TEST(SquaredL2, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(1);
  for (int instance = 0; instance < 10; ++instance) {
    const Vector t = random_vector(rng, 50, 2.0);
    const double err = max_fd_error([](const Vector& x) { return x.dot(x); }, t, squared_l2(t).gradient,
                                    sample_coords(rng, t.size(), 20));
    EXPECT_LT(err, 1e-5);
  }
}

TEST(SquaredL2, NonNegativeAndZeroOnlyAtOrigin) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) EXPECT_GT(squared_l2(random_vector(rng, 5)).value, 0.0);
}

TEST(LossDeviation, Examples) {
  const Vector g = (Vector(3) << 1, -2, 4).finished();
  const LossDeviation on(0.25);
  const auto at_ref = on.value_and_gradient(0.25, g);
  EXPECT_EQ(at_ref.value, 0.0);
  EXPECT_TRUE(at_ref.gradient.isZero(0.0));

  const LossDeviation d(0.01);
  const auto r = d.value_and_gradient(0.013, g);
  EXPECT_NEAR(r.value, 9e-6, 1e-18);
  EXPECT_TRUE(r.gradient.isApprox(0.006 * g, 1e-12));
  EXPECT_NEAR(d.value(0.01 + 0.003), d.value(0.01 - 0.003), 1e-18);
}

TEST(LossDeviation, RejectsBadReference) {
  EXPECT_THROW(LossDeviation(-1.0), std::invalid_argument);
  EXPECT_THROW(LossDeviation(std::nan("")), std::invalid_argument);
}

TEST(LossDeviation, GradientParallelToLossGradient) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vector g = random_vector(rng, 8);
    const LossDeviation d(0.5);
    const double cur = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto r = d.value_and_gradient(cur, g);
    EXPECT_GE(r.value, 0.0);
    EXPECT_NEAR(std::abs(cosine_similarity(r.gradient, g)), 1.0, 1e-12);
  }
}

TEST(LossDeviation, NetworkGradientMatchesCentralDifferences) {
  std::mt19937_64 rng(4);
  const NetworkSpec s{{3, 8, 8, 4}};
  for (int instance = 0; instance < 10; ++instance) {
    const Batch b = random_classification_batch(rng, 10, 3, 4);
    const Vector t = random_vector(rng, static_cast<Eigen::Index>(s.param_count()), 0.6);
    const LossDeviation d(0.5 * loss_value(s, t, b));
    GradEvalCounter c;
    const auto lg = loss_and_gradient(s, t, b, c);
    const auto dv = d.value_and_gradient(lg.loss, lg.gradient);
    const double err = max_fd_error([&](const Vector& x) { return d.value(loss_value(s, x, b)); }, t, dv.gradient,
                                    sample_coords(rng, t.size(), 20));
    EXPECT_LT(err, 1e-4);
  }
}

TEST(WeightDecayObjective, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(5);
  for (int instance = 0; instance < 10; ++instance) {
    const NetworkSpec s{{4, 6, 5, instance % 2 ? 1 : 3}, instance % 2 ? Head::linear_regression : Head::softmax_classification};
    const Batch b = instance % 2 ? random_regression_batch(rng, 9, 4, 1) : random_classification_batch(rng, 9, 4, 3);
    const Vector t = random_vector(rng, static_cast<Eigen::Index>(s.param_count()), 0.6);
    const double lambda = std::pow(10.0, instance - 5);
    GradEvalCounter c;
    const auto obj = weight_decay_objective(s, t, b, lambda, c);
    EXPECT_EQ(c.count, 9u);
    const auto f = [&](const Vector& x) { return loss_value(s, x, b) + lambda * x.squaredNorm(); };
    EXPECT_NEAR(obj.loss, f(t), 1e-12 * std::max(1.0, f(t)));
    EXPECT_LT(max_fd_error(f, t, obj.gradient, sample_coords(rng, t.size(), 20)), 1e-4) << "lambda " << lambda;
  }
}

TEST(Adam, ZeroGradientLeavesThetaUnchanged) {
  Vector t = (Vector(3) << 1, -2, 3).finished();
  const Vector before = t;
  AdamState st = AdamState::zeros(3);
  adam_step(st, t, Vector::Zero(3), {});
  EXPECT_EQ(t, before);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstSign) {
  Vector t = Vector::Zero(4);
  const Vector g = (Vector(4) << 3.0, -0.2, 1e-2, -50.0).finished();
  AdamState st = AdamState::zeros(4);
  AdamConfig cfg;
  adam_step(st, t, g, cfg);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(t[i], -cfg.lr * (g[i] > 0 ? 1.0 : -1.0), 1e-8);
}

TEST(Adam, DeterministicAndMatchesHandUpdate) {
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  Vector t1 = (Vector(2) << 0.5, -0.5).finished(), t2 = t1;
  AdamState s1 = AdamState::zeros(2), s2 = AdamState::zeros(2);
  const Vector g1 = (Vector(2) << 1.0, 2.0).finished(), g2 = (Vector(2) << -0.5, 4.0).finished();
  adam_step(s1, t1, g1, cfg);
  adam_step(s1, t1, g2, cfg);
  adam_step(s2, t2, g1, cfg);
  adam_step(s2, t2, g2, cfg);
  EXPECT_EQ(t1, t2);

  // Two steps by hand for coordinate 0.
  double m = 0, v = 0, x = 0.5;
  for (int k = 1; k <= 2; ++k) {
    const double g = k == 1 ? 1.0 : -0.5;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.9, k))) / (std::sqrt(v / (1 - std::pow(0.999, k))) + 1e-8);
  }
  EXPECT_NEAR(t1[0], x, 1e-15);
}

TEST(Adam, ShapeMismatchThrows) {
  Vector t = Vector::Zero(3);
  AdamState st = AdamState::zeros(2);
  EXPECT_THROW(adam_step(st, t, Vector::Zero(3), {}), ShapeError);
}

#include <gtest/gtest.h>

#include "levelset/weight_decay.hpp"
#include "test_util.hpp"

using namespace levelset;

namespace {

const data::Split& iris() {
  static const data::Split s =
      data::make_split(data::load_iris(levelset::testing::data_dir() + "/iris.data"), data::iris_split(1), true);
  return s;
}

DecayRun run(double lambda, int r, double metric, bool failed = false) {
  DecayRun d;
  d.lambda = lambda;
  d.run = r;
  d.seed = static_cast<std::uint64_t>(r);
  d.test_metric = failed ? std::nan("") : metric;
  d.failed = failed;
  return d;
}

} // namespace

TEST(LambdaGrid, ThirteenPowersOfTen) {
  const auto g = log10_grid(-6, 6);
  ASSERT_EQ(g.size(), 13u);
  EXPECT_EQ(g.front(), 1e-6);
  EXPECT_EQ(g[6], 1.0);
  EXPECT_EQ(g.back(), 1e6);
  EXPECT_EQ(DecayConfig{}.lambda_grid, g);
  EXPECT_EQ(DecayConfig{}.runs_per_lambda, 10);
}

TEST(DecayConfig, Validation) {
  DecayConfig c;
  c.lambda_grid = {};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.lambda_grid = {1.0, 0.1};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.lambda_grid = {0.1};
  c.runs_per_lambda = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainWeightDecay, ZeroLambdaMatchesPhase1) {
  const NetworkSpec s{{4, 16, 3}};
  TrainConfig c;
  c.epochs = 10;
  c.seed = 3;
  GradEvalCounter counter;
  const auto p1 = train_phase1(s, iris().train, c, counter);
  const auto d = train_weight_decay(s, iris(), 0.0, c);
  EXPECT_EQ(d.theta, p1.theta);
  EXPECT_EQ(d.grad_evals, counter.count);
  EXPECT_FALSE(d.failed);
}

TEST(TrainWeightDecay, ExtremeDecayShrinksWeights) {
  const NetworkSpec s{{4, 16, 3}};
  TrainConfig c;
  c.epochs = 30;
  const auto none = train_weight_decay(s, iris(), 0.0, c);
  const auto heavy = train_weight_decay(s, iris(), 1e6, c);
  EXPECT_LT(heavy.final_sq_norm, none.final_sq_norm);
  EXPECT_THROW(train_weight_decay(s, iris(), -1.0, c), std::invalid_argument);
}

TEST(TrainWeightDecay, DivergenceMarksRunFailed) {
  const NetworkSpec s{{4, 8, 1}, Head::linear_regression};
  data::Split split;
  split.train.inputs = Matrix::Constant(4, 4, 1e200);
  split.train.targets = Matrix::Constant(4, 1, 1e200);
  split.test = split.train;
  TrainConfig c;
  c.epochs = 2;
  const auto r = train_weight_decay(s, split, 1e-3, c);
  EXPECT_TRUE(r.failed);
  EXPECT_TRUE(std::isnan(r.test_metric));
}

TEST(AggregateSweep, BestAndTieBreak) {
  const std::vector<double> grid{0.01, 0.1, 1.0};
  std::vector<DecayRun> runs{run(0.01, 0, 0.9), run(0.01, 1, 1.0), run(0.1, 0, 0.95), run(0.1, 1, 0.95),
                             run(1.0, 0, 0.5), run(1.0, 1, 0.7)};
  const auto s = aggregate_sweep(runs, grid, true);
  EXPECT_EQ(s.best_lambda, 0.01);
  EXPECT_NEAR(s.best().mean, 0.95, 1e-15);
  EXPECT_NEAR(s.best().stddev, 0.05, 1e-15);
  EXPECT_NEAR(s.aggregates[2].stddev, 0.1, 1e-15);

  const auto reg = aggregate_sweep(runs, grid, false);
  EXPECT_EQ(reg.best_lambda, 1.0);
}

TEST(AggregateSweep, FailedLambdaExcludedWithWarning) {
  const std::vector<double> grid{1.0, 2.0};
  std::vector<DecayRun> runs{run(1.0, 0, 0, true), run(1.0, 1, 0, true), run(2.0, 0, 0.4), run(2.0, 1, 0.5, true)};
  const auto s = aggregate_sweep(runs, grid, true);
  ASSERT_EQ(s.aggregates.size(), 1u);
  EXPECT_EQ(s.best_lambda, 2.0);
  EXPECT_EQ(s.best().successes, 1);
  EXPECT_EQ(s.best().failures, 1);
  EXPECT_EQ(s.warnings.size(), 2u);
  EXPECT_THROW(aggregate_sweep({run(1.0, 0, 0, true)}, {1.0}, true), NumericalFailure);
}

TEST(LambdaSweep, SingleLambdaSeedsAndReproducibility) {
  const NetworkSpec s{{4, 8, 3}};
  DecayConfig c;
  c.lambda_grid = {1e-3};
  c.runs_per_lambda = 3;
  c.seed_base = 40;
  c.train.epochs = 5;
  const auto a = lambda_sweep(s, iris(), c);
  EXPECT_EQ(a.best_lambda, 1e-3);
  ASSERT_EQ(a.runs.size(), 3u);
  for (int r = 0; r < 3; ++r) {
    EXPECT_EQ(a.runs[static_cast<std::size_t>(r)].run, r);
    EXPECT_EQ(a.runs[static_cast<std::size_t>(r)].seed, 40u + static_cast<std::uint64_t>(r));
  }
  c.jobs = 2;
  const auto b = lambda_sweep(s, iris(), c);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.runs[i].theta, b.runs[i].theta);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "levelset/network.hpp"
#include "test_util.hpp"

using namespace levelset;
using namespace levelset::testing;

namespace {

// Straightforward per-example evaluation straight from the layer definitions.
double naive_loss(const NetworkSpec& spec, const Vector& theta, const Batch& b) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < b.inputs.rows(); ++n) {
    std::vector<double> a(static_cast<std::size_t>(b.inputs.cols()));
    for (Eigen::Index j = 0; j < b.inputs.cols(); ++j) a[static_cast<std::size_t>(j)] = b.inputs(n, j);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
      const int in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
      std::vector<double> z(static_cast<std::size_t>(out));
      for (int o = 0; o < out; ++o) {
        double s = theta[static_cast<Eigen::Index>(off + static_cast<std::size_t>(in) * out + o)];
        for (int i = 0; i < in; ++i) s += a[static_cast<std::size_t>(i)] * theta[static_cast<Eigen::Index>(off + static_cast<std::size_t>(i) * out + o)];
        z[static_cast<std::size_t>(o)] = (l + 2 < spec.layer_sizes.size()) ? std::tanh(s) : s;
      }
      off += static_cast<std::size_t>(in) * out + out;
      a = z;
    }
    if (spec.head == Head::softmax_classification) {
      double denom = 0.0;
      for (double v : a) denom += std::exp(v);
      total += -std::log(std::exp(a[static_cast<std::size_t>(b.labels[static_cast<std::size_t>(n)])]) / denom);
    } else {
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b.targets(n, static_cast<Eigen::Index>(k));
        total += d * d / static_cast<double>(a.size());
      }
    }
  }
  return total / static_cast<double>(b.inputs.rows());
}

NetworkSpec random_spec(std::mt19937_64& rng, Head head) {
  std::uniform_int_distribution<int> width(1, 12), depth(1, 3);
  NetworkSpec s{{width(rng)}, head};
  const int hidden = depth(rng);
  for (int i = 0; i < hidden; ++i) s.layer_sizes.push_back(width(rng));
  s.layer_sizes.push_back(head == Head::softmax_classification ? std::uniform_int_distribution<int>(2, 6)(rng)
                                                               : std::uniform_int_distribution<int>(1, 3)(rng));
  return s;
}

} // namespace

TEST(NetworkSpec, ParamCountAndValidation) {
  const NetworkSpec iris{{4, 100, 100, 100, 3}};
  EXPECT_EQ(iris.param_count(), 4u * 100 + 100 + 100 * 100 + 100 + 100 * 100 + 100 + 100 * 3 + 3);
  EXPECT_THROW((NetworkSpec{{4, 3}}.validate()), ShapeError);
  EXPECT_THROW((NetworkSpec{{4, 0, 3}}.validate()), ShapeError);
  EXPECT_NO_THROW((NetworkSpec{{1, 1, 1}}.validate()));
}

TEST(NetworkSpec, LayerSlicesTileTheVector) {
  const NetworkSpec s{{3, 5, 2}};
  const auto sl = layer_slices(s);
  ASSERT_EQ(sl.size(), 2u);
  EXPECT_EQ(sl[0].weight_offset, 0u);
  EXPECT_EQ(sl[0].bias_offset, 15u);
  EXPECT_EQ(sl[1].weight_offset, 20u);
  EXPECT_EQ(sl[1].bias_offset, 30u);
  EXPECT_EQ(sl[1].bias_offset + 2, s.param_count());
}

TEST(GlorotInit, DeterministicPerSeed) {
  const NetworkSpec s{{4, 100, 100, 100, 3}};
  EXPECT_EQ(glorot_init(s, 7), glorot_init(s, 7));
  EXPECT_NE(glorot_init(s, 7), glorot_init(s, 8));
}

TEST(GlorotInit, FirstLayerVarianceAndZeroBiases) {
  const NetworkSpec s{{4, 100, 100, 100, 3}};
  const Vector t = glorot_init(s, 3);
  const auto sl = layer_slices(s);
  const Vector w = t.segment(0, 400);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / 399.0;
  EXPECT_NEAR(var, 2.0 / 104.0, 0.5 * 2.0 / 104.0);
  for (const auto& x : sl) {
    EXPECT_TRUE(t.segment(static_cast<Eigen::Index>(x.bias_offset), x.fan_out).isZero(0.0));
  }
}

TEST(Forward, ZeroThetaUniformSoftmax) {
  const NetworkSpec s{{5, 7, 10}};
  std::mt19937_64 rng(1);
  const Batch b = random_classification_batch(rng, 6, 5, 10);
  const Matrix p = forward(s, Vector::Zero(static_cast<Eigen::Index>(s.param_count())), b);
  EXPECT_TRUE(p.isApprox(Matrix::Constant(6, 10, 0.1), 1e-15));
}

TEST(Forward, ZeroThetaLinearHeadIsZero) {
  const NetworkSpec s{{5, 7, 2}, Head::linear_regression};
  std::mt19937_64 rng(2);
  const Batch b = random_regression_batch(rng, 4, 5, 2);
  EXPECT_TRUE(forward(s, Vector::Zero(static_cast<Eigen::Index>(s.param_count())), b).isZero(0.0));
}

TEST(Forward, RowsIndependentOfBatch) {
  const NetworkSpec s{{4, 100, 100, 100, 3}};
  std::mt19937_64 rng(3);
  const Batch big = random_classification_batch(rng, 32, 4, 3);
  const Vector t = glorot_init(s, 11);
  const std::vector<std::size_t> pick{17};
  const Matrix one = forward(s, t, select_rows(big, pick));
  const Matrix all = forward(s, t, big);
  EXPECT_TRUE(one.row(0).isApprox(all.row(17), 1e-14));
}

TEST(Forward, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const NetworkSpec s = random_spec(rng, Head::softmax_classification);
    const Batch b = random_classification_batch(rng, 9, s.input_dim(), s.output_dim());
    const Matrix p = forward(s, random_vector(rng, static_cast<Eigen::Index>(s.param_count()), 3.0), b);
    for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-9);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(Forward, ShapeMismatchThrows) {
  const NetworkSpec s{{4, 5, 3}};
  std::mt19937_64 rng(5);
  const Batch b = random_classification_batch(rng, 3, 4, 3);
  EXPECT_THROW(forward(s, Vector::Zero(5), b), ShapeError);
  const Batch wrong = random_classification_batch(rng, 3, 6, 3);
  EXPECT_THROW(forward(s, glorot_init(s, 0), wrong), ShapeError);
}

TEST(Loss, ZeroThetaTenClassesIsLnTen) {
  const NetworkSpec s{{5, 7, 10}};
  std::mt19937_64 rng(6);
  const Batch b = random_classification_batch(rng, 8, 5, 10);
  GradEvalCounter c;
  const auto lg = loss_and_gradient(s, Vector::Zero(static_cast<Eigen::Index>(s.param_count())), b, c);
  EXPECT_NEAR(lg.loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(lg.loss, 2.302585, 1e-6);
}

TEST(Loss, PerfectRegressionFitHasZeroLossAndGradient) {
  const NetworkSpec s{{3, 6, 2}, Head::linear_regression};
  std::mt19937_64 rng(7);
  Batch b = random_regression_batch(rng, 5, 3, 2);
  const Vector t = glorot_init(s, 2);
  b.targets = forward(s, t, b);
  GradEvalCounter c;
  const auto lg = loss_and_gradient(s, t, b, c);
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_TRUE(lg.gradient.isZero(0.0));
}

TEST(Loss, MatchesNaiveEvaluation) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Head head = trial % 2 ? Head::linear_regression : Head::softmax_classification;
    const NetworkSpec s = random_spec(rng, head);
    const Batch b = head == Head::softmax_classification ? random_classification_batch(rng, 7, s.input_dim(), s.output_dim())
                                                         : random_regression_batch(rng, 7, s.input_dim(), s.output_dim());
    const Vector t = random_vector(rng, static_cast<Eigen::Index>(s.param_count()), 0.7);
    GradEvalCounter c;
    const double want = naive_loss(s, t, b);
    EXPECT_NEAR(loss_and_gradient(s, t, b, c).loss, want, 1e-12 * std::max(1.0, want));
    EXPECT_NEAR(loss_value(s, t, b), want, 1e-12 * std::max(1.0, want));
  }
}

TEST(Loss, TinyLossKeepsPrecision) {
  const NetworkSpec s{{1, 1, 2}};
  Batch b;
  b.inputs = Matrix::Ones(1, 1);
  b.labels = {0};
  Vector t = Vector::Zero(static_cast<Eigen::Index>(s.param_count()));
  t[2] = 40.0; // logit of class 0 through tanh(0)=0 is the bias
  t[4] = 40.0;
  // logits (40, 0): loss = log1p(exp(-40))
  EXPECT_NEAR(loss_value(s, t, b) / std::log1p(std::exp(-40.0)), 1.0, 1e-12);
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(9);
  for (int instance = 0; instance < 10; ++instance) {
    const Head head = instance % 2 ? Head::linear_regression : Head::softmax_classification;
    const NetworkSpec s = random_spec(rng, head);
    const Batch b = head == Head::softmax_classification ? random_classification_batch(rng, 11, s.input_dim(), s.output_dim())
                                                         : random_regression_batch(rng, 11, s.input_dim(), s.output_dim());
    const Vector t = random_vector(rng, static_cast<Eigen::Index>(s.param_count()), 0.8);
    GradEvalCounter c;
    const auto lg = loss_and_gradient(s, t, b, c);
    const auto coords = sample_coords(rng, t.size(), 20);
    const double err = max_fd_error([&](const Vector& x) { return naive_loss(s, x, b); }, t, lg.gradient, coords);
    EXPECT_LT(err, 1e-4) << "instance " << instance;
  }
}

TEST(Gradient, CounterAddsBatchSize) {
  const NetworkSpec s{{4, 6, 3}};
  std::mt19937_64 rng(10);
  const Batch b = random_classification_batch(rng, 13, 4, 3);
  const Vector t = glorot_init(s, 0);
  GradEvalCounter c;
  for (int k = 0; k < 7; ++k) loss_and_gradient(s, t, b, c);
  EXPECT_EQ(c.count, 7u * 13u);
  loss_value(s, t, b);
  accuracy(s, t, b);
  EXPECT_EQ(c.count, 7u * 13u);
}

TEST(Gradient, OverflowRaisesNumericalFailure) {
  const NetworkSpec s{{1, 1, 1}, Head::linear_regression};
  Batch b;
  b.inputs = Matrix::Ones(1, 1);
  b.targets = Matrix::Zero(1, 1);
  Vector t = Vector::Zero(4);
  t[3] = 1e300;
  GradEvalCounter c;
  EXPECT_THROW(loss_and_gradient(s, t, b, c), NumericalFailure);
}

TEST(Accuracy, TieBreaksToLowestIndex) {
  const NetworkSpec s{{2, 3, 4}};
  std::mt19937_64 rng(11);
  Batch b = random_classification_batch(rng, 5, 2, 4);
  b.labels.assign(5, 0);
  EXPECT_EQ(accuracy(s, Vector::Zero(static_cast<Eigen::Index>(s.param_count())), b), 1.0);
  b.labels.assign(5, 1);
  EXPECT_EQ(accuracy(s, Vector::Zero(static_cast<Eigen::Index>(s.param_count())), b), 0.0);
}

TEST(Accuracy, TwentyNineOfThirty) {
  // Output bias alone decides the class: logits (1, 0, 0) everywhere.
  const NetworkSpec s{{1, 1, 3}};
  Vector t = Vector::Zero(static_cast<Eigen::Index>(s.param_count()));
  t[static_cast<Eigen::Index>(layer_slices(s)[1].bias_offset)] = 1.0;
  Batch b;
  b.inputs = Matrix::Zero(30, 1);
  b.labels.assign(30, 0);
  b.labels[12] = 2;
  EXPECT_NEAR(accuracy(s, t, b), 0.9667, 5e-5);
  b.labels.assign(30, 0);
  EXPECT_EQ(accuracy(s, t, b), 1.0);
}

TEST(Accuracy, RegressionHeadUnsupported) {
  const NetworkSpec s{{2, 3, 1}, Head::linear_regression};
  std::mt19937_64 rng(12);
  const Batch b = random_regression_batch(rng, 3, 2, 1);
  EXPECT_THROW(accuracy(s, glorot_init(s, 0), b), UnsupportedMetricError);
  EXPECT_FALSE(metric_higher_is_better(Head::linear_regression));
}

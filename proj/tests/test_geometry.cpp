#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "levelset/geometry.hpp"
#include "test_util.hpp"

using namespace levelset;
using levelset::testing::random_vector;

namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

void expect_vec(const Vector& got, const Vector& want, double tol = 1e-12) {
  ASSERT_EQ(got.size(), want.size());
  for (Eigen::Index i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

} // namespace

TEST(Project, Examples) {
  expect_vec(project(v2(1, 0), v2(0, 1)), v2(0, 0));
  expect_vec(project(v2(2, 3), v2(1, 0)), v2(2, 0));
  expect_vec(project(v2(3, 4), v2(1, 1)), v2(3.5, 3.5));
}

TEST(Reject, Examples) {
  expect_vec(reject(v2(1, 0), v2(0, 1)), v2(1, 0));
  expect_vec(reject(v2(1, 1), v2(1, 1)), v2(0, 0));
  expect_vec(reject(v2(3, 4), v2(1, 1)), v2(-0.5, 0.5));
}

TEST(Angle, Examples) {
  EXPECT_NEAR(angle_degrees(v2(1, 0), v2(-1, 0)), 180.0, 1e-12);
  EXPECT_NEAR(angle_degrees(v2(1, 0), v2(0, 1)), 90.0, 1e-12);
  EXPECT_NEAR(angle_degrees(v2(1, 0), v2(1, 1)), 45.0, 1e-12);
}

TEST(Normalize, Examples) {
  expect_vec(normalize(v2(3, 4)), v2(0.6, 0.8));
  expect_vec(normalize(v2(0, 5)), v2(0, 1));
  expect_vec(normalize(Vector::Ones(4)), Vector::Constant(4, 0.5));
}

TEST(Geometry, DegenerateInputsThrow) {
  EXPECT_THROW(normalize(Vector::Zero(3)), DegenerateDirectionError);
  EXPECT_THROW(project(v2(1, 2), v2(0, 0)), DegenerateDirectionError);
  EXPECT_THROW(reject(v2(1, 2), v2(0, 0)), DegenerateDirectionError);
  EXPECT_THROW(angle_degrees(v2(0, 0), v2(1, 0)), DegenerateDirectionError);
  EXPECT_THROW(project(v2(1, 2), Vector::Ones(3)), ShapeError);
}

TEST(Geometry, CosineIsClamped) {
  const Vector a = v2(1e-3, 1e-3 + 1e-19);
  EXPECT_LE(cosine_similarity(a, a), 1.0);
  EXPECT_EQ(angle_degrees(a, a * 7.0), angle_degrees(a, a * 7.0));
  EXPECT_FALSE(std::isnan(angle_degrees(a, -a)));
}

class GeometryProperty : public ::testing::Test {
protected:
  static constexpr int kTrials = 1000;
  std::mt19937_64 rng{20240611};

  std::pair<Vector, Vector> draw() {
    const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(1, 64)(rng);
    const double sa = std::pow(10.0, std::uniform_real_distribution<double>(-6, 6)(rng));
    const double sb = std::pow(10.0, std::uniform_real_distribution<double>(-6, 6)(rng));
    return {random_vector(rng, n, sa), random_vector(rng, n, sb)};
  }
};

TEST_F(GeometryProperty, RejectIsOrthogonal) {
  for (int t = 0; t < kTrials; ++t) {
    const auto [a, b] = draw();
    EXPECT_LE(std::abs(reject(a, b).dot(b)), 1e-9 * a.norm() * b.norm()) << "trial " << t;
  }
}

TEST_F(GeometryProperty, ProjectPlusRejectRecoversInput) {
  for (int t = 0; t < kTrials; ++t) {
    const auto [a, b] = draw();
    const Vector sum = project(a, b) + reject(a, b);
    EXPECT_LE((sum - a).norm(), 1e-12 * a.norm()) << "trial " << t;
  }
}

TEST_F(GeometryProperty, ProjectInvariantToPositiveRescaling) {
  std::uniform_real_distribution<double> scale(-8, 8);
  for (int t = 0; t < kTrials; ++t) {
    const auto [a, b] = draw();
    const double c = std::pow(10.0, scale(rng));
    EXPECT_LE((project(a, c * b) - project(a, b)).norm(), 1e-12 * a.norm()) << "trial " << t;
  }
}

TEST_F(GeometryProperty, AngleSymmetricAndScaleInvariant) {
  std::uniform_real_distribution<double> scale(-8, 8);
  for (int t = 0; t < kTrials; ++t) {
    const auto [a, b] = draw();
    const double ang = angle_degrees(a, b);
    EXPECT_GE(ang, 0.0);
    EXPECT_LE(ang, 180.0);
    EXPECT_NEAR(angle_degrees(b, a), ang, 1e-9) << "trial " << t;
    const double ca = std::pow(10.0, scale(rng));
    const double cb = std::pow(10.0, scale(rng));
    EXPECT_NEAR(angle_degrees(ca * a, cb * b), ang, 1e-6) << "trial " << t;
  }
}

TEST_F(GeometryProperty, NormalizeHasUnitLength) {
  for (int t = 0; t < kTrials; ++t) {
    const auto [a, b] = draw();
    EXPECT_NEAR(normalize(a).norm(), 1.0, 1e-12);
    EXPECT_GT(normalize(a).dot(a), 0.0);
  }
}

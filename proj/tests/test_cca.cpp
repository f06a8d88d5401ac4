#include <gtest/gtest.h>

#include <cmath>

#include "citerec/cca.hpp"
#include "citerec/dcca.hpp"

using namespace citerec;

namespace {

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ac = a.array() - a.mean(), bc = b.array() - b.mean();
  return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

// Well-conditioned random invertible matrix.
Eigen::MatrixXd invertible(Rng& rng, Eigen::Index n) {
  Eigen::MatrixXd a = gaussian(rng, n, n);
  a.diagonal().array() += 3.0;
  return a;
}

}  // namespace

TEST(Cca, OneDimensionalPearson) {
  Eigen::MatrixXd x(3, 1), y(3, 1);
  x << 1, 2, 3;
  y << 1, 3, 2;
  auto m = fit_cca(x, y, {1, 0.0, true});
  ASSERT_EQ(m.correlations.size(), 1);
  EXPECT_NEAR(m.correlations(0), 0.5, 1e-9);
  m = fit_cca(x, y, {1, 0.0, false});
  EXPECT_NEAR(m.correlations(0), 0.5, 1e-9);
}

TEST(Cca, IdenticalViewsAreFullyCorrelated) {
  Rng rng(1);
  Eigen::MatrixXd x = gaussian(rng, 100, 5);
  auto m = fit_cca(x, x, {5, 0.0, true});
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_NEAR(m.correlations(j), 1.0, 1e-9);
  // Symmetric fit: both sides project identically.
  Eigen::MatrixXd px = m.project(x, Side::x), py = m.project(x, Side::y);
  EXPECT_LT((px - py).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Cca, InvertibleTransformGivesUnitCorrelations) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd x = gaussian(rng, 200, 6);
    Eigen::MatrixXd y = x * invertible(rng, 6);
    auto m = fit_cca(x, y, {6, 0.0, trial % 2 == 0});
    for (Eigen::Index j = 0; j < 6; ++j) EXPECT_NEAR(m.correlations(j), 1.0, 1e-6);
  }
}

TEST(Cca, SpectrumInvariantUnderAffineMaps) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd z = gaussian(rng, 200, 3);
    Eigen::MatrixXd x = gaussian(rng, 200, 8), y = gaussian(rng, 200, 6);
    x.leftCols(3) += z;
    y.leftCols(3) += 0.7 * z;
    auto base = fit_cca(x, y, {6, 0.0, false});
    Eigen::MatrixXd xt = (x * invertible(rng, 8)).rowwise() + gaussian(rng, 1, 8).row(0);
    Eigen::MatrixXd yt = (y * invertible(rng, 6)).rowwise() + gaussian(rng, 1, 6).row(0);
    auto moved = fit_cca(xt, yt, {6, 0.0, false});
    EXPECT_LT((base.correlations - moved.correlations).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Cca, ProjectionsAreCanonical) {
  Rng rng(4);
  Eigen::MatrixXd z = gaussian(rng, 500, 2);
  Eigen::MatrixXd x = gaussian(rng, 500, 5), y = gaussian(rng, 500, 4);
  x.leftCols(2) += 2.0 * z;
  y.leftCols(2) += z;
  const double reg = 1e-3;
  auto m = fit_cca(x, y, {4, reg, true});
  for (Eigen::Index j = 1; j < m.correlations.size(); ++j) EXPECT_GE(m.correlations(j - 1), m.correlations(j));
  for (Eigen::Index j = 0; j < m.correlations.size(); ++j) {
    EXPECT_GE(m.correlations(j), 0.0);
    EXPECT_LE(m.correlations(j), 1.0 + 1e-9);
  }
  Eigen::MatrixXd px = m.project(x, Side::x), py = m.project(y, Side::y);
  for (Eigen::Index j = 0; j < 4; ++j) {
    // Unit variance up to the regularizer, and the reported correlation is
    // the Pearson correlation of the column pair up to the same slack.
    const Eigen::VectorXd a = px.col(j), b = py.col(j);
    const double va = (a.array() - a.mean()).square().sum() / 499.0;
    EXPECT_NEAR(va, 1.0, 20 * reg);
    EXPECT_NEAR(pearson(a, b), m.correlations(j), 20 * reg);
  }
  // Directions are orthonormal in the regularized covariance metric:
  // W' (S + reg I) W = I exactly.
  Eigen::MatrixXd xs = m.sx.apply(x);
  xs = xs.rowwise() - xs.colwise().mean();
  Eigen::MatrixXd sxx = xs.transpose() * xs / 499.0;
  sxx.diagonal().array() += reg;
  EXPECT_LT((m.wx.transpose() * sxx * m.wx - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Cca, Errors) {
  Rng rng(5);
  Eigen::MatrixXd x = gaussian(rng, 10, 3), y = gaussian(rng, 10, 2);
  EXPECT_THROW(fit_cca(x, y, {3, 0.0, true}), ConfigError);
  EXPECT_THROW(fit_cca(x, y, {0, 0.0, true}), ConfigError);
  EXPECT_THROW(fit_cca(x, gaussian(rng, 9, 2), {1, 0.0, true}), ConfigError);
  EXPECT_THROW(fit_cca(x, y, {1, -1.0, true}), ConfigError);
  // Duplicate column: singular covariance at reg = 0, fine with reg > 0.
  Eigen::MatrixXd dup(10, 3);
  dup << x.leftCols(2), x.col(0);
  try {
    fit_cca(dup, y, {1, 0.0, false});
    FAIL() << "expected a fit error";
  } catch (const FitError& e) {
    EXPECT_NE(std::string(e.what()).find("reg > 0"), std::string::npos);
  }
  EXPECT_NO_THROW(fit_cca(dup, y, {1, 1e-3, false}));
  auto m = fit_cca(x, y, {1, 0.0, true});
  EXPECT_THROW(m.project(y, Side::x), ConfigError);
}

TEST(Cca, IdentityModelPassesInputThrough) {
  CcaModel m;
  m.d = 3;
  m.sx = Standardizer::identity(3);
  m.sy = Standardizer::identity(3);
  m.wx = m.wy = Eigen::MatrixXd::Identity(3, 3);
  Rng rng(6);
  Eigen::MatrixXd v = gaussian(rng, 4, 3);
  EXPECT_EQ(m.project(v, Side::x), v);
}

TEST(Standardizer, ZScoresAndKeepsConstants) {
  Eigen::MatrixXd x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  auto s = Standardizer::fit(x);
  Eigen::MatrixXd z = s.apply(x);
  EXPECT_NEAR(z.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(z.col(0).squaredNorm() / 3.0, 1.0, 1e-12);
  EXPECT_EQ(s.scale(1), 1.0);
  EXPECT_TRUE(z.col(1).isZero());
}

// ---------------------------------------------------------------------------

TEST(CorrelationObjective, OneDimensionIsNegativeAbsPearson) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a = gaussian(rng, 30, 1), b = 0.3 * a + gaussian(rng, 30, 1);
    if (trial % 2) b = -b;
    auto r = correlation_objective(a, b, 0.0);
    EXPECT_NEAR(r.loss, -std::abs(pearson(a.col(0), b.col(0))), 1e-12);
  }
}

TEST(CorrelationObjective, IdenticalInputsApproachMinusD) {
  Rng rng(8);
  Eigen::MatrixXd h = gaussian(rng, 50, 4);
  EXPECT_NEAR(correlation_objective(h, h, 0.0).loss, -4.0, 1e-9);
  EXPECT_NEAR(correlation_objective(h, h, 1e-8).loss, -4.0, 1e-6);
}

TEST(CorrelationObjective, SymmetricBitForBit) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a = gaussian(rng, 20, 3), b = gaussian(rng, 20, 3);
    auto ab = correlation_objective(a, b, 1e-4), ba = correlation_objective(b, a, 1e-4);
    EXPECT_EQ(ab.loss, ba.loss);
    EXPECT_EQ(ab.grad_h1, ba.grad_h2);
    EXPECT_EQ(ab.grad_h2, ba.grad_h1);
  }
}

TEST(CorrelationObjective, BoundedByMinusDAndZero) {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(5));
    Eigen::MatrixXd a = gaussian(rng, 40, d), b = gaussian(rng, 40, d);
    b += rng.uniform() * 3 * a;
    const double loss = correlation_objective(a, b, 1e-4).loss;
    EXPECT_LE(loss, 0.0);
    EXPECT_GE(loss, -static_cast<double>(d) - 1e-9);
  }
}

TEST(CorrelationObjective, GradientMatchesCentralDifferences) {
  Rng rng(11);
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd a = gaussian(rng, 32, 4), b = 0.5 * a + gaussian(rng, 32, 4);
    auto r = correlation_objective(a, b, 1e-3);
    for (int side = 0; side < 2; ++side) {
      Eigen::MatrixXd& m = side == 0 ? a : b;
      const Eigen::MatrixXd& g = side == 0 ? r.grad_h1 : r.grad_h2;
      Eigen::MatrixXd fd(m.rows(), m.cols());
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + h;
        const double up = correlation_objective(a, b, 1e-3).loss;
        m.data()[i] = keep - h;
        const double down = correlation_objective(a, b, 1e-3).loss;
        m.data()[i] = keep;
        fd.data()[i] = (up - down) / (2 * h);
      }
      EXPECT_LT((g - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff(), 1e-4);
    }
  }
}

TEST(CorrelationObjective, RejectsBadShapes) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Ones(5, 2);
  EXPECT_THROW(correlation_objective(a, Eigen::MatrixXd::Ones(5, 3), 0.0), ConfigError);
  EXPECT_THROW(correlation_objective(Eigen::MatrixXd::Ones(1, 2), Eigen::MatrixXd::Ones(1, 2), 0.0), ConfigError);
  // Constant columns are singular without regularization.
  EXPECT_THROW(correlation_objective(a, a, 0.0), FitError);
}

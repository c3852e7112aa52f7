#include "gpvine/empirics.hpp"
#include "gpvine/stats.hpp"
#include <gtest/gtest.h>
#include <algorithm>
#include <cmath>

using namespace gpvine;

namespace {

// tau-b by direct enumeration of all pairs
double
kendall_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
  long conc = 0, disc = 0, tx = 0, ty = 0;
  const Eigen::Index n = x.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double dx = x(i) - x(j), dy = y(i) - y(j);
      if (dx == 0 && dy == 0) {
        continue;
      }
      if (dx == 0) {
        ++tx;
      } else if (dy == 0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++conc;
      } else {
        ++disc;
      }
    }
  }
  double denom = tx == ty ? static_cast<double>(conc + disc + tx)
                          : std::sqrt(static_cast<double>(conc + disc + tx)) *
                              std::sqrt(static_cast<double>(conc + disc + ty));
  return denom == 0 ? 0.0 : static_cast<double>(conc - disc) / denom;
}

Eigen::VectorXd
random_vector(Eigen::Index n, stats::Philox& rng, int levels = 0)
{
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i) = levels ? static_cast<double>(rng.below(levels)) : rng.normal();
  }
  return v;
}

} // namespace

TEST(PseudoObservations, Examples)
{
  Eigen::MatrixXd a(3, 1);
  a << 10, 20, 30;
  auto pa = pseudo_observations(a);
  EXPECT_DOUBLE_EQ(pa.values(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(pa.values(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(pa.values(2, 0), 0.75);
  EXPECT_EQ(pa.column_names, std::vector<std::string>{ "V1" });

  Eigen::MatrixXd b(2, 1);
  b << 5, 5;
  auto pb = pseudo_observations(b);
  EXPECT_DOUBLE_EQ(pb.values(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(pb.values(1, 0), 0.5);

  Eigen::MatrixXd c(4, 1);
  c << 4, 3, 2, 1;
  auto pc = pseudo_observations(c);
  Eigen::Vector4d expect(0.8, 0.6, 0.4, 0.2);
  EXPECT_TRUE(pc.values.col(0).isApprox(expect, 1e-15));
}

TEST(PseudoObservations, Errors)
{
  EXPECT_THROW(pseudo_observations(Eigen::MatrixXd(1, 3)), SizeError);
  EXPECT_THROW(pseudo_observations(Eigen::MatrixXd::Zero(3, 2), { "a" }), SizeError);
}

TEST(PseudoObservations, InteriorPermutationAndUniform)
{
  stats::Philox rng(3);
  const Eigen::Index n = 500;
  Eigen::MatrixXd raw(n, 3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    raw.col(j) = random_vector(n, rng);
  }
  raw.col(2) = raw.col(2).array().exp();
  auto ps = pseudo_observations(raw);
  for (Eigen::Index j = 0; j < 3; ++j) {
    std::vector<double> col(ps.values.col(j).data(), ps.values.col(j).data() + n);
    std::sort(col.begin(), col.end());
    double ks = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      EXPECT_DOUBLE_EQ(col[i] * (n + 1), static_cast<double>(i + 1));
      ks = std::max({ ks, std::abs((i + 1.0) / n - col[i]), std::abs(col[i] - i / double(n)) });
    }
    EXPECT_LE(ks, 1.628 / std::sqrt(static_cast<double>(n)));
  }
}

TEST(KendallTau, Examples)
{
  Eigen::Vector3d x(1, 2, 3);
  EXPECT_DOUBLE_EQ(kendall_tau(x, Eigen::Vector3d(2, 4, 6)), 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(x, Eigen::Vector3d(3, 2, 1)), -1.0);
  EXPECT_NEAR(kendall_tau(x, Eigen::Vector3d(1, 3, 2)), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(kendall_tau(x, Eigen::Vector3d(5, 5, 5)), 0.0);
}

TEST(KendallTau, Errors)
{
  EXPECT_THROW(kendall_tau(Eigen::Vector3d(1, 2, 3), Eigen::Vector2d(1, 2)), SizeError);
  EXPECT_THROW(kendall_tau(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)), SizeError);
}

TEST(KendallTau, MatchesPairCountingOracle)
{
  stats::Philox rng(21);
  for (Eigen::Index n : { 2, 3, 7, 50, 128, 200 }) {
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd x = random_vector(n, rng);
      Eigen::VectorXd y = 0.5 * x + random_vector(n, rng);
      EXPECT_EQ(kendall_tau(x, y), kendall_oracle(x, y)) << n;
    }
  }
}

TEST(KendallTau, TiesMatchTauBOracle)
{
  stats::Philox rng(22);
  for (Eigen::Index n : { 5, 40, 200 }) {
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd x = random_vector(n, rng, 4);
      Eigen::VectorXd y = x + random_vector(n, rng, 3);
      EXPECT_NEAR(kendall_tau(x, y), kendall_oracle(x, y), 1e-14) << n;
    }
  }
}

TEST(KendallTau, SymmetricAndMonotoneInvariant)
{
  stats::Philox rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd x = random_vector(150, rng);
    Eigen::VectorXd y = x.array().sin().matrix() + random_vector(150, rng);
    double t = kendall_tau(x, y);
    EXPECT_EQ(t, kendall_tau(y, x));
    EXPECT_NEAR(kendall_tau(x.array().exp().matrix(), y.array().cube().matrix()), t, 1e-12);
    EXPECT_GE(t, -1.0);
    EXPECT_LE(t, 1.0);
  }
}

#pragma once

#include "gpvine/gpvine.hpp"
#include <Eigen/Dense>
#include <cstdint>

namespace testing_helpers {

//! n draws from the Gaussian copula with correlation matrix R.
inline Eigen::MatrixXd
gaussian_copula_sample(Eigen::Index n, const Eigen::MatrixXd& R, std::uint64_t seed)
{
  Eigen::MatrixXd L = R.llt().matrixL();
  gpvine::stats::Philox rng(seed, 99);
  Eigen::MatrixXd out(n, R.rows());
  Eigen::VectorXd x(R.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      x(j) = rng.normal();
    }
    Eigen::VectorXd y = L * x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      out(i, j) = gpvine::stats::normal_cdf(y(j));
    }
  }
  return out;
}

inline Eigen::MatrixXd
bivariate_sample(Eigen::Index n, double theta, std::uint64_t seed)
{
  Eigen::Matrix2d R;
  R << 1.0, theta, theta, 1.0;
  return gaussian_copula_sample(n, R, seed);
}

//! Composite Simpson rule on [a, b] with an even number of intervals.
template<class F>
double
simpson(F&& f, double a, double b, int intervals)
{
  double h = (b - a) / intervals;
  double s = f(a) + f(b);
  for (int k = 1; k < intervals; ++k) {
    s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  }
  return s * h / 3.0;
}

//! Analytic log-density of the Gaussian copula with correlation matrix R.
inline double
gaussian_copula_log_density(const Eigen::RowVectorXd& u, const Eigen::MatrixXd& R)
{
  Eigen::VectorXd x(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    x(j) = gpvine::stats::normal_quantile(u(j));
  }
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  Eigen::VectorXd s = llt.matrixL().solve(x);
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * logdet - 0.5 * s.squaredNorm() + 0.5 * x.squaredNorm();
}

} // namespace testing_helpers

#pragma once

#include "gpvine/errors.hpp"
#include "gpvine/stats.hpp"
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace gpvine {

enum class CopulaFamily
{
  gaussian,
  student,
  clayton,
  gumbel,
  independent
};

inline std::string
family_name(CopulaFamily family)
{
  switch (family) {
    case CopulaFamily::gaussian:
      return "gaussian";
    case CopulaFamily::student:
      return "student";
    case CopulaFamily::clayton:
      return "clayton";
    case CopulaFamily::gumbel:
      return "gumbel";
    case CopulaFamily::independent:
      return "independent";
  }
  return "unknown";
}

inline CopulaFamily
family_from_name(const std::string& name)
{
  for (auto f : { CopulaFamily::gaussian,
                  CopulaFamily::student,
                  CopulaFamily::clayton,
                  CopulaFamily::gumbel,
                  CopulaFamily::independent }) {
    if (family_name(f) == name) {
      return f;
    }
  }
  throw DomainError("unknown copula family '" + name + "'");
}

//! Only these two families have density and h-function support.
inline bool
has_density(CopulaFamily family)
{
  return family == CopulaFamily::gaussian ||
         family == CopulaFamily::independent;
}

//! Correlations are kept this far away from +-1, where the Gaussian copula
//! density and h-function are singular.
inline constexpr double theta_margin = 1e-6;

inline double
clamp_theta(double theta)
{
  return std::clamp(theta, -1.0 + theta_margin, 1.0 - theta_margin);
}

//! Kendall's tau to the copula parameter.
inline double
tau_to_theta(CopulaFamily family, double tau)
{
  auto fail = [&](const std::string& range) {
    throw DomainError("tau_to_theta: tau = " + std::to_string(tau) +
                      " outside " + range + " for the " + family_name(family) +
                      " family");
  };
  if (!std::isfinite(tau)) {
    fail("the reals");
  }
  switch (family) {
    case CopulaFamily::gaussian:
    case CopulaFamily::student:
      if (tau < -1.0 || tau > 1.0) {
        fail("[-1, 1]");
      }
      return std::sin(std::numbers::pi / 2.0 * tau);
    case CopulaFamily::clayton:
      if (tau <= 0.0 || tau >= 1.0) {
        fail("(0, 1)");
      }
      return 2.0 * tau / (1.0 - tau);
    case CopulaFamily::gumbel:
      if (tau < 0.0 || tau >= 1.0) {
        fail("[0, 1)");
      }
      return 1.0 / (1.0 - tau);
    case CopulaFamily::independent:
      if (tau != 0.0) {
        fail("{0}");
      }
      return 0.0;
  }
  return 0.0;
}

//! Copula parameter to Kendall's tau.
inline double
theta_to_tau(CopulaFamily family, double theta)
{
  auto fail = [&](const std::string& range) {
    throw DomainError("theta_to_tau: theta = " + std::to_string(theta) +
                      " outside " + range + " for the " +
                      family_name(family) + " family");
  };
  if (!std::isfinite(theta)) {
    fail("the reals");
  }
  switch (family) {
    case CopulaFamily::gaussian:
    case CopulaFamily::student:
      if (theta < -1.0 || theta > 1.0) {
        fail("[-1, 1]");
      }
      return 2.0 / std::numbers::pi * std::asin(theta);
    case CopulaFamily::clayton:
      if (theta <= 0.0) {
        fail("(0, inf)");
      }
      return theta / (theta + 2.0);
    case CopulaFamily::gumbel:
      if (theta < 1.0) {
        fail("[1, inf)");
      }
      return 1.0 - 1.0 / theta;
    case CopulaFamily::independent:
      if (theta != 0.0) {
        fail("{0}");
      }
      return 0.0;
  }
  return 0.0;
}

//! A copula parameter together with its Kendall's tau.
struct CopulaParam
{
  CopulaFamily family = CopulaFamily::gaussian;
  double theta = 0.0;
  double tau = 0.0;

  static CopulaParam from_tau(CopulaFamily family, double tau)
  {
    return { family, tau_to_theta(family, tau), tau };
  }

  static CopulaParam from_theta(CopulaFamily family, double theta)
  {
    return { family, theta, theta_to_tau(family, theta) };
  }
};

namespace detail {

inline void
check_unit(double u, const char* what)
{
  if (!(u > 0.0 && u < 1.0)) {
    throw BoundaryError(std::string(what) +
                        ": arguments must lie strictly inside (0, 1), got " +
                        std::to_string(u));
  }
}

inline void
check_correlation(double theta, const char* what)
{
  if (!(std::abs(theta) < 1.0)) {
    throw DomainError(std::string(what) + ": |theta| must be < 1, got " +
                      std::to_string(theta));
  }
}

} // namespace detail

//! Gaussian copula log-density on normal scores x = qnorm(u), y = qnorm(v).
inline double
gaussian_log_pdf_scores(double x, double y, double theta)
{
  double r2 = 1.0 - theta * theta;
  return -0.5 * std::log(r2) -
         (theta * theta * (x * x + y * y) - 2.0 * theta * x * y) / (2.0 * r2);
}

//! Gaussian h-function on normal scores: P(U <= u | V = v).
inline double
gaussian_h_scores(double x, double y, double theta)
{
  return stats::normal_cdf((x - theta * y) / std::sqrt(1.0 - theta * theta));
}

//! Bivariate Gaussian copula density c(u, v | theta).
inline double
gaussian_pdf(double u, double v, double theta)
{
  detail::check_unit(u, "gaussian_pdf");
  detail::check_unit(v, "gaussian_pdf");
  detail::check_correlation(theta, "gaussian_pdf");
  return std::exp(gaussian_log_pdf_scores(
    stats::normal_quantile(u), stats::normal_quantile(v), theta));
}

//! Conditional cdf of the first argument given the second,
//! dC(u, v)/dv = Phi((qnorm(u) - theta qnorm(v)) / sqrt(1 - theta^2)).
//! Swap the arguments for the other conditional.
inline double
gaussian_h(double u, double v, double theta)
{
  detail::check_unit(u, "gaussian_h");
  detail::check_unit(v, "gaussian_h");
  detail::check_correlation(theta, "gaussian_h");
  return gaussian_h_scores(
    stats::normal_quantile(u), stats::normal_quantile(v), theta);
}

//! Normal scores of an n x 2 matrix of pseudo-observations.
inline Eigen::MatrixXd
normal_scores(const Eigen::MatrixXd& data)
{
  Eigen::MatrixXd scores(data.rows(), data.cols());
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      scores(i, j) = stats::normal_quantile(data(i, j));
    }
  }
  return scores;
}

//! Sum of Gaussian copula log-densities over the rows of an n x 2 matrix.
inline double
gaussian_loglik(const Eigen::MatrixXd& data, double theta)
{
  if (data.cols() != 2) {
    throw SizeError("gaussian_loglik: expected an n x 2 matrix");
  }
  detail::check_correlation(theta, "gaussian_loglik");
  Eigen::MatrixXd scores = normal_scores(data);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    ll += gaussian_log_pdf_scores(scores(i, 0), scores(i, 1), theta);
  }
  return ll;
}

//! Maximum likelihood fit of an unconditional Gaussian copula.
//!
//! The search runs over tau: a coarse grid locates the best bracket, which
//! golden-section search then refines. The result is never worse than the
//! independence submodel theta = 0.
inline CopulaParam
fit_theta_mle(const Eigen::MatrixXd& data)
{
  if (data.cols() != 2) {
    throw SizeError("fit_theta_mle: expected an n x 2 matrix");
  }
  if (data.rows() < 2) {
    throw FitError("fit_theta_mle: need at least two observations");
  }
  bool identical = true;
  for (Eigen::Index i = 1; i < data.rows() && identical; ++i) {
    identical = data(i, 0) == data(0, 0) && data(i, 1) == data(0, 1);
  }
  if (identical) {
    throw FitError("fit_theta_mle: all observations are identical");
  }

  Eigen::MatrixXd scores = normal_scores(data);
  double sxx = scores.col(0).squaredNorm() + scores.col(1).squaredNorm();
  double sxy = scores.col(0).dot(scores.col(1));
  double n = static_cast<double>(data.rows());
  auto loglik_tau = [&](double tau) {
    double t = clamp_theta(std::sin(std::numbers::pi / 2.0 * tau));
    double r2 = 1.0 - t * t;
    return -0.5 * n * std::log(r2) - (t * t * sxx - 2.0 * t * sxy) / (2.0 * r2);
  };

  const double tau_max =
    2.0 / std::numbers::pi * std::asin(1.0 - theta_margin);
  const int grid = 80;
  int best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= grid; ++k) {
    double tau = -tau_max + 2.0 * tau_max * k / grid;
    double ll = loglik_tau(tau);
    if (ll > best_ll) {
      best_ll = ll;
      best = k;
    }
  }
  double lo = -tau_max + 2.0 * tau_max * std::max(best - 1, 0) / grid;
  double hi = -tau_max + 2.0 * tau_max * std::min(best + 1, grid) / grid;

  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - ratio * (hi - lo);
  double b = lo + ratio * (hi - lo);
  double fa = loglik_tau(a), fb = loglik_tau(b);
  while (hi - lo > 1e-12) {
    if (fa > fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - ratio * (hi - lo);
      fa = loglik_tau(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + ratio * (hi - lo);
      fb = loglik_tau(b);
    }
  }
  double tau = 0.5 * (lo + hi);
  if (loglik_tau(tau) < loglik_tau(0.0)) {
    tau = 0.0;
  }
  double theta = clamp_theta(std::sin(std::numbers::pi / 2.0 * tau));
  return { CopulaFamily::gaussian, theta, theta_to_tau(CopulaFamily::gaussian, theta) };
}

} // namespace gpvine

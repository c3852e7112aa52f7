#pragma once

#include "gpvine/errors.hpp"
#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace gpvine {

//! Hyperparameters of the squared-exponential kernel with a constant offset,
//!   k(a, b) = amplitude * exp(-(a - b)' diag(lengthscales) (a - b)) + noise.
//! Note that `lengthscales` multiply squared distances: larger values mean
//! shorter effective correlation lengths.
struct KernelHyper
{
  Eigen::VectorXd lengthscales;
  double amplitude = 1.0;
  double noise = 0.0;

  void check() const
  {
    if (lengthscales.size() == 0 || (lengthscales.array() <= 0.0).any() ||
        !lengthscales.allFinite()) {
      throw DomainError("KernelHyper: lengthscales must be positive");
    }
    if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
      throw DomainError("KernelHyper: amplitude must be positive");
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) {
      throw DomainError("KernelHyper: noise must be nonnegative");
    }
  }

  Eigen::Index dim() const { return lengthscales.size(); }

  //! Prior variance k(z, z).
  double diag() const { return amplitude + noise; }
};

inline double
kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
       const Eigen::Ref<const Eigen::RowVectorXd>& b,
       const KernelHyper& hyper)
{
  double d2 = ((a - b).array().square() * hyper.lengthscales.transpose().array())
                .sum();
  return hyper.amplitude * std::exp(-d2) + hyper.noise;
}

//! Cross-covariance matrix between the rows of `a` (p x d) and `b` (q x d).
inline Eigen::MatrixXd
kernel_matrix(const Eigen::MatrixXd& a,
              const Eigen::MatrixXd& b,
              const KernelHyper& hyper)
{
  if (a.cols() != b.cols() || a.cols() != hyper.dim()) {
    throw SizeError("kernel_matrix: column counts " + std::to_string(a.cols()) +
                    ", " + std::to_string(b.cols()) + " and " +
                    std::to_string(hyper.dim()) + " lengthscales disagree");
  }
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      k(i, j) = kernel(a.row(i), b.row(j), hyper);
    }
  }
  return k;
}

} // namespace gpvine

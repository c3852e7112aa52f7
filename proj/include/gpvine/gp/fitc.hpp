#pragma once

#include "gpvine/errors.hpp"
#include "gpvine/gp/kernel.hpp"
#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <optional>

namespace gpvine {

//! Sparse GP prior: pseudo-inputs, kernel hyperparameters and a constant
//! prior mean for the latent function.
struct FITCPrior
{
  Eigen::MatrixXd pseudo_inputs;
  KernelHyper hyper;
  double prior_mean = 0.0;

  void check() const
  {
    hyper.check();
    if (pseudo_inputs.rows() < 1) {
      throw DomainError("FITCPrior: need at least one pseudo-input");
    }
    if (pseudo_inputs.cols() != hyper.dim()) {
      throw SizeError("FITCPrior: pseudo-input dimension does not match the "
                      "number of lengthscales");
    }
    if (!std::isfinite(prior_mean)) {
      throw DomainError("FITCPrior: prior mean must be finite");
    }
  }
};

//! Gaussian approximation of p(f | data) evaluated at the training inputs,
//! plus the quantities needed for the EP evidence.
struct LatentPosterior
{
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  //! log |I + K T| for the site precisions T.
  double log_det = 0.0;
  //! nu' Sigma nu' with nu' the site shifts relative to the prior mean.
  double quad = 0.0;
};

//! Diagonal jitter levels tried, in order, when a Gram matrix of
//! pseudo-inputs fails to factorize.
inline constexpr std::array<double, 6> jitter_ladder = { 0.0,  1e-10, 1e-9,
                                                         1e-8, 1e-7,  1e-6 };

//! Cholesky factor of a symmetric matrix with escalating diagonal jitter.
inline Eigen::LLT<Eigen::MatrixXd>
jittered_cholesky(const Eigen::MatrixXd& k, double* used_jitter = nullptr)
{
  const Eigen::Index n = k.rows();
  for (double jitter : jitter_ladder) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success &&
        llt.matrixLLT().diagonal().allFinite() &&
        (llt.matrixLLT().diagonal().array() > 0.0).all()) {
      if (used_jitter) {
        *used_jitter = jitter;
      }
      return llt;
    }
  }
  throw NumericalError("jittered_cholesky: " + std::to_string(n) + " x " +
                       std::to_string(n) +
                       " Gram matrix is not positive definite even with "
                       "1e-6 jitter");
}

//! FITC approximation K' = Q + diag(K - Q), Q = K_nu K_uu^-1 K_un, stored as
//! K' = diag(lambda) + V'V with V = L_u^-1 K_un (n0 x n).
//!
//! All operations cost O(n n0^2).
class FitcCovariance
{
public:
  FitcCovariance(const Eigen::MatrixXd& train, const FITCPrior& prior)
    : hyper_(prior.hyper)
    , pseudo_inputs_(prior.pseudo_inputs)
  {
    prior.check();
    if (train.cols() != prior.pseudo_inputs.cols()) {
      throw SizeError("fitc_covariance: training inputs have " +
                      std::to_string(train.cols()) +
                      " columns, pseudo-inputs have " +
                      std::to_string(prior.pseudo_inputs.cols()));
    }
    chol_uu_ = jittered_cholesky(
      kernel_matrix(prior.pseudo_inputs, prior.pseudo_inputs, hyper_),
      &jitter_);
    v_ = chol_uu_.matrixL().solve(
      kernel_matrix(prior.pseudo_inputs, train, hyper_));
    lambda_ = (hyper_.diag() - v_.colwise().squaredNorm().array())
                .max(0.0)
                .matrix()
                .transpose();
  }

  Eigen::Index size() const { return v_.cols(); }
  const Eigen::MatrixXd& v() const { return v_; }
  const Eigen::VectorXd& lambda() const { return lambda_; }
  const Eigen::LLT<Eigen::MatrixXd>& chol_uu() const { return chol_uu_; }
  const KernelHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& pseudo_inputs() const { return pseudo_inputs_; }
  double jitter() const { return jitter_; }

  //! Dense n x n K'. For tests and small problems only.
  Eigen::MatrixXd dense() const
  {
    Eigen::MatrixXd k = v_.transpose() * v_;
    k.diagonal() += lambda_;
    return k;
  }

  //! log |K'| by the matrix determinant lemma.
  double log_det() const
  {
    Eigen::VectorXd lam = floored_lambda();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(v_.rows(), v_.rows()) +
                        v_ * lam.cwiseInverse().asDiagonal() * v_.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    return lam.array().log().sum() +
           2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }

  //! K'^-1 b by the Woodbury identity.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const
  {
    if (b.size() != size()) {
      throw SizeError("FitcCovariance::solve: size mismatch");
    }
    Eigen::VectorXd lam_inv = floored_lambda().cwiseInverse();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(v_.rows(), v_.rows()) +
                        v_ * lam_inv.asDiagonal() * v_.transpose();
    Eigen::VectorXd lb = lam_inv.cwiseProduct(b);
    Eigen::VectorXd inner = Eigen::LLT<Eigen::MatrixXd>(a).solve(v_ * lb);
    return lb - lam_inv.cwiseProduct(v_.transpose() * inner);
  }

  //! Posterior N(m + Sigma nu', Sigma), Sigma = (K'^-1 + T)^-1, for site
  //! precisions `tau` (possibly negative) and site shifts `nu`.
  //!
  //! With G = I + T Lambda and B = I + V T G^-1 V':
  //!   Sigma = Lambda G^-1 + G^-1 V' B^-1 V G^-1,
  //!   log |I + K' T| = log |G| + log |B|.
  //! Returns nullopt when Sigma would not be positive definite.
  std::optional<LatentPosterior> posterior(double prior_mean,
                                           const Eigen::VectorXd& tau,
                                           const Eigen::VectorXd& nu) const
  {
    Eigen::ArrayXd g = 1.0 + tau.array() * lambda_.array();
    if ((g <= 0.0).any()) {
      return std::nullopt;
    }
    Eigen::MatrixXd vg = v_ * g.inverse().matrix().asDiagonal();
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(v_.rows(), v_.rows()) +
                        vg * tau.asDiagonal() * v_.transpose();
    Eigen::LLT<Eigen::MatrixXd> chol_b(b);
    if (chol_b.info() != Eigen::Success) {
      return std::nullopt;
    }
    LatentPosterior post;
    Eigen::MatrixXd w = chol_b.matrixL().solve(vg);
    post.var = (lambda_.array() / g).matrix() +
               w.colwise().squaredNorm().transpose();
    if (!post.var.allFinite() || (post.var.array() <= 0.0).any()) {
      return std::nullopt;
    }
    Eigen::VectorXd shifted = nu - tau * prior_mean;
    Eigen::VectorXd beta = chol_b.solve(vg * shifted);
    Eigen::VectorXd sigma_nu =
      ((lambda_.array() * shifted.array() + (v_.transpose() * beta).array()) /
       g)
        .matrix();
    post.mean = sigma_nu.array() + prior_mean;
    post.log_det = g.log().sum() +
                   2.0 * chol_b.matrixLLT().diagonal().array().log().sum();
    post.quad = shifted.dot(sigma_nu);
    return post;
  }

private:
  Eigen::VectorXd floored_lambda() const
  {
    return lambda_.array().max(1e-10 * hyper_.diag()).matrix();
  }

  KernelHyper hyper_;
  Eigen::MatrixXd pseudo_inputs_;
  Eigen::LLT<Eigen::MatrixXd> chol_uu_;
  Eigen::MatrixXd v_;
  Eigen::VectorXd lambda_;
  double jitter_ = 0.0;
};

inline FitcCovariance
fitc_covariance(const Eigen::MatrixXd& train, const FITCPrior& prior)
{
  return FitcCovariance(train, prior);
}

//! Full n x n prior covariance. Same posterior interface as FitcCovariance
//! but with O(n^3) dense linear algebra; used for small problems and as the
//! reference the sparse route is checked against.
class DenseCovariance
{
public:
  explicit DenseCovariance(Eigen::MatrixXd k)
    : k_(std::move(k))
  {
    if (k_.rows() != k_.cols()) {
      throw SizeError("DenseCovariance: matrix must be square");
    }
    // smooth kernels on close inputs are numerically singular
    jittered_cholesky(k_, &jitter_);
    k_.diagonal().array() += jitter_;
  }

  DenseCovariance(const Eigen::MatrixXd& train, const KernelHyper& hyper)
    : DenseCovariance(kernel_matrix(train, train, hyper))
  {}

  Eigen::Index size() const { return k_.rows(); }
  const Eigen::MatrixXd& dense() const { return k_; }
  double jitter() const { return jitter_; }

  std::optional<LatentPosterior> posterior(double prior_mean,
                                           const Eigen::VectorXd& tau,
                                           const Eigen::VectorXd& nu) const
  {
    const Eigen::Index n = size();
    // Sigma = (I + K T)^-1 K
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) + k_ * tau.asDiagonal();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    Eigen::VectorXd u_diag = lu.matrixLU().diagonal();
    double sign = lu.permutationP().determinant();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (u_diag(i) == 0.0) {
        return std::nullopt;
      }
      sign *= u_diag(i) < 0.0 ? -1.0 : 1.0;
    }
    if (sign <= 0.0) {
      return std::nullopt;
    }
    Eigen::MatrixXd sigma = lu.solve(k_);
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> check(sigma);
    if (check.info() != Eigen::Success) {
      return std::nullopt;
    }
    LatentPosterior post;
    Eigen::VectorXd shifted = nu - tau * prior_mean;
    Eigen::VectorXd sigma_nu = sigma * shifted;
    post.mean = sigma_nu.array() + prior_mean;
    post.var = sigma.diagonal();
    post.log_det = u_diag.array().abs().log().sum();
    post.quad = shifted.dot(sigma_nu);
    return post;
  }

private:
  Eigen::MatrixXd k_;
  double jitter_ = 0.0;
};

} // namespace gpvine

#pragma once

#include "gpvine/bicop.hpp"
#include "gpvine/errors.hpp"
#include "gpvine/gp/fitc.hpp"
#include "gpvine/stats.hpp"
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

namespace gpvine {

//! Gaussian copula correlation implied by a latent value,
//! tau = 2 Phi(f) - 1, theta = sin(pi tau / 2), clamped away from +-1.
inline double
latent_to_tau(double f)
{
  return 2.0 * stats::normal_cdf(f) - 1.0;
}

inline double
latent_to_theta(double f)
{
  return clamp_theta(std::sin(std::numbers::pi / 2.0 * latent_to_tau(f)));
}

//! Inverse of latent_to_tau.
inline double
tau_to_latent(double tau)
{
  return stats::normal_quantile(0.5 * (tau + 1.0));
}

struct EPConfig
{
  size_t quadrature_nodes = 32;
  //! Fraction of the proposed site change applied per sweep.
  double damping = 0.8;
  double tolerance = 1e-5;
  int max_sweeps = 200;
};

//! Site parameters in natural form: site i contributes
//! exp(-site_tau[i] f_i^2 / 2 + site_nu[i] f_i) to the approximate posterior.
struct EPState
{
  Eigen::VectorXd site_nu;
  Eigen::VectorXd site_tau;
  Eigen::VectorXd posterior_mean;
  Eigen::VectorXd posterior_var;
  double log_evidence = 0.0;
  bool converged = false;
  int sweeps = 0;
};

struct TiltedMoments
{
  double log_z = 0.0;
  double mean = 0.0;
  double var = 1.0;

  bool finite() const
  {
    return std::isfinite(log_z) && std::isfinite(mean) && std::isfinite(var) &&
           var > 0.0;
  }
};

//! Moments of c(u, v | theta(f)) N(f | mean, var) by Gauss-Hermite
//! quadrature; (x, y) are the normal scores of (u, v).
inline TiltedMoments
tilted_moments(CopulaFamily family,
               double x,
               double y,
               double mean,
               double var,
               const stats::GaussHermite& gh)
{
  if (family == CopulaFamily::independent) {
    return { 0.0, mean, var };
  }
  const double sd = std::sqrt(var);
  const auto& nodes = gh.nodes();
  const auto& weights = gh.weights();
  const Eigen::Index k = nodes.size();
  Eigen::ArrayXd logw(k), f(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    f(j) = mean + sd * nodes(j);
    logw(j) = std::log(weights(j)) +
              gaussian_log_pdf_scores(x, y, latent_to_theta(f(j)));
  }
  double top = logw.maxCoeff();
  Eigen::ArrayXd w = (logw - top).exp();
  double s = w.sum();
  TiltedMoments out;
  out.log_z = top + std::log(s);
  w /= s;
  out.mean = (w * f).sum();
  out.var = (w * (f - out.mean).square()).sum();
  return out;
}

namespace detail {

inline double
ep_log_evidence(const Eigen::MatrixXd& scores,
                CopulaFamily family,
                double prior_mean,
                const Eigen::VectorXd& site_tau,
                const Eigen::VectorXd& site_nu,
                const LatentPosterior& post,
                const stats::GaussHermite& gh)
{
  // log Z_EP = sum_i log C_i - log|I + K T| / 2 + nu' Sigma nu' / 2,
  // with C_i the site scale that makes site i times its cavity integrate
  // to the tilted normalizer. Everything runs relative to the prior mean.
  double log_z = -0.5 * post.log_det + 0.5 * post.quad;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double cav_tau = 1.0 / post.var(i) - site_tau(i);
    double cav_nu = post.mean(i) / post.var(i) - site_nu(i);
    if (!(cav_tau > 0.0)) {
      return -std::numeric_limits<double>::infinity();
    }
    auto tilted = tilted_moments(family,
                                 scores(i, 0),
                                 scores(i, 1),
                                 cav_nu / cav_tau,
                                 1.0 / cav_tau,
                                 gh);
    if (!tilted.finite()) {
      return -std::numeric_limits<double>::infinity();
    }
    double cav_nu0 = cav_nu - cav_tau * prior_mean;
    double site_nu0 = site_nu(i) - site_tau(i) * prior_mean;
    double total_tau = cav_tau + site_tau(i);
    double total_nu = cav_nu0 + site_nu0;
    log_z += tilted.log_z - 0.5 * std::log(cav_tau / total_tau) -
             0.5 * total_nu * total_nu / total_tau +
             0.5 * cav_nu0 * cav_nu0 / cav_tau;
  }
  return log_z;
}

} // namespace detail

//! Expectation propagation for the latent GP of a conditional copula.
//!
//! Sites are refined in parallel sweeps: every cavity is taken from the
//! current posterior, the tilted moments are matched by quadrature, and the
//! damped site changes are applied together before the posterior is
//! recomputed. Site precisions may turn negative as long as every cavity and
//! the posterior stay proper; a sweep that would break this is retried with
//! a halved step.
//!
//! @param data n x 2 matrix of pseudo-observations (u, v).
//! @param cov prior covariance at the training inputs (FITC or dense).
template<class Covariance>
EPState
ep_fit(const Eigen::MatrixXd& data,
       CopulaFamily family,
       const Covariance& cov,
       double prior_mean,
       const EPConfig& config = {})
{
  if (data.cols() != 2) {
    throw SizeError("ep_fit: expected an n x 2 matrix of pairs");
  }
  const Eigen::Index n = data.rows();
  if (n < 1) {
    throw SizeError("ep_fit: need at least one observation");
  }
  if (cov.size() != n) {
    throw SizeError("ep_fit: covariance is " + std::to_string(cov.size()) +
                    "-dimensional but there are " + std::to_string(n) +
                    " observations");
  }
  if (!has_density(family)) {
    throw DomainError("ep_fit: the " + family_name(family) +
                      " family has no density implementation");
  }
  const stats::GaussHermite gh(config.quadrature_nodes);
  const Eigen::MatrixXd scores = normal_scores(data);

  EPState state;
  state.site_tau = Eigen::VectorXd::Zero(n);
  state.site_nu = Eigen::VectorXd::Zero(n);
  auto post = cov.posterior(prior_mean, state.site_tau, state.site_nu);
  if (!post) {
    throw NumericalError("ep_fit: prior covariance is not positive definite");
  }

  Eigen::VectorXd new_tau(n), new_nu(n);
  for (state.sweeps = 1; state.sweeps <= config.max_sweeps; ++state.sweeps) {
    new_tau = state.site_tau;
    new_nu = state.site_nu;
    Eigen::Index failures = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double cav_tau = 1.0 / post->var(i) - state.site_tau(i);
      double cav_nu = post->mean(i) / post->var(i) - state.site_nu(i);
      if (!(cav_tau > 0.0)) {
        continue;
      }
      auto tilted = tilted_moments(
        family, scores(i, 0), scores(i, 1), cav_nu / cav_tau, 1.0 / cav_tau, gh);
      if (!tilted.finite()) {
        ++failures;
        continue;
      }
      new_tau(i) = 1.0 / tilted.var - cav_tau;
      new_nu(i) = tilted.mean / tilted.var - cav_nu;
    }
    if (failures == n) {
      throw FitError("ep_fit: quadrature failed for every site");
    }

    double step = config.damping;
    std::optional<LatentPosterior> next;
    Eigen::VectorXd try_tau, try_nu;
    for (int attempt = 0; attempt < 12; ++attempt, step *= 0.5) {
      try_tau = state.site_tau + step * (new_tau - state.site_tau);
      try_nu = state.site_nu + step * (new_nu - state.site_nu);
      next = cov.posterior(prior_mean, try_tau, try_nu);
      if (next) {
        bool cavities_ok = true;
        for (Eigen::Index i = 0; i < n && cavities_ok; ++i) {
          cavities_ok = 1.0 / next->var(i) - try_tau(i) > 0.0;
        }
        if (cavities_ok) {
          break;
        }
        next.reset();
      }
    }
    if (!next) {
      break;
    }
    double change = std::max((try_tau - state.site_tau).cwiseAbs().maxCoeff(),
                             (try_nu - state.site_nu).cwiseAbs().maxCoeff());
    state.site_tau = try_tau;
    state.site_nu = try_nu;
    post = std::move(next);
    if (change < config.tolerance) {
      state.converged = true;
      break;
    }
  }
  state.sweeps = std::min(state.sweeps, config.max_sweeps);
  state.posterior_mean = post->mean;
  state.posterior_var = post->var;
  state.log_evidence = detail::ep_log_evidence(scores,
                                               family,
                                               prior_mean,
                                               state.site_tau,
                                               state.site_nu,
                                               *post,
                                               gh);
  return state;
}

//! EP approximation of log p(D_uv | D_z) stored by ep_fit.
inline double
ep_evidence(const EPState& state)
{
  return state.log_evidence;
}

} // namespace gpvine

#pragma once

#include "gpvine/bicop.hpp"
#include "gpvine/errors.hpp"
#include "gpvine/gp/ep.hpp"
#include "gpvine/gp/fitc.hpp"
#include "gpvine/gp/kernel.hpp"
#include "gpvine/stats.hpp"
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace gpvine {

struct GPConfig
{
  //! Upper bound on the number of pseudo-inputs; n0 = min(pseudo_inputs, n).
  size_t pseudo_inputs = 20;
  EPConfig ep;
  //! Budget of EP fits spent by the hyperparameter search.
  int max_evaluations = 120;
  //! Starting multipliers for all lengthscales (one coordinate search each).
  std::vector<double> lengthscale_starts = { 3.0, 30.0 };
  //! Move pseudo-inputs after the hyperparameters converge.
  bool refine_pseudo_inputs = false;
  std::uint64_t seed = 1;
};

//! Deterministic k-means (k-means++ seeding with a Philox stream, then Lloyd
//! iterations). Returns k distinct rows when the data has k distinct rows.
inline Eigen::MatrixXd
kmeans_centers(const Eigen::MatrixXd& x, Eigen::Index k, std::uint64_t seed)
{
  const Eigen::Index n = x.rows();
  if (k >= n) {
    return x;
  }
  stats::Philox rng(seed, 0x6b6d65616e73ULL);
  Eigen::MatrixXd centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(n)));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      double acc = 0.0;
      for (pick = 0; pick < n - 1; ++pick) {
        acc += d2(pick);
        if (acc >= target && d2(pick) > 0.0) {
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  std::vector<Eigen::Index> label(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool moved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (best != label[i]) {
        label[i] = best;
        moved = true;
      }
    }
    if (!moved) {
      break;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(label[i]) += x.row(i);
      counts(label[i]) += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        centers.row(c) = sums.row(c) / counts(c);
      }
    }
  }
  return centers;
}

//! Fitted conditional copula with tau(z) = 2 Phi(f(z)) - 1 and a sparse GP
//! posterior over f. Immutable once built; predictions are thread-safe.
class GPConditionalCopula
{
public:
  GPConditionalCopula() = default;

  //! Rebuilds the predictive factorization from stored parts. Fitting and
  //! deserialization both go through here, so predictions of a reloaded
  //! model are bit-identical.
  GPConditionalCopula(CopulaFamily family,
                      FITCPrior prior,
                      Eigen::MatrixXd training_inputs,
                      EPState ep,
                      size_t quadrature_nodes = 32)
    : family_(family)
    , prior_(std::move(prior))
    , training_inputs_(std::move(training_inputs))
    , ep_(std::move(ep))
    , gh_(quadrature_nodes)
  {
    if (!has_density(family_)) {
      throw DomainError("GPConditionalCopula: the " + family_name(family_) +
                        " family has no density implementation");
    }
    FitcCovariance cov(training_inputs_, prior_);
    if (ep_.site_tau.size() != cov.size() || ep_.site_nu.size() != cov.size()) {
      throw SizeError("GPConditionalCopula: site count does not match the "
                      "training inputs");
    }
    Eigen::ArrayXd g = 1.0 + ep_.site_tau.array() * cov.lambda().array();
    Eigen::MatrixXd vg = cov.v() * g.inverse().matrix().asDiagonal();
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(cov.v().rows(), cov.v().rows()) +
                        vg * ep_.site_tau.asDiagonal() * cov.v().transpose();
    chol_b_ = Eigen::LLT<Eigen::MatrixXd>(b);
    if (chol_b_.info() != Eigen::Success || (g <= 0.0).any()) {
      throw NumericalError("GPConditionalCopula: EP sites give an improper "
                           "posterior");
    }
    Eigen::VectorXd shifted = ep_.site_nu - ep_.site_tau * prior_.prior_mean;
    beta_ = chol_b_.solve(vg * shifted);
    chol_uu_ = cov.chol_uu();
  }

  CopulaFamily family() const { return family_; }
  const FITCPrior& prior() const { return prior_; }
  const EPState& ep() const { return ep_; }
  const Eigen::MatrixXd& training_inputs() const { return training_inputs_; }
  size_t quadrature_nodes() const { return gh_.size(); }
  Eigen::Index input_dim() const { return prior_.pseudo_inputs.cols(); }

  //! Gaussian predictive (mean, variance) of the latent f at z.
  std::pair<double, double> predict_latent(
    const Eigen::Ref<const Eigen::RowVectorXd>& z) const
  {
    if (z.size() != input_dim()) {
      throw SizeError("predict: conditioning point has " +
                      std::to_string(z.size()) + " coordinates, model expects " +
                      std::to_string(input_dim()));
    }
    Eigen::VectorXd k(prior_.pseudo_inputs.rows());
    for (Eigen::Index j = 0; j < k.size(); ++j) {
      k(j) = kernel(prior_.pseudo_inputs.row(j), z, prior_.hyper);
    }
    Eigen::VectorXd q = chol_uu_.matrixL().solve(k);
    double mean = prior_.prior_mean + q.dot(beta_);
    Eigen::VectorXd bq = chol_b_.matrixL().solve(q);
    double var = prior_.hyper.diag() - q.squaredNorm() + bq.squaredNorm();
    return { mean, std::max(var, 0.0) };
  }

  //! Predictive mean and standard deviation of tau(z) = 2 Phi(f(z)) - 1.
  std::pair<double, double> predict_tau(
    const Eigen::Ref<const Eigen::RowVectorXd>& z) const
  {
    if (family_ == CopulaFamily::independent) {
      return { 0.0, 0.0 };
    }
    auto [m, v] = predict_latent(z);
    double sd = std::sqrt(v);
    double mean = gh_.expectation(latent_to_tau, m, sd);
    double second = gh_.expectation(
      [](double f) {
        double t = latent_to_tau(f);
        return t * t;
      },
      m,
      sd);
    return { mean, std::sqrt(std::max(second - mean * mean, 0.0)) };
  }

  //! Posterior-mean Gaussian correlation at z, used for h-functions.
  double theta_at(const Eigen::Ref<const Eigen::RowVectorXd>& z) const
  {
    if (family_ == CopulaFamily::independent) {
      return 0.0;
    }
    return clamp_theta(tau_to_theta(
      CopulaFamily::gaussian, std::clamp(predict_tau(z).first, -1.0, 1.0)));
  }

  //! log of the predictive copula density, integrating over f(z).
  //! (x, y) are normal scores.
  double log_density_scores(double x,
                            double y,
                            const Eigen::Ref<const Eigen::RowVectorXd>& z) const
  {
    if (family_ == CopulaFamily::independent) {
      return 0.0;
    }
    auto [m, v] = predict_latent(z);
    double sd = std::sqrt(v);
    const auto& nodes = gh_.nodes();
    const auto& weights = gh_.weights();
    Eigen::ArrayXd logw(nodes.size());
    for (Eigen::Index k = 0; k < nodes.size(); ++k) {
      logw(k) = std::log(weights(k)) +
                gaussian_log_pdf_scores(x, y, latent_to_theta(m + sd * nodes(k)));
    }
    double top = logw.maxCoeff();
    return top + std::log((logw - top).exp().sum());
  }

  //! Predictive copula density p(u, v | z).
  double predict_density(double u,
                         double v,
                         const Eigen::Ref<const Eigen::RowVectorXd>& z) const
  {
    detail::check_unit(u, "predict_density");
    detail::check_unit(v, "predict_density");
    return std::exp(log_density_scores(
      stats::normal_quantile(u), stats::normal_quantile(v), z));
  }

private:
  CopulaFamily family_ = CopulaFamily::independent;
  FITCPrior prior_;
  Eigen::MatrixXd training_inputs_;
  EPState ep_;
  stats::GaussHermite gh_;
  Eigen::LLT<Eigen::MatrixXd> chol_uu_;
  Eigen::LLT<Eigen::MatrixXd> chol_b_;
  Eigen::VectorXd beta_;
};

struct HyperOptResult
{
  FITCPrior prior;
  double log_evidence = -std::numeric_limits<double>::infinity();
  double initial_log_evidence = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
  //! Set when no candidate, the initial one included, gave a converged EP.
  bool warning = false;
};

namespace detail {

inline double
evidence_or_ninf(const Eigen::MatrixXd& data,
                 const Eigen::MatrixXd& inputs,
                 CopulaFamily family,
                 const FITCPrior& prior,
                 const EPConfig& config)
{
  try {
    FitcCovariance cov(inputs, prior);
    EPState st = ep_fit(data, family, cov, prior.prior_mean, config);
    if (!st.converged || !std::isfinite(st.log_evidence)) {
      return -std::numeric_limits<double>::infinity();
    }
    return st.log_evidence;
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

// Log-scale box for (lengthscales..., amplitude, noise).
inline std::pair<double, double>
log_bounds(Eigen::Index coord, Eigen::Index dim)
{
  if (coord < dim) {
    return { std::log(1e-3), std::log(1e4) };
  }
  if (coord == dim) {
    return { std::log(1e-4), std::log(1e2) };
  }
  return { std::log(1e-6), std::log(1e1) };
}

inline Eigen::VectorXd
pack(const KernelHyper& h)
{
  Eigen::Index d = h.dim();
  Eigen::VectorXd p(d + 2);
  p.head(d) = h.lengthscales.array().log().matrix();
  p(d) = std::log(h.amplitude);
  p(d + 1) = std::log(std::max(h.noise, 1e-6));
  return p;
}

inline KernelHyper
unpack(const Eigen::VectorXd& p)
{
  Eigen::Index d = p.size() - 2;
  KernelHyper h;
  h.lengthscales = p.head(d).array().exp().matrix();
  h.amplitude = std::exp(p(d));
  h.noise = std::exp(p(d + 1));
  return h;
}

} // namespace detail

//! Maximizes the EP evidence over log-hyperparameters by multi-start
//! coordinate search. A candidate is accepted only if its EP run converges
//! and it improves the evidence, so the result never scores below `initial`.
inline HyperOptResult
optimize_hyperparameters(const Eigen::MatrixXd& data,
                         const Eigen::MatrixXd& inputs,
                         CopulaFamily family,
                         const FITCPrior& initial,
                         const GPConfig& config = {})
{
  initial.check();
  HyperOptResult out;
  out.prior = initial;
  auto evaluate = [&](const FITCPrior& p) {
    ++out.evaluations;
    return detail::evidence_or_ninf(data, inputs, family, p, config.ep);
  };
  out.initial_log_evidence = evaluate(initial);
  out.log_evidence = out.initial_log_evidence;
  if (family == CopulaFamily::independent) {
    return out;
  }

  const Eigen::Index d = initial.hyper.dim();
  std::vector<Eigen::VectorXd> starts = { detail::pack(initial.hyper) };
  for (double mult : config.lengthscale_starts) {
    Eigen::VectorXd s = starts.front();
    s.head(d).array() += std::log(mult);
    starts.push_back(s);
  }
  const int per_start = std::max(
    1, config.max_evaluations / static_cast<int>(starts.size()));

  for (size_t s = 0; s < starts.size(); ++s) {
    Eigen::VectorXd current = starts[s];
    FITCPrior cand = initial;
    cand.hyper = detail::unpack(current);
    double current_ev = s == 0 ? out.initial_log_evidence : evaluate(cand);
    int budget = per_start - 1;
    double step = 1.0;
    while (step >= 0.1 && budget > 0) {
      bool improved = false;
      for (Eigen::Index c = 0; c < current.size() && budget > 0; ++c) {
        auto [lo, hi] = detail::log_bounds(c, d);
        for (double dir : { 1.0, -1.0 }) {
          if (budget <= 0) {
            break;
          }
          Eigen::VectorXd trial = current;
          trial(c) = std::clamp(trial(c) + dir * step, lo, hi);
          if (trial(c) == current(c)) {
            continue;
          }
          cand.hyper = detail::unpack(trial);
          --budget;
          double ev = evaluate(cand);
          if (ev > current_ev + 1e-9) {
            current = trial;
            current_ev = ev;
            improved = true;
            break;
          }
        }
      }
      if (!improved) {
        step *= 0.5;
      }
    }
    if (current_ev > out.log_evidence) {
      out.log_evidence = current_ev;
      out.prior.hyper = detail::unpack(current);
    }
  }

  if (config.refine_pseudo_inputs && std::isfinite(out.log_evidence)) {
    const double step = 0.05;
    FITCPrior cand = out.prior;
    for (Eigen::Index r = 0; r < cand.pseudo_inputs.rows(); ++r) {
      for (Eigen::Index c = 0; c < cand.pseudo_inputs.cols(); ++c) {
        for (double dir : { 1.0, -1.0 }) {
          FITCPrior trial = out.prior;
          trial.pseudo_inputs(r, c) += dir * step;
          double ev = evaluate(trial);
          if (ev > out.log_evidence + 1e-9) {
            out.log_evidence = ev;
            out.prior = trial;
            break;
          }
        }
      }
    }
  }

  out.warning = !std::isfinite(out.log_evidence);
  return out;
}

//! Prior mean Phi^-1((tau_mle + 1) / 2) of the unconditional Gaussian fit.
inline double
default_prior_mean(const Eigen::MatrixXd& data)
{
  double tau = fit_theta_mle(data).tau;
  return tau_to_latent(std::clamp(tau, -0.999999, 0.999999));
}

//! Initial prior: k-means pseudo-inputs, unit amplitude, small offset.
inline FITCPrior
initial_prior(const Eigen::MatrixXd& data,
              const Eigen::MatrixXd& inputs,
              const GPConfig& config = {})
{
  FITCPrior prior;
  Eigen::Index n0 = std::min<Eigen::Index>(
    static_cast<Eigen::Index>(config.pseudo_inputs), inputs.rows());
  prior.pseudo_inputs = kmeans_centers(inputs, n0, config.seed);
  prior.hyper.lengthscales = Eigen::VectorXd::Constant(inputs.cols(), 1.0);
  prior.hyper.amplitude = 1.0;
  prior.hyper.noise = 0.01;
  prior.prior_mean = default_prior_mean(data);
  return prior;
}

//! Full conditional-copula fit: initial prior, evidence maximization, final
//! EP run.
//!
//! @param data n x 2 pseudo-observations (u, v).
//! @param inputs n x d conditioning values z.
inline GPConditionalCopula
fit_gp_copula(const Eigen::MatrixXd& data,
              const Eigen::MatrixXd& inputs,
              CopulaFamily family = CopulaFamily::gaussian,
              const GPConfig& config = {})
{
  if (data.rows() != inputs.rows()) {
    throw SizeError("fit_gp_copula: " + std::to_string(data.rows()) +
                    " pairs but " + std::to_string(inputs.rows()) +
                    " conditioning rows");
  }
  if (inputs.cols() < 1) {
    throw SizeError("fit_gp_copula: need at least one conditioning variable");
  }
  FITCPrior prior = initial_prior(data, inputs, config);
  HyperOptResult opt =
    optimize_hyperparameters(data, inputs, family, prior, config);
  FitcCovariance cov(inputs, opt.prior);
  EPState st = ep_fit(data, family, cov, opt.prior.prior_mean, config.ep);
  return GPConditionalCopula(
    family, opt.prior, inputs, std::move(st), config.ep.quadrature_nodes);
}

} // namespace gpvine

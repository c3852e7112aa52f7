#pragma once

#include "gpvine/bicop.hpp"
#include "gpvine/empirics.hpp"
#include "gpvine/errors.hpp"
#include "gpvine/gp/ep.hpp"
#include "gpvine/stats.hpp"
#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace gpvine {

//! Epanechnikov kernel k_h(x) = 3/(4h) max(0, 1 - (x/h)^2).
inline double
epanechnikov(double x, double h)
{
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw DomainError("epanechnikov: bandwidth must be positive, got " +
                      std::to_string(h));
  }
  double r = x / h;
  return r * r >= 1.0 ? 0.0 : 0.75 / h * (1.0 - r * r);
}

//! 30 log-spaced bandwidths from 0.05 to 10.
inline std::vector<double>
default_bandwidth_grid()
{
  std::vector<double> grid(30);
  const double lo = std::log(0.05), hi = std::log(10.0);
  for (size_t k = 0; k < grid.size(); ++k) {
    grid[k] = std::exp(lo + (hi - lo) * static_cast<double>(k) / 29.0);
  }
  return grid;
}

namespace detail {

struct NelderMeadResult
{
  std::array<double, 2> x{};
  double value = std::numeric_limits<double>::infinity();
  bool converged = false;
};

// Minimizes f over R^2.
template<class F>
NelderMeadResult
nelder_mead_2d(F&& f,
               std::array<double, 2> start,
               std::array<double, 2> scale,
               int max_iter = 500)
{
  using Point = std::array<double, 2>;
  std::array<Point, 3> p = { start, start, start };
  p[1][0] += scale[0];
  p[2][1] += scale[1];
  std::array<double, 3> fv = { f(p[0]), f(p[1]), f(p[2]) };
  auto combo = [](const Point& a, const Point& b, double t) {
    return Point{ a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]) };
  };
  NelderMeadResult out;
  for (int iter = 0; iter < max_iter; ++iter) {
    // order best, middle, worst
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2 - i; ++j) {
        if (fv[j + 1] < fv[j]) {
          std::swap(fv[j], fv[j + 1]);
          std::swap(p[j], p[j + 1]);
        }
      }
    }
    double size = std::max(std::hypot(p[1][0] - p[0][0], p[1][1] - p[0][1]),
                           std::hypot(p[2][0] - p[0][0], p[2][1] - p[0][1]));
    if (std::abs(fv[2] - fv[0]) < 1e-12 * (1.0 + std::abs(fv[0])) &&
        size < 1e-7) {
      out.converged = true;
      break;
    }
    Point centroid{ 0.5 * (p[0][0] + p[1][0]), 0.5 * (p[0][1] + p[1][1]) };
    Point refl = combo(centroid, p[2], -1.0);
    double fr = f(refl);
    if (fr < fv[0]) {
      Point exp = combo(centroid, p[2], -2.0);
      double fe = f(exp);
      if (fe < fr) {
        p[2] = exp;
        fv[2] = fe;
      } else {
        p[2] = refl;
        fv[2] = fr;
      }
    } else if (fr < fv[1]) {
      p[2] = refl;
      fv[2] = fr;
    } else {
      bool outside = fr < fv[2];
      Point con = combo(centroid, outside ? refl : p[2], 0.5);
      double fc = f(con);
      if (fc < std::min(fr, fv[2])) {
        p[2] = con;
        fv[2] = fc;
      } else {
        for (int i = 1; i < 3; ++i) {
          p[i] = combo(p[0], p[i], 0.5);
          fv[i] = f(p[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (fv[i] < fv[best]) {
      best = i;
    }
  }
  out.x = p[best];
  out.value = fv[best];
  return out;
}

} // namespace detail

//! Result of one local-likelihood fit at a conditioning value.
struct LocalFit
{
  double intercept = 0.0;
  double slope = 0.0;
  double objective = -std::numeric_limits<double>::infinity();
  Eigen::Index window = 0;
};

//! Maximum local likelihood estimate of a conditional Gaussian copula with a
//! single scalar conditioning variable: f(z) is approximated locally by
//! b0 + b1 (z - z_i) and tau(z) = 2 Phi(b0) - 1.
class MLLModel
{
public:
  MLLModel() = default;

  MLLModel(Eigen::MatrixXd pairs,
           Eigen::VectorXd inputs,
           double bandwidth,
           CopulaFamily family = CopulaFamily::gaussian)
    : pairs_(std::move(pairs))
    , inputs_(std::move(inputs))
    , bandwidth_(bandwidth)
    , family_(family)
  {
    if (pairs_.cols() != 2 || pairs_.rows() != inputs_.size()) {
      throw SizeError("MLLModel: need n x 2 pairs and n scalar inputs");
    }
    if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) {
      throw DomainError("MLLModel: bandwidth must be positive");
    }
    if (!has_density(family_)) {
      throw DomainError("MLLModel: the " + family_name(family_) +
                        " family has no density implementation");
    }
    scores_ = normal_scores(pairs_);
  }

  double bandwidth() const { return bandwidth_; }
  CopulaFamily family() const { return family_; }
  const Eigen::MatrixXd& pairs() const { return pairs_; }
  const Eigen::VectorXd& inputs() const { return inputs_; }

  //! Local fit at z. `exclude` drops one training point (leave-one-out).
  LocalFit local_fit(double z, Eigen::Index exclude = -1) const
  {
    return local_fit(z, exclude, bandwidth_);
  }

  LocalFit local_fit(double z, Eigen::Index exclude, double bandwidth) const
  {
    if (family_ == CopulaFamily::independent) {
      return { 0.0, 0.0, 0.0, inputs_.size() };
    }
    std::vector<Eigen::Index> idx;
    std::vector<double> w;
    for (Eigen::Index i = 0; i < inputs_.size(); ++i) {
      if (i == exclude) {
        continue;
      }
      double k = epanechnikov(z - inputs_(i), bandwidth);
      if (k > 0.0) {
        idx.push_back(i);
        w.push_back(k);
      }
    }
    if (idx.size() < 2) {
      throw WindowError("mll_estimate: only " + std::to_string(idx.size()) +
                        " observation(s) within bandwidth " +
                        std::to_string(bandwidth) + " of z = " +
                        std::to_string(z));
    }
    auto negloglik = [&](const std::array<double, 2>& b) {
      double s = 0.0;
      for (size_t k = 0; k < idx.size(); ++k) {
        Eigen::Index i = idx[k];
        double theta = latent_to_theta(b[0] + b[1] * (z - inputs_(i)));
        s += w[k] * gaussian_log_pdf_scores(scores_(i, 0), scores_(i, 1), theta);
      }
      return std::isfinite(s) ? -s : std::numeric_limits<double>::infinity();
    };

    Eigen::VectorXd wu(idx.size()), wv(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {
      wu(k) = pairs_(idx[k], 0);
      wv(k) = pairs_(idx[k], 1);
    }
    double tau0 = std::clamp(kendall_tau(wu, wv), -0.99, 0.99);
    std::array<double, 2> scale = { 0.5, 0.5 / bandwidth };
    auto best = detail::nelder_mead_2d(negloglik, { tau_to_latent(tau0), 0.0 }, scale);
    if (!best.converged || !std::isfinite(best.value)) {
      for (double b0 : { -1.0, 0.0, 1.0 }) {
        auto r = detail::nelder_mead_2d(negloglik, { b0, 0.0 }, scale);
        if (r.value < best.value) {
          best = r;
        }
      }
    }
    // Newton polish on the analytic gradient; Nelder-Mead alone stops at
    // ~sqrt(eps) accuracy in the coefficients
    auto gradient = [&](const std::array<double, 2>& b) {
      std::array<double, 2> g = { 0.0, 0.0 };
      for (size_t k = 0; k < idx.size(); ++k) {
        Eigen::Index i = idx[k];
        double d = z - inputs_(i);
        double f = b[0] + b[1] * d;
        double a = std::numbers::pi / 2.0 * latent_to_tau(f);
        double t = std::sin(a);
        if (std::abs(t) >= 1.0 - theta_margin) {
          continue;
        }
        double x = scores_(i, 0), y = scores_(i, 1);
        double r2 = 1.0 - t * t, ss = x * x + y * y;
        double q = t * t * ss - 2.0 * t * x * y;
        double dl = t / r2 - ((t * ss - x * y) * r2 + t * q) / (r2 * r2);
        double dt = std::cos(a) * std::numbers::pi * stats::normal_pdf(f);
        g[0] += w[k] * dl * dt;
        g[1] += w[k] * dl * dt * d;
      }
      return g;
    };
    std::array<double, 2> b = best.x;
    double value = best.value;
    const std::array<double, 2> eps = { 1e-5, 1e-5 / bandwidth };
    for (int iter = 0; iter < 8; ++iter) {
      auto g = gradient(b);
      double hm[2][2];
      for (int j = 0; j < 2; ++j) {
        auto up = b, dn = b;
        up[j] += eps[j];
        dn[j] -= eps[j];
        auto gu = gradient(up), gd = gradient(dn);
        hm[0][j] = (gu[0] - gd[0]) / (2.0 * eps[j]);
        hm[1][j] = (gu[1] - gd[1]) / (2.0 * eps[j]);
      }
      double h01 = 0.5 * (hm[0][1] + hm[1][0]);
      double det = hm[0][0] * hm[1][1] - h01 * h01;
      if (!(hm[0][0] < 0.0) || !(det > 0.0) || !std::isfinite(det)) {
        break;
      }
      std::array<double, 2> step = { (hm[1][1] * g[0] - h01 * g[1]) / det,
                                     (hm[0][0] * g[1] - h01 * g[0]) / det };
      if (std::abs(step[0]) > 0.1 || std::abs(step[1]) > 0.1 / bandwidth) {
        break;
      }
      std::array<double, 2> next = { b[0] - step[0], b[1] - step[1] };
      double nv = negloglik(next);
      if (!(nv <= value + 1e-12 * (1.0 + std::abs(value)))) {
        break;
      }
      b = next;
      value = std::min(value, nv);
      if (std::abs(step[0]) < 1e-15 && std::abs(step[1]) * bandwidth < 1e-15) {
        break;
      }
    }
    return { b[0], b[1], -negloglik(b), static_cast<Eigen::Index>(idx.size()) };
  }

  //! Local-likelihood objective at z for given coefficients.
  double local_objective(double z, double b0, double b1) const
  {
    double s = 0.0;
    for (Eigen::Index i = 0; i < inputs_.size(); ++i) {
      double k = epanechnikov(z - inputs_(i), bandwidth_);
      if (k > 0.0) {
        double theta = latent_to_theta(b0 + b1 * (z - inputs_(i)));
        s += k * gaussian_log_pdf_scores(scores_(i, 0), scores_(i, 1), theta);
      }
    }
    return s;
  }

  //! Local fit for prediction: when fewer than two training inputs fall in
  //! the window at z, the bandwidth is doubled until two do.
  LocalFit predict_fit(double z) const
  {
    if (inputs_.size() < 2) {
      throw WindowError("mll_estimate: fewer than two training points");
    }
    double h = bandwidth_;
    while (true) {
      try {
        return local_fit(z, -1, h);
      } catch (const WindowError&) {
        h *= 2.0;
      }
    }
  }

  //! Gaussian correlation implied by the local intercept at z.
  double theta_at(double z) const
  {
    if (family_ == CopulaFamily::independent) {
      return 0.0;
    }
    return latent_to_theta(predict_fit(z).intercept);
  }

private:
  Eigen::MatrixXd pairs_;
  Eigen::MatrixXd scores_;
  Eigen::VectorXd inputs_;
  double bandwidth_ = 1.0;
  CopulaFamily family_ = CopulaFamily::gaussian;
};

//! Estimate of the latent f(z), the intercept b0 of the local fit.
inline double
mll_estimate(const MLLModel& model, double z)
{
  return model.local_fit(z).intercept;
}

//! Leave-one-out predictive log-likelihood of a bandwidth; -inf when some
//! held-out point has fewer than two neighbours in its window.
inline double
loo_score(const Eigen::MatrixXd& pairs, const Eigen::VectorXd& inputs, double h)
{
  MLLModel model(pairs, inputs, h);
  Eigen::MatrixXd scores = normal_scores(pairs);
  double total = 0.0;
  for (Eigen::Index i = 0; i < inputs.size(); ++i) {
    try {
      double f = model.local_fit(inputs(i), i).intercept;
      total += gaussian_log_pdf_scores(scores(i, 0), scores(i, 1), latent_to_theta(f));
    } catch (const WindowError&) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  return total;
}

//! Grid bandwidth with the best leave-one-out log-likelihood.
inline double
loo_bandwidth(const Eigen::MatrixXd& pairs,
              const Eigen::VectorXd& inputs,
              const std::vector<double>& grid = default_bandwidth_grid())
{
  if (grid.empty()) {
    throw DomainError("loo_bandwidth: empty bandwidth grid");
  }
  if (grid.size() == 1) {
    return grid.front();
  }
  double best_h = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  std::string failing;
  for (double h : grid) {
    double s = loo_score(pairs, inputs, h);
    if (!std::isfinite(s)) {
      failing += (failing.empty() ? "" : ", ") + std::to_string(h);
      continue;
    }
    if (s > best) {
      best = s;
      best_h = h;
    }
  }
  if (!std::isfinite(best)) {
    throw FitError("loo_bandwidth: every bandwidth leaves some point with an "
                   "empty window (" + failing + ")");
  }
  return best_h;
}

//! Bandwidth selection followed by model construction.
inline MLLModel
fit_mll(const Eigen::MatrixXd& pairs,
        const Eigen::VectorXd& inputs,
        const std::vector<double>& grid = default_bandwidth_grid())
{
  return MLLModel(pairs, inputs, loo_bandwidth(pairs, inputs, grid));
}

} // namespace gpvine

#pragma once

#include "gpvine/errors.hpp"
#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

namespace gpvine {

namespace stats {

inline constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934;

//! Standard normal density.
inline double
normal_pdf(double x)
{
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double
normal_log_pdf(double x)
{
  return -0.5 * x * x - 0.918938533204672741780329736406;
}

//! Standard normal cdf, accurate to a few ulp in both tails.
inline double
normal_cdf(double x)
{
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

namespace detail {

// Wichura's AS241 (PPND16), relative accuracy about 1e-16.
inline double
ppnd16(double p)
{
  double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    double num =
      (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
            67265.770927008700853) * r + 45921.953931549871457) * r +
          13731.693765509461125) * r + 1971.5909503065514427) * r +
        133.14166789178437745) * r + 3.387132872796366608);
    double den =
      (((((((5226.495278852545925 * r + 28729.085735721942674) * r +
            39307.89580009271061) * r + 21213.794301586595867) * r +
          5394.1960214247511077) * r + 687.1870074920579083) * r +
        42.313330701600911252) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    double num =
      (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
            0.24178072517745061177) * r + 1.27045825245236838258) * r +
          3.64784832476320460504) * r + 5.7694972214606914055) * r +
        4.6303378461565452959) * r + 1.42343711074968357734);
    double den =
      (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
            0.0151986665636164571966) * r + 0.14810397642748007459) * r +
          0.68976733498510000455) * r + 1.6763848301838038494) * r +
        2.05319162663775882187) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    double num =
      (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
            0.0012426609473880784386) * r + 0.026532189526576123093) * r +
          0.29656057182850489123) * r + 1.7848265399172913358) * r +
        5.4637849111641143699) * r + 6.6579046435011037772);
    double den =
      (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
            1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
          0.0148753612908506148525) * r + 0.13692988092273580531) * r +
        0.59983220655588793769) * r + 1.0);
    val = num / den;
  }
  return q < 0 ? -val : val;
}

} // namespace detail

//! Standard normal quantile: rational approximation followed by one Newton
//! step. The step is taken on the tail closest to `p` so that it does not
//! lose precision for p near one.
inline double
normal_quantile(double p)
{
  if (!(p > 0.0 && p < 1.0)) {
    throw BoundaryError("normal_quantile: argument must lie in (0, 1), got " +
                        std::to_string(p));
  }
  double x = detail::ppnd16(p);
  double dens = normal_pdf(x);
  if (dens > 0.0) {
    if (p <= 0.5) {
      x -= (normal_cdf(x) - p) / dens;
    } else {
      x += (normal_cdf(-x) - (1.0 - p)) / dens;
    }
  }
  return x;
}

//! Gauss-Hermite rule for expectations under N(0, 1):
//! E[f(X)] ~ sum_k weights[k] * f(nodes[k]).
//! Nodes and weights come from the Golub-Welsch eigenproblem.
class GaussHermite
{
public:
  explicit GaussHermite(size_t n = 32)
  {
    if (n == 0) {
      throw DomainError("GaussHermite: need at least one node");
    }
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (size_t k = 1; k < n; ++k) {
      jacobi(k - 1, k) = jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    nodes_ = es.eigenvalues();
    weights_ = es.eigenvectors().row(0).transpose().array().square();
    weights_ /= weights_.sum();
    // exact symmetry keeps odd moments at zero
    for (size_t k = 0; k < n / 2; ++k) {
      double x = 0.5 * (nodes_(n - 1 - k) - nodes_(k));
      double w = 0.5 * (weights_(n - 1 - k) + weights_(k));
      nodes_(k) = -x;
      nodes_(n - 1 - k) = x;
      weights_(k) = weights_(n - 1 - k) = w;
    }
    if (n % 2 == 1) {
      nodes_(n / 2) = 0.0;
    }
  }

  size_t size() const { return static_cast<size_t>(nodes_.size()); }
  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }

  //! E[f(mean + sd * X)] for X ~ N(0, 1).
  template<class F>
  double expectation(F&& f, double mean = 0.0, double sd = 1.0) const
  {
    double s = 0.0;
    for (Eigen::Index k = 0; k < nodes_.size(); ++k) {
      s += weights_(k) * f(mean + sd * nodes_(k));
    }
    return s;
  }

private:
  Eigen::VectorXd nodes_;
  Eigen::VectorXd weights_;
};

//! Philox4x32-10 counter-based generator (Salmon et al., Random123).
//! A (seed, stream) pair fixes the key; draws walk a 128-bit counter, so
//! sequences are identical on every platform.
class Philox
{
public:
  using result_type = std::uint32_t;

  explicit Philox(std::uint64_t seed = 0, std::uint64_t stream = 0)
  {
    key_ = { static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32) };
    counter_ = { 0u, 0u, static_cast<std::uint32_t>(stream),
                 static_cast<std::uint32_t>(stream >> 32) };
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max()
  {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()()
  {
    if (pos_ == 4) {
      block_ = generate(counter_, key_);
      increment();
      pos_ = 0;
    }
    return block_[pos_++];
  }

  //! Uniform draw in the open interval (0, 1) with 53 bits of resolution.
  double uniform()
  {
    std::uint64_t a = (*this)() >> 5;
    std::uint64_t b = (*this)() >> 6;
    return (static_cast<double>((a << 26) | b) + 0.5) * 0x1.0p-53;
  }

  //! Standard normal draw by inversion.
  double normal() { return normal_quantile(uniform()); }

  //! Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n)
  {
    if (n <= 1) {
      return 0;
    }
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % n;
    while (true) {
      std::uint64_t x =
        (static_cast<std::uint64_t>((*this)()) << 32) | (*this)();
      if (x < limit) {
        return x % n;
      }
    }
  }

  //! Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> generate(
    std::array<std::uint32_t, 4> ctr,
    std::array<std::uint32_t, 2> key)
  {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += w0;
        key[1] += w1;
      }
      std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
      ctr = { static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
              static_cast<std::uint32_t>(p1),
              static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
              static_cast<std::uint32_t>(p0) };
    }
    return ctr;
  }

private:
  void increment()
  {
    if (++counter_[0] == 0 && ++counter_[1] == 0) {
      // the upper half carries the stream id; wrapping 2^64 blocks is moot
      ++counter_[2];
    }
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;
};

//! Sample mean and (n-1)-denominator standard deviation.
inline std::pair<double, double>
mean_sd(const Eigen::VectorXd& x)
{
  if (x.size() == 0) {
    return { 0.0, 0.0 };
  }
  double m = x.mean();
  if (x.size() < 2) {
    return { m, 0.0 };
  }
  double ss = (x.array() - m).square().sum();
  return { m, std::sqrt(ss / static_cast<double>(x.size() - 1)) };
}

} // namespace stats

} // namespace gpvine

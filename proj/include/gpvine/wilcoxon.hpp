#pragma once

#include "gpvine/empirics.hpp"
#include "gpvine/errors.hpp"
#include "gpvine/stats.hpp"
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

namespace gpvine {

struct WilcoxonResult
{
  //! Sum of ranks of the positive differences.
  double statistic = 0.0;
  //! Two-sided p-value.
  double p_value = 1.0;
  //! Number of non-zero differences.
  Eigen::Index n = 0;
  bool exact = true;
};

//! Paired Wilcoxon signed-rank test of x - y. Zero differences are dropped and
//! tied magnitudes get average ranks. Uses the exact permutation distribution
//! up to 25 non-zero differences, the tie-corrected normal approximation with
//! continuity correction above. All-zero differences give p = 1.
inline WilcoxonResult
wilcoxon_signed_rank(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
  if (x.size() != y.size()) {
    throw SizeError("wilcoxon: samples must be paired");
  }
  std::vector<double> diffs;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double d = x(i) - y(i);
    if (d != 0.0) {
      diffs.push_back(d);
    }
  }
  WilcoxonResult out;
  out.n = static_cast<Eigen::Index>(diffs.size());
  if (diffs.empty()) {
    return out;
  }
  Eigen::VectorXd mag(out.n);
  for (Eigen::Index i = 0; i < out.n; ++i) {
    mag(i) = std::abs(diffs[i]);
  }
  Eigen::VectorXd ranks = average_ranks(mag);
  for (Eigen::Index i = 0; i < out.n; ++i) {
    if (diffs[i] > 0.0) {
      out.statistic += ranks(i);
    }
  }
  const double nn = static_cast<double>(out.n);
  const double mean = nn * (nn + 1.0) / 4.0;

  if (out.n <= 25) {
    // counts over doubled rank sums (average ranks are multiples of 1/2)
    std::vector<long> r2(out.n);
    long total = 0;
    for (Eigen::Index i = 0; i < out.n; ++i) {
      r2[i] = std::lround(2.0 * ranks(i));
      total += r2[i];
    }
    std::vector<double> counts(static_cast<size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long r : r2) {
      for (long s = reach; s >= 0; --s) {
        counts[s + r] += counts[s];
      }
      reach += r;
    }
    const double all = std::ldexp(1.0, static_cast<int>(out.n));
    long w2 = std::lround(2.0 * out.statistic);
    double lower = 0.0, upper = 0.0;
    for (long s = 0; s <= total; ++s) {
      if (s <= w2) {
        lower += counts[s];
      }
      if (s >= w2) {
        upper += counts[s];
      }
    }
    out.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    out.exact = true;
    return out;
  }

  double tie_term = 0.0;
  std::vector<double> sorted(ranks.data(), ranks.data() + out.n);
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size();) {
    size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) {
      ++j;
    }
    double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) {
    return out;
  }
  double dev = std::max(0.0, std::abs(out.statistic - mean) - 0.5);
  out.p_value = std::min(1.0, 2.0 * stats::normal_cdf(-dev / std::sqrt(var)));
  out.exact = false;
  return out;
}

} // namespace gpvine

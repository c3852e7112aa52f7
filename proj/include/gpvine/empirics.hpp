#pragma once

#include "gpvine/errors.hpp"
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace gpvine {

//! Observations mapped to (0, 1)^d by the empirical probability integral
//! transform.
struct PseudoSample
{
  Eigen::MatrixXd values;
  std::vector<std::string> column_names;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

//! Average ranks (1-based) of x; tied entries share the mean of their ranks.
inline Eigen::VectorXd
average_ranks(const Eigen::VectorXd& x)
{
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return x(a) < x(b);
  });
  Eigen::VectorXd ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x(order[j + 1]) == x(order[i])) {
      ++j;
    }
    double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) {
      ranks(order[k]) = r;
    }
    i = j + 1;
  }
  return ranks;
}

//! Rank / (n + 1) transform, column by column.
inline PseudoSample
pseudo_observations(const Eigen::MatrixXd& raw,
                    std::vector<std::string> column_names = {})
{
  if (raw.rows() < 2) {
    throw SizeError("pseudo_observations: need at least two rows, got " +
                    std::to_string(raw.rows()));
  }
  if (column_names.empty()) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      column_names.push_back("V" + std::to_string(j + 1));
    }
  }
  if (static_cast<Eigen::Index>(column_names.size()) != raw.cols()) {
    throw SizeError("pseudo_observations: column name count mismatch");
  }
  PseudoSample out;
  out.values.resize(raw.rows(), raw.cols());
  const double denom = static_cast<double>(raw.rows() + 1);
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    out.values.col(j) = average_ranks(raw.col(j)) / denom;
  }
  out.column_names = std::move(column_names);
  return out;
}

namespace detail {

// Sorts v[lo, hi) and returns the number of strict inversions (pairs i < j
// with v[i] > v[j]); equal values are not counted.
inline std::int64_t
merge_count(std::vector<double>& v,
            std::vector<double>& buf,
            size_t lo,
            size_t hi)
{
  if (hi - lo < 2) {
    return 0;
  }
  size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) {
    buf[k++] = v[i++];
  }
  while (j < hi) {
    buf[k++] = v[j++];
  }
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return swaps;
}

inline std::int64_t
tied_pairs(const std::vector<double>& sorted)
{
  std::int64_t total = 0;
  for (size_t i = 0; i < sorted.size();) {
    size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) {
      ++j;
    }
    std::int64_t t = static_cast<std::int64_t>(j - i + 1);
    total += t * (t - 1) / 2;
    i = j + 1;
  }
  return total;
}

} // namespace detail

//! Kendall's tau-b in O(n log n) (Knight's merge-sort algorithm).
//! Returns 0 when either vector is constant.
inline double
kendall_tau(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
  if (x.size() != y.size()) {
    throw SizeError("kendall_tau: vectors of different lengths (" +
                    std::to_string(x.size()) + " vs " +
                    std::to_string(y.size()) + ")");
  }
  const size_t n = static_cast<size_t>(x.size());
  if (n < 2) {
    throw SizeError("kendall_tau: need at least two observations");
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return x(a) < x(b) || (x(a) == x(b) && y(a) < y(b));
  });

  std::vector<double> xs(n), ys(n);
  for (size_t i = 0; i < n; ++i) {
    xs[i] = x(order[i]);
    ys[i] = y(order[i]);
  }
  std::int64_t ties_x = detail::tied_pairs(xs);
  std::int64_t ties_xy = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && xs[j + 1] == xs[i] && ys[j + 1] == ys[i]) {
      ++j;
    }
    std::int64_t t = static_cast<std::int64_t>(j - i + 1);
    ties_xy += t * (t - 1) / 2;
    i = j + 1;
  }
  std::vector<double> buf(n);
  std::int64_t swaps = detail::merge_count(ys, buf, 0, n);
  std::int64_t ties_y = detail::tied_pairs(ys);

  const std::int64_t pairs = static_cast<std::int64_t>(n) * (n - 1) / 2;
  std::int64_t s = pairs - ties_x - ties_y + ties_xy - 2 * swaps;
  // equal tie counts (in particular none) give an exact integer denominator
  double denom = ties_x == ties_y
                   ? static_cast<double>(pairs - ties_x)
                   : std::sqrt(static_cast<double>(pairs - ties_x)) *
                       std::sqrt(static_cast<double>(pairs - ties_y));
  if (denom == 0.0) {
    return 0.0;
  }
  return std::clamp(static_cast<double>(s) / denom, -1.0, 1.0);
}

} // namespace gpvine

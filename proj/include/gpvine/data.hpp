#pragma once

#include "gpvine/errors.hpp"
#include "gpvine/stats.hpp"
#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace gpvine {

struct RawDataset
{
  Eigen::MatrixXd values;
  std::vector<std::string> column_names;
  std::string source;
  //! Rows dropped during ingestion because of missing or non-numeric cells.
  size_t dropped_rows = 0;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

//! Synthetic benchmark: Z ~ U[-6, 6] and (X, Y) | Z standard bivariate normal
//! with correlation 0.75 sin(Z). Columns are X, Y, Z.
inline RawDataset
synth_sample(size_t n, std::uint64_t seed)
{
  stats::Philox rng(seed, 0);
  RawDataset out;
  out.values.resize(static_cast<Eigen::Index>(n), 3);
  out.column_names = { "X", "Y", "Z" };
  out.source = "synthetic(seed=" + std::to_string(seed) + ")";
  for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
    double z = -6.0 + 12.0 * rng.uniform();
    double x = rng.normal();
    double e = rng.normal();
    double rho = 0.75 * std::sin(z);
    out.values(i, 0) = x;
    out.values(i, 1) = rho * x + std::sqrt(1.0 - rho * rho) * e;
    out.values(i, 2) = z;
  }
  return out;
}

namespace detail {

inline std::string
trim(const std::string& s)
{
  size_t b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) {
    return "";
  }
  size_t e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string>
split_csv_line(const std::string& line)
{
  std::vector<std::string> cells;
  size_t pos = 0;
  while (true) {
    size_t next = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, next == std::string::npos ? next : next - pos)));
    if (next == std::string::npos) {
      break;
    }
    pos = next + 1;
  }
  return cells;
}

inline bool
parse_double(const std::string& s, double& out)
{
  if (s.empty()) {
    return false;
  }
  const char* first = s.data();
  if (*first == '+') {
    ++first;
  }
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

} // namespace detail

//! Reads a comma-separated file with one header row. Rows holding missing,
//! non-numeric or non-finite cells are dropped and counted.
inline RawDataset
load_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open '" + path + "'");
  }
  std::string line;
  size_t line_no = 0;
  RawDataset out;
  out.source = path;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      break;
    }
  }
  if (line_no == 0 || detail::trim(line).empty()) {
    throw ParseError(path + ": empty file");
  }
  out.column_names = detail::split_csv_line(line);
  const size_t d = out.column_names.size();

  std::vector<double> buffer;
  std::vector<double> row(d);
  size_t n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) {
      continue;
    }
    auto cells = detail::split_csv_line(line);
    if (cells.size() != d) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(d) + " fields, found " +
                       std::to_string(cells.size()));
    }
    bool ok = true;
    for (size_t j = 0; j < d && ok; ++j) {
      ok = detail::parse_double(cells[j], row[j]);
    }
    if (!ok) {
      ++out.dropped_rows;
      continue;
    }
    buffer.insert(buffer.end(), row.begin(), row.end());
    ++n;
  }
  if (n == 0) {
    throw ParseError(path + ": no numeric data rows");
  }
  out.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
    buffer.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  return out;
}

inline void
write_csv(const RawDataset& data, std::ostream& out)
{
  for (size_t j = 0; j < data.column_names.size(); ++j) {
    out << (j ? "," : "") << data.column_names[j];
  }
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof(buf), data.values(i, j));
      out << (j ? "," : "") << std::string(buf, res.ptr);
    }
    out << '\n';
  }
}

struct SplitSpec
{
  std::uint64_t seed = 1;
  double fraction = 0.5;
  std::uint64_t replicate = 0;
};

//! Row indices of a random partition; train size is round(fraction * n).
inline std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
split_indices(Eigen::Index n, const SplitSpec& spec)
{
  if (n < 4) {
    throw SizeError("split: need at least 4 rows, got " + std::to_string(n));
  }
  if (!(spec.fraction > 0.0 && spec.fraction < 1.0)) {
    throw DomainError("split: fraction must lie in (0, 1)");
  }
  std::vector<Eigen::Index> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index(0));
  stats::Philox rng(spec.seed, 0x73706c6974ULL + spec.replicate);
  for (size_t i = perm.size() - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.below(i + 1)]);
  }
  auto n_train = static_cast<size_t>(std::llround(spec.fraction * static_cast<double>(n)));
  n_train = std::clamp<size_t>(n_train, 1, perm.size() - 1);
  std::vector<Eigen::Index> train(perm.begin(), perm.begin() + n_train);
  std::vector<Eigen::Index> test(perm.begin() + n_train, perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return { train, test };
}

inline RawDataset
select_rows(const RawDataset& data, const std::vector<Eigen::Index>& rows)
{
  RawDataset out;
  out.column_names = data.column_names;
  out.source = data.source;
  out.values = data.values(rows, Eigen::all);
  return out;
}

//! Disjoint train/test partition, deterministic in (seed, replicate).
inline std::pair<RawDataset, RawDataset>
split(const RawDataset& data, const SplitSpec& spec = {})
{
  auto [train, test] = split_indices(data.rows(), spec);
  return { select_rows(data, train), select_rows(data, test) };
}

} // namespace gpvine

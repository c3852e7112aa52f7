#pragma once

#include "gpvine/bicop.hpp"
#include "gpvine/errors.hpp"
#include "gpvine/gp/gp_copula.hpp"
#include "gpvine/mll.hpp"
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace gpvine {

//! The bivariate building block attached to a vine edge.
//!
//! Arguments are ordered (u_{a|D}, u_{b|D}) with a < b the conditioned
//! indices of the edge. Conditional copulas are evaluated at the edge's
//! conditioning values z = (u_i : i in D).
struct BivariateCopulaSpec
{
  enum class Kind
  {
    unfitted,
    independent,
    constant,
    gp_conditional,
    mll_conditional
  };

  Kind kind = Kind::unfitted;
  double theta = 0.0;
  std::shared_ptr<const GPConditionalCopula> gp;
  std::shared_ptr<const MLLModel> mll;

  static BivariateCopulaSpec independent()
  {
    return { Kind::independent, 0.0, nullptr, nullptr };
  }
  static BivariateCopulaSpec constant(double theta)
  {
    if (!(std::abs(theta) < 1.0)) {
      throw DomainError("constant copula: |theta| must be < 1");
    }
    return { Kind::constant, theta, nullptr, nullptr };
  }
  static BivariateCopulaSpec conditional(GPConditionalCopula model)
  {
    return { Kind::gp_conditional,
             0.0,
             std::make_shared<const GPConditionalCopula>(std::move(model)),
             nullptr };
  }
  static BivariateCopulaSpec conditional(MLLModel model)
  {
    return { Kind::mll_conditional,
             0.0,
             nullptr,
             std::make_shared<const MLLModel>(std::move(model)) };
  }

  bool is_conditional() const
  {
    return kind == Kind::gp_conditional || kind == Kind::mll_conditional;
  }

  //! Correlation used by h-functions at conditioning value z: the constant
  //! theta, the posterior-mean tau of a GP edge, or the local MLL intercept.
  double theta_at(const Eigen::Ref<const Eigen::RowVectorXd>& z) const
  {
    switch (kind) {
      case Kind::unfitted:
        throw StateError("copula edge has not been fitted");
      case Kind::independent:
        return 0.0;
      case Kind::constant:
        return theta;
      case Kind::gp_conditional:
        return gp->theta_at(z);
      case Kind::mll_conditional:
        return mll->theta_at(z(0));
    }
    return 0.0;
  }

  //! log c(u, v | z) from normal scores (x, y).
  double log_density_scores(double x,
                            double y,
                            const Eigen::Ref<const Eigen::RowVectorXd>& z) const
  {
    switch (kind) {
      case Kind::unfitted:
        throw StateError("copula edge has not been fitted");
      case Kind::independent:
        return 0.0;
      case Kind::constant:
        return gaussian_log_pdf_scores(x, y, theta);
      case Kind::gp_conditional:
        return gp->log_density_scores(x, y, z);
      case Kind::mll_conditional:
        return gaussian_log_pdf_scores(x, y, mll->theta_at(z(0)));
    }
    return 0.0;
  }
};

//! One edge of an R-vine tree, with 0-based variable indices.
struct VineEdge
{
  //! Conditioned set C(e) = {a, b}, a < b.
  std::array<size_t, 2> conditioned{};
  //! Conditioning set D(e), sorted.
  std::vector<size_t> conditioning;
  //! Constraint set N(e) = C(e) u D(e), sorted.
  std::vector<size_t> constraint;
  //! Tree level, starting at 1.
  size_t level = 1;
  //! Level 1: the two variables. Deeper levels: indices of the joined edges
  //! in the previous tree.
  std::array<size_t, 2> parents{};
  BivariateCopulaSpec copula;

  //! Training log-likelihood of the fitted copula.
  double train_loglik = 0.0;
  bool ep_converged = true;

  //! Label such as "1,2|3" with 1-based indices.
  std::string label() const
  {
    std::string s = std::to_string(conditioned[0] + 1) + "," +
                     std::to_string(conditioned[1] + 1);
    if (!conditioning.empty()) {
      s += "|";
      for (size_t k = 0; k < conditioning.size(); ++k) {
        s += (k ? "," : "") + std::to_string(conditioning[k] + 1);
      }
    }
    return s;
  }
};

struct RVineStructure
{
  size_t dimension = 0;
  //! trees[i] holds the edges of tree i + 1.
  std::vector<std::vector<VineEdge>> trees;

  size_t truncation_level() const { return trees.size(); }

  size_t edge_count() const
  {
    size_t c = 0;
    for (const auto& t : trees) {
      c += t.size();
    }
    return c;
  }

  //! Finds an edge by its label ("2,4|1,3", 1-based; order of the
  //! conditioned pair and of the conditioning set does not matter).
  std::pair<size_t, size_t> find(const std::string& label) const;
};

namespace detail {

inline std::vector<size_t>
parse_index_list(const std::string& s)
{
  std::vector<size_t> out;
  size_t pos = 0;
  while (pos < s.size()) {
    size_t next = s.find(',', pos);
    std::string tok = s.substr(pos, next == std::string::npos ? next : next - pos);
    if (tok.empty()) {
      throw DomainError("malformed edge label '" + s + "'");
    }
    size_t used = 0;
    long v = std::stol(tok, &used);
    if (used != tok.size() || v < 1) {
      throw DomainError("malformed edge label '" + s + "'");
    }
    out.push_back(static_cast<size_t>(v - 1));
    if (next == std::string::npos) {
      break;
    }
    pos = next + 1;
  }
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace detail

inline std::pair<size_t, size_t>
RVineStructure::find(const std::string& label) const
{
  std::string cpart = label, dpart;
  if (auto bar = label.find('|'); bar != std::string::npos) {
    cpart = label.substr(0, bar);
    dpart = label.substr(bar + 1);
  }
  std::vector<size_t> c, d;
  try {
    c = detail::parse_index_list(cpart);
    d = dpart.empty() ? std::vector<size_t>{} : detail::parse_index_list(dpart);
  } catch (const std::logic_error&) {
    throw DomainError("malformed edge label '" + label + "'");
  }
  if (c.size() != 2) {
    throw DomainError("edge label '" + label +
                      "' must name exactly two conditioned variables");
  }
  for (size_t t = 0; t < trees.size(); ++t) {
    for (size_t e = 0; e < trees[t].size(); ++e) {
      const auto& edge = trees[t][e];
      if (edge.conditioned[0] == c[0] && edge.conditioned[1] == c[1] &&
          edge.conditioning == d) {
        return { t, e };
      }
    }
  }
  throw DomainError("no edge '" + label + "' in the vine");
}

//! Candidate edge of the graph G_i joining two nodes of tree i.
struct CandidateEdge
{
  size_t a = 0;
  size_t b = 0;
  VineEdge edge;
  double weight = 0.0;
};

//! Maximum spanning tree by Prim's algorithm on nodes 0..n_nodes-1. Ties
//! are broken by the lexicographically smallest sorted conditioned set, then
//! conditioning set, then node pair. Returns indices into `candidates`.
inline std::vector<size_t>
prim_max_spanning_tree(size_t n_nodes, const std::vector<CandidateEdge>& candidates)
{
  std::vector<size_t> chosen;
  if (n_nodes <= 1) {
    return chosen;
  }
  auto better = [&](size_t i, size_t j) {
    const auto& x = candidates[i];
    const auto& y = candidates[j];
    if (x.weight != y.weight) {
      return x.weight > y.weight;
    }
    if (x.edge.conditioned != y.edge.conditioned) {
      return x.edge.conditioned < y.edge.conditioned;
    }
    if (x.edge.conditioning != y.edge.conditioning) {
      return x.edge.conditioning < y.edge.conditioning;
    }
    return std::make_pair(x.a, x.b) < std::make_pair(y.a, y.b);
  };
  std::vector<bool> in_tree(n_nodes, false);
  in_tree[0] = true;
  for (size_t step = 1; step < n_nodes; ++step) {
    size_t best = candidates.size();
    for (size_t i = 0; i < candidates.size(); ++i) {
      const auto& c = candidates[i];
      if (in_tree[c.a] != in_tree[c.b] && (best == candidates.size() || better(i, best))) {
        best = i;
      }
    }
    if (best == candidates.size()) {
      throw StateError("prim_max_spanning_tree: candidate graph is "
                       "disconnected (internal error)");
    }
    in_tree[candidates[best].a] = true;
    in_tree[candidates[best].b] = true;
    chosen.push_back(best);
  }
  return chosen;
}

} // namespace gpvine

#pragma once

#include "gpvine/bicop.hpp"
#include "gpvine/empirics.hpp"
#include "gpvine/errors.hpp"
#include "gpvine/gp/gp_copula.hpp"
#include "gpvine/mll.hpp"
#include "gpvine/stats.hpp"
#include "gpvine/vine/structure.hpp"
#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace gpvine {

enum class Estimator
{
  svine,
  gpvine,
  mllvine
};

inline std::string
estimator_name(Estimator e)
{
  switch (e) {
    case Estimator::svine:
      return "svine";
    case Estimator::gpvine:
      return "gpvine";
    case Estimator::mllvine:
      return "mllvine";
  }
  return "unknown";
}

inline Estimator
estimator_from_name(const std::string& name)
{
  for (auto e : { Estimator::svine, Estimator::gpvine, Estimator::mllvine }) {
    if (estimator_name(e) == name) {
      return e;
    }
  }
  throw DomainError("unknown estimator '" + name +
                    "' (expected svine, gpvine or mllvine)");
}

//! h-function outputs are kept this far from 0 and 1.
inline constexpr double h_clamp = 1e-10;

struct VineConfig
{
  GPConfig gp;
  std::vector<double> bandwidth_grid = default_bandwidth_grid();
  //! Replaces the |Kendall's tau| edge weight when set (e.g. to force a
  //! particular structure).
  std::function<double(const VineEdge&)> edge_weight;
  //! Optional fixed first tree, as pairs of 0-based variable indices.
  std::vector<std::pair<size_t, size_t>> first_tree;
};

struct VineModel
{
  RVineStructure structure;
  Estimator estimator = Estimator::svine;
  std::vector<std::string> column_names;

  size_t dim() const { return structure.dimension; }
};

//! Conditional pseudo-observations P(u_cond | u_given, z) for one edge.
//! For conditional copulas the per-point correlation comes from the
//! conditioning row z_i (posterior-mean tau for GP edges).
inline Eigen::VectorXd
h_propagate(const BivariateCopulaSpec& copula,
            const Eigen::VectorXd& u_cond,
            const Eigen::VectorXd& u_given,
            const Eigen::MatrixXd& z = Eigen::MatrixXd())
{
  if (u_cond.size() != u_given.size()) {
    throw SizeError("h_propagate: argument lengths differ");
  }
  if (copula.kind == BivariateCopulaSpec::Kind::unfitted) {
    throw StateError("h_propagate: parent copula has not been fitted");
  }
  if (copula.is_conditional() && z.rows() != u_cond.size()) {
    throw SizeError("h_propagate: conditional copula needs one conditioning "
                    "row per observation");
  }
  const Eigen::Index n = u_cond.size();
  Eigen::VectorXd out(n);
  if (copula.kind == BivariateCopulaSpec::Kind::independent) {
    out = u_cond;
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      double theta = copula.is_conditional() ? copula.theta_at(z.row(i))
                                             : copula.theta;
      if (theta == 0.0) {
        out(i) = u_cond(i);
      } else {
        out(i) = gaussian_h(u_cond(i), u_given(i), theta);
      }
    }
  }
  return out.array().max(h_clamp).min(1.0 - h_clamp).matrix();
}

namespace detail {

// Conditional pseudo-observations carried by a node of the current tree:
// values[k] = P(u_vars[k] | rest of the node's constraint set).
struct NodeValues
{
  std::array<size_t, 2> vars{};
  std::array<Eigen::VectorXd, 2> values;

  const Eigen::VectorXd& of(size_t var) const
  {
    if (vars[0] == var) {
      return values[0];
    }
    if (vars[1] == var) {
      return values[1];
    }
    throw StateError("vine: variable is not conditioned at its parent edge "
                     "(internal error)");
  }
};

inline std::vector<size_t>
set_union(const std::vector<size_t>& a, const std::vector<size_t>& b)
{
  std::vector<size_t> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<size_t>
set_intersection(const std::vector<size_t>& a, const std::vector<size_t>& b)
{
  std::vector<size_t> out;
  std::set_intersection(
    a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<size_t>
set_symmetric_difference(const std::vector<size_t>& a, const std::vector<size_t>& b)
{
  std::vector<size_t> out;
  std::set_symmetric_difference(
    a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<NodeValues>
first_level_nodes(const Eigen::MatrixXd& u)
{
  std::vector<NodeValues> nodes(u.cols());
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    auto v = static_cast<size_t>(j);
    nodes[j].vars = { v, v };
    nodes[j].values = { u.col(j), u.col(j) };
  }
  return nodes;
}

inline Eigen::MatrixXd
conditioning_values(const Eigen::MatrixXd& u, const std::vector<size_t>& d)
{
  Eigen::MatrixXd z(u.rows(), d.size());
  for (size_t k = 0; k < d.size(); ++k) {
    z.col(k) = u.col(d[k]);
  }
  return z;
}

// All admissible edges of G_level. Level-1 nodes are variables; deeper nodes
// are the previous tree's edges, joined only if they share a node.
inline std::vector<CandidateEdge>
candidate_edges(size_t level, size_t dim, const std::vector<VineEdge>& prev)
{
  std::vector<CandidateEdge> out;
  if (level == 1) {
    for (size_t j = 0; j < dim; ++j) {
      for (size_t k = j + 1; k < dim; ++k) {
        CandidateEdge c;
        c.a = j;
        c.b = k;
        c.edge.conditioned = { j, k };
        c.edge.constraint = { j, k };
        c.edge.level = 1;
        c.edge.parents = { j, k };
        out.push_back(std::move(c));
      }
    }
    return out;
  }
  for (size_t p = 0; p < prev.size(); ++p) {
    for (size_t q = p + 1; q < prev.size(); ++q) {
      const auto& e1 = prev[p];
      const auto& e2 = prev[q];
      bool adjacent = e1.parents[0] == e2.parents[0] ||
                      e1.parents[0] == e2.parents[1] ||
                      e1.parents[1] == e2.parents[0] ||
                      e1.parents[1] == e2.parents[1];
      if (!adjacent) {
        continue;
      }
      auto cset = set_symmetric_difference(e1.constraint, e2.constraint);
      if (cset.size() != 2) {
        continue;
      }
      CandidateEdge c;
      c.a = p;
      c.b = q;
      c.edge.conditioned = { cset[0], cset[1] };
      c.edge.conditioning = set_intersection(e1.constraint, e2.constraint);
      c.edge.constraint = set_union(e1.constraint, e2.constraint);
      c.edge.level = level;
      c.edge.parents = { p, q };
      out.push_back(std::move(c));
    }
  }
  return out;
}

// Arguments (u_{a|D}, u_{b|D}) of an edge from its two parent nodes.
inline Eigen::MatrixXd
edge_arguments(const VineEdge& edge, const std::vector<NodeValues>& nodes)
{
  const auto& n1 = nodes[edge.parents[0]];
  const auto& n2 = nodes[edge.parents[1]];
  auto pick = [&](size_t var) -> const Eigen::VectorXd& {
    if (n1.vars[0] == var || n1.vars[1] == var) {
      return n1.of(var);
    }
    return n2.of(var);
  };
  Eigen::MatrixXd args(n1.values[0].size(), 2);
  args.col(0) = pick(edge.conditioned[0]);
  args.col(1) = pick(edge.conditioned[1]);
  return args;
}

inline NodeValues
edge_outputs(const VineEdge& edge, const Eigen::MatrixXd& args, const Eigen::MatrixXd& z)
{
  NodeValues out;
  out.vars = edge.conditioned;
  out.values[0] = h_propagate(edge.copula, args.col(0), args.col(1), z);
  out.values[1] = h_propagate(edge.copula, args.col(1), args.col(0), z);
  return out;
}

inline double
edge_log_density(const BivariateCopulaSpec& copula,
                 double x,
                 double y,
                 const Eigen::Ref<const Eigen::RowVectorXd>& z)
{
  return copula.log_density_scores(x, y, z);
}

inline Eigen::VectorXd
edge_log_densities(const BivariateCopulaSpec& copula,
                   const Eigen::MatrixXd& args,
                   const Eigen::MatrixXd& z)
{
  Eigen::VectorXd out(args.rows());
  if (copula.kind == BivariateCopulaSpec::Kind::independent) {
    out.setZero();
    return out;
  }
  Eigen::MatrixXd scores = normal_scores(args);
  Eigen::RowVectorXd empty(0);
  for (Eigen::Index i = 0; i < args.rows(); ++i) {
    if (z.cols() > 0) {
      out(i) = edge_log_density(copula, scores(i, 0), scores(i, 1), z.row(i));
    } else {
      out(i) = edge_log_density(copula, scores(i, 0), scores(i, 1), empty);
    }
  }
  return out;
}

inline BivariateCopulaSpec
fit_edge(const VineEdge& edge,
         const Eigen::MatrixXd& args,
         const Eigen::MatrixXd& z,
         Estimator estimator,
         const VineConfig& config,
         std::uint64_t edge_seed)
{
  if (edge.level == 1 || estimator == Estimator::svine) {
    return BivariateCopulaSpec::constant(fit_theta_mle(args).theta);
  }
  if (estimator == Estimator::gpvine) {
    GPConfig gp = config.gp;
    gp.seed = edge_seed;
    return BivariateCopulaSpec::conditional(
      fit_gp_copula(args, z, CopulaFamily::gaussian, gp));
  }
  if (z.cols() != 1) {
    throw DomainError("mllvine handles a single conditioning variable only");
  }
  return BivariateCopulaSpec::conditional(
    fit_mll(args, z.col(0), config.bandwidth_grid));
}

} // namespace detail

//! Learns the vine tree by tree and fits one copula per edge.
//!
//! Each tree is the maximum spanning tree (Prim) of its admissible graph
//! weighted by |Kendall's tau| of the current conditional pseudo-observations.
//! Level-1 edges are always unconditional Gaussian copulas. Deeper edges are
//! fitted by the estimator: constant MLE (svine), GP conditional copula on
//! the conditioning columns of `sample` (gpvine), or local likelihood with a
//! single conditioning column (mllvine).
inline VineModel
fit(const PseudoSample& sample,
    Estimator estimator,
    size_t max_trees,
    const VineConfig& config = {})
{
  const Eigen::MatrixXd& u = sample.values;
  const size_t d = static_cast<size_t>(u.cols());
  if (d < 2) {
    throw SizeError("vine fit: need at least two variables");
  }
  if (max_trees < 1 || max_trees > d - 1) {
    throw DomainError("vine fit: number of trees must lie in [1, " +
                      std::to_string(d - 1) + "], got " +
                      std::to_string(max_trees));
  }
  if (estimator == Estimator::mllvine && max_trees > 2) {
    throw DomainError("mllvine conditions on a single variable and supports "
                      "at most 2 trees");
  }
  if (u.rows() < 2) {
    throw SizeError("vine fit: need at least two observations");
  }

  VineModel model;
  model.estimator = estimator;
  model.column_names = sample.column_names;
  model.structure.dimension = d;

  auto nodes = detail::first_level_nodes(u);
  for (size_t level = 1; level <= max_trees; ++level) {
    const std::vector<VineEdge> empty;
    const auto& prev = level == 1 ? empty : model.structure.trees.back();
    auto candidates = detail::candidate_edges(level, d, prev);
    for (auto& c : candidates) {
      if (level == 1 && !config.first_tree.empty()) {
        bool forced = false;
        for (auto [a, b] : config.first_tree) {
          forced = forced || (std::min(a, b) == c.edge.conditioned[0] &&
                              std::max(a, b) == c.edge.conditioned[1]);
        }
        c.weight = forced ? 1.0 : 0.0;
      } else if (config.edge_weight) {
        c.weight = config.edge_weight(c.edge);
      } else {
        Eigen::MatrixXd args = detail::edge_arguments(c.edge, nodes);
        c.weight = std::abs(kendall_tau(args.col(0), args.col(1)));
      }
    }
    auto chosen = prim_max_spanning_tree(level == 1 ? d : prev.size(), candidates);
    if (level == 1 && !config.first_tree.empty()) {
      for (size_t i : chosen) {
        if (candidates[i].weight != 1.0) {
          throw DomainError("first_tree does not form a spanning tree");
        }
      }
    }

    std::vector<VineEdge> tree;
    std::vector<detail::NodeValues> next_nodes;
    for (size_t i : chosen) {
      VineEdge edge = candidates[i].edge;
      Eigen::MatrixXd args = detail::edge_arguments(edge, nodes);
      Eigen::MatrixXd z = detail::conditioning_values(u, edge.conditioning);
      try {
        edge.copula = detail::fit_edge(edge,
                                       args,
                                       z,
                                       estimator,
                                       config,
                                       config.gp.seed * 1000003ULL +
                                         level * 1009ULL + tree.size());
      } catch (const Error& e) {
        throw FitError("edge " + edge.label() + ": " + e.what());
      }
      edge.train_loglik = detail::edge_log_densities(edge.copula, args, z).sum();
      if (edge.copula.kind == BivariateCopulaSpec::Kind::gp_conditional) {
        edge.ep_converged = edge.copula.gp->ep().converged;
      }
      next_nodes.push_back(detail::edge_outputs(edge, args, z));
      tree.push_back(std::move(edge));
    }
    model.structure.trees.push_back(std::move(tree));
    nodes = std::move(next_nodes);
  }
  return model;
}

//! Tree selection with simplified (constant) copulas.
inline RVineStructure
build_structure(const PseudoSample& sample,
                size_t max_trees,
                const VineConfig& config = {})
{
  return fit(sample, Estimator::svine, max_trees, config).structure;
}

//! Per-point log-density contributions of each tree, n x (number of trees).
//! Conditional pseudo-observations of the new points are recomputed through
//! the fitted hierarchy.
inline Eigen::MatrixXd
log_density_by_tree(const VineModel& model, const Eigen::MatrixXd& points)
{
  if (static_cast<size_t>(points.cols()) != model.dim()) {
    throw SizeError("log_density: points have " +
                    std::to_string(points.cols()) +
                    " columns, model dimension is " +
                    std::to_string(model.dim()));
  }
  if ((points.array() <= 0.0).any() || (points.array() >= 1.0).any()) {
    throw BoundaryError("log_density: points must lie strictly inside (0, 1)");
  }
  const auto& trees = model.structure.trees;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.rows(), trees.size());
  auto nodes = detail::first_level_nodes(points);
  for (size_t t = 0; t < trees.size(); ++t) {
    std::vector<detail::NodeValues> next_nodes;
    for (const auto& edge : trees[t]) {
      Eigen::MatrixXd args = detail::edge_arguments(edge, nodes);
      Eigen::MatrixXd z = detail::conditioning_values(points, edge.conditioning);
      out.col(t) += detail::edge_log_densities(edge.copula, args, z);
      if (t + 1 < trees.size()) {
        next_nodes.push_back(detail::edge_outputs(edge, args, z));
      }
    }
    nodes = std::move(next_nodes);
  }
  return out;
}

//! Per-point vine copula log-density; trees beyond `max_trees` count as
//! independence copulas.
inline Eigen::VectorXd
log_density(const VineModel& model,
            const Eigen::MatrixXd& points,
            size_t max_trees = std::numeric_limits<size_t>::max())
{
  Eigen::MatrixXd by_tree = log_density_by_tree(model, points);
  Eigen::Index keep = std::min<Eigen::Index>(
    by_tree.cols(), static_cast<Eigen::Index>(std::min<size_t>(max_trees, by_tree.cols())));
  return by_tree.leftCols(keep).rowwise().sum();
}

inline Eigen::VectorXd
log_density(const VineModel& model, const PseudoSample& points)
{
  return log_density(model, points.values);
}

//! Mean and standard deviation of the per-point log-densities.
inline std::pair<double, double>
evaluate(const VineModel& model, const PseudoSample& test)
{
  return stats::mean_sd(log_density(model, test));
}

//! Posterior tau over a grid of conditioning points for a GP edge.
//! Rows of the result are (z..., tau_mean, tau_sd).
inline Eigen::MatrixXd
tau_surface(const VineModel& model, const std::string& edge_label, const Eigen::MatrixXd& grid)
{
  auto [t, e] = model.structure.find(edge_label);
  const auto& copula = model.structure.trees[t][e].copula;
  if (copula.kind != BivariateCopulaSpec::Kind::gp_conditional) {
    throw StateError("tau_surface: edge " + edge_label +
                     " does not carry a GP conditional copula");
  }
  if (grid.cols() != copula.gp->input_dim()) {
    throw SizeError("tau_surface: grid has " + std::to_string(grid.cols()) +
                    " columns, edge conditions on " +
                    std::to_string(copula.gp->input_dim()) + " variables");
  }
  Eigen::MatrixXd out(grid.rows(), grid.cols() + 2);
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    auto [mean, sd] = copula.gp->predict_tau(grid.row(i));
    out.row(i) << grid.row(i), mean, sd;
  }
  return out;
}

} // namespace gpvine

#include "gpvine/vine/vine.hpp"
#include "gpvine/data.hpp"
#include "helpers.hpp"
#include <gtest/gtest.h>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

using namespace gpvine;
using testing_helpers::gaussian_copula_log_density;
using testing_helpers::gaussian_copula_sample;

namespace {

PseudoSample
as_sample(Eigen::MatrixXd u)
{
  PseudoSample s;
  s.values = std::move(u);
  for (Eigen::Index j = 0; j < s.values.cols(); ++j) {
    s.column_names.push_back("V" + std::to_string(j + 1));
  }
  return s;
}

Eigen::Matrix3d
corr3()
{
  Eigen::Matrix3d r;
  r << 1.0, 0.5, 0.7, 0.5, 1.0, 0.4, 0.7, 0.4, 1.0;
  return r;
}

Eigen::MatrixXd
random_correlation(Eigen::Index d, std::uint64_t seed)
{
  stats::Philox rng(seed, 7);
  Eigen::MatrixXd a(d, d + 2);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      a(i, j) = rng.normal();
    }
  }
  Eigen::MatrixXd c = a * a.transpose();
  Eigen::VectorXd s = c.diagonal().cwiseSqrt().cwiseInverse();
  return s.asDiagonal() * c * s.asDiagonal();
}

bool
contains(const std::vector<size_t>& v, size_t x)
{
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::vector<size_t>
sorted_union(std::vector<size_t> a, const std::vector<size_t>& b)
{
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

// union-find check that `edges` (pairs of node ids) form a spanning tree
bool
is_spanning_tree(size_t n_nodes, const std::vector<std::pair<size_t, size_t>>& edges)
{
  if (edges.size() + 1 != n_nodes) {
    return false;
  }
  std::vector<size_t> parent(n_nodes);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<size_t(size_t)> root = [&](size_t x) {
    return parent[x] == x ? x : parent[x] = root(parent[x]);
  };
  for (auto [a, b] : edges) {
    size_t ra = root(a), rb = root(b);
    if (ra == rb) {
      return false;
    }
    parent[ra] = rb;
  }
  return true;
}

void
check_structure(const RVineStructure& s)
{
  const size_t d = s.dimension;
  for (size_t t = 0; t < s.trees.size(); ++t) {
    const auto& tree = s.trees[t];
    ASSERT_EQ(tree.size(), d - 1 - t);
    std::vector<std::pair<size_t, size_t>> links;
    for (const auto& e : tree) {
      EXPECT_EQ(e.level, t + 1);
      EXPECT_LT(e.conditioned[0], e.conditioned[1]);
      EXPECT_EQ(e.constraint.size(), t + 2);
      EXPECT_EQ(sorted_union({ e.conditioned[0], e.conditioned[1] }, e.conditioning), e.constraint);
      links.emplace_back(e.parents[0], e.parents[1]);
      if (t == 0) {
        EXPECT_TRUE(e.conditioning.empty());
        continue;
      }
      const auto& p = s.trees[t - 1][e.parents[0]];
      const auto& q = s.trees[t - 1][e.parents[1]];
      // proximity: the joined edges share a node of the previous tree
      std::set<size_t> pn = { p.parents[0], p.parents[1] };
      EXPECT_TRUE(pn.count(q.parents[0]) || pn.count(q.parents[1])) << e.label();
      std::vector<size_t> inter, sym;
      std::set_intersection(p.constraint.begin(), p.constraint.end(), q.constraint.begin(),
                            q.constraint.end(), std::back_inserter(inter));
      std::set_symmetric_difference(p.constraint.begin(), p.constraint.end(),
                                    q.constraint.begin(), q.constraint.end(),
                                    std::back_inserter(sym));
      EXPECT_EQ(inter, e.conditioning);
      EXPECT_EQ(sym, (std::vector<size_t>{ e.conditioned[0], e.conditioned[1] }));
      EXPECT_EQ(sorted_union(p.constraint, q.constraint), e.constraint);
    }
    EXPECT_TRUE(is_spanning_tree(t == 0 ? d : s.trees[t - 1].size(), links)) << "tree " << t + 1;
  }
}

VineModel
independent_like(VineModel m)
{
  for (auto& tree : m.structure.trees) {
    for (auto& e : tree) {
      e.copula = BivariateCopulaSpec::independent();
    }
  }
  return m;
}

} // namespace

TEST(Structure, TwoDimensions)
{
  auto s = build_structure(as_sample(testing_helpers::bivariate_sample(50, 0.3, 1)), 1);
  ASSERT_EQ(s.trees.size(), 1u);
  ASSERT_EQ(s.trees[0].size(), 1u);
  const auto& e = s.trees[0][0];
  EXPECT_EQ(e.conditioned, (std::array<size_t, 2>{ 0, 1 }));
  EXPECT_TRUE(e.conditioning.empty());
  EXPECT_EQ(e.label(), "1,2");
}

TEST(Structure, FigureTwoFactorization)
{
  Eigen::MatrixXd u = gaussian_copula_sample(200, random_correlation(4, 2), 2);
  VineConfig cfg;
  const std::set<std::string> wanted = { "1,3", "2,3", "3,4", "1,2|3", "1,4|3" };
  cfg.edge_weight = [&](const VineEdge& e) { return wanted.count(e.label()) ? 1.0 : 0.0; };
  auto s = build_structure(as_sample(u), 3, cfg);
  std::vector<std::string> labels;
  for (const auto& tree : s.trees) {
    for (const auto& e : tree) {
      labels.push_back(e.label());
    }
  }
  std::sort(labels.begin(), labels.begin() + 3);
  std::sort(labels.begin() + 3, labels.begin() + 5);
  EXPECT_EQ(labels,
            (std::vector<std::string>{ "1,3", "2,3", "3,4", "1,2|3", "1,4|3", "2,4|1,3" }));
  const auto& top = s.trees[2][0];
  EXPECT_EQ(top.conditioned, (std::array<size_t, 2>{ 1, 3 }));
  EXPECT_EQ(top.conditioning, (std::vector<size_t>{ 0, 2 }));
  EXPECT_EQ(top.constraint, (std::vector<size_t>{ 0, 1, 2, 3 }));
  for (const auto& e : s.trees[1]) {
    EXPECT_EQ(e.conditioning, (std::vector<size_t>{ 2 }));
  }
  check_structure(s);
}

TEST(Structure, EdgeCountAndInvariants)
{
  for (Eigen::Index d = 2; d <= 7; ++d) {
    Eigen::MatrixXd u = gaussian_copula_sample(150, random_correlation(d, 10 + d), 10 + d);
    auto s = build_structure(as_sample(u), d - 1);
    EXPECT_EQ(s.edge_count(), static_cast<size_t>(d * (d - 1) / 2));
    check_structure(s);
  }
}

TEST(Structure, FindByLabel)
{
  Eigen::MatrixXd u = gaussian_copula_sample(100, random_correlation(4, 3), 3);
  auto s = build_structure(as_sample(u), 3);
  for (size_t t = 0; t < s.trees.size(); ++t) {
    for (size_t i = 0; i < s.trees[t].size(); ++i) {
      EXPECT_EQ(s.find(s.trees[t][i].label()), std::make_pair(t, i));
    }
  }
  const auto& e = s.trees[1][0];
  std::string swapped = std::to_string(e.conditioned[1] + 1) + "," +
                        std::to_string(e.conditioned[0] + 1) + "|" +
                        std::to_string(e.conditioning[0] + 1);
  EXPECT_EQ(s.find(swapped), std::make_pair(size_t{ 1 }, size_t{ 0 }));
  EXPECT_THROW(s.find("1,9"), DomainError);
}

TEST(Prim, MatchesBruteForce)
{
  stats::Philox rng(4);
  for (size_t n = 2; n <= 7; ++n) {
    for (int rep = 0; rep < 4; ++rep) {
      std::vector<CandidateEdge> cand;
      for (size_t a = 0; a < n; ++a) {
        for (size_t b = a + 1; b < n; ++b) {
          if (n > 3 && rng.uniform() < 0.2 && b != a + 1) {
            continue;
          }
          CandidateEdge c;
          c.a = a;
          c.b = b;
          c.edge.conditioned = { a, b };
          c.weight = rng.uniform();
          cand.push_back(c);
        }
      }
      auto chosen = prim_max_spanning_tree(n, cand);
      std::vector<std::pair<size_t, size_t>> links;
      double w = 0.0;
      for (size_t i : chosen) {
        links.emplace_back(cand[i].a, cand[i].b);
        w += cand[i].weight;
      }
      ASSERT_TRUE(is_spanning_tree(n, links));
      // enumerate all (n-1)-subsets of the candidate edges
      double best = -1.0;
      const size_t m = cand.size();
      std::vector<bool> mask(m, false);
      std::fill(mask.begin(), mask.begin() + static_cast<long>(n - 1), true);
      do {
        std::vector<std::pair<size_t, size_t>> sub;
        double sw = 0.0;
        for (size_t i = 0; i < m; ++i) {
          if (mask[i]) {
            sub.emplace_back(cand[i].a, cand[i].b);
            sw += cand[i].weight;
          }
        }
        if (is_spanning_tree(n, sub)) {
          best = std::max(best, sw);
        }
      } while (std::prev_permutation(mask.begin(), mask.end()));
      EXPECT_NEAR(w, best, 1e-12) << n;
    }
  }
}

TEST(Prim, TiesAreLexicographic)
{
  std::vector<CandidateEdge> cand(3);
  cand[0].a = 1, cand[0].b = 2, cand[0].edge.conditioned = { 1, 2 };
  cand[1].a = 0, cand[1].b = 2, cand[1].edge.conditioned = { 0, 2 };
  cand[2].a = 0, cand[2].b = 1, cand[2].edge.conditioned = { 0, 1 };
  for (auto& c : cand) {
    c.weight = 0.5;
  }
  auto chosen = prim_max_spanning_tree(3, cand);
  std::set<size_t> got(chosen.begin(), chosen.end());
  EXPECT_EQ(got, (std::set<size_t>{ 1, 2 }));
}

TEST(HPropagate, Examples)
{
  Eigen::VectorXd a(3), b(3);
  a << 0.1, 0.5, 0.9;
  b << 0.7, 0.2, 0.4;
  EXPECT_EQ(h_propagate(BivariateCopulaSpec::independent(), a, b), a);
  EXPECT_EQ(h_propagate(BivariateCopulaSpec::constant(0.0), a, b), a);
  Eigen::VectorXd half = Eigen::VectorXd::Constant(1, 0.5);
  EXPECT_NEAR(h_propagate(BivariateCopulaSpec::constant(0.8), half, half)(0), 0.5, 1e-15);
  Eigen::VectorXd out = h_propagate(BivariateCopulaSpec::constant(0.6), a, b);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(out(i), gaussian_h(a(i), b(i), 0.6));
  }
  Eigen::VectorXd edge(1), given(1);
  edge << 1e-14;
  given << 0.99;
  EXPECT_EQ(h_propagate(BivariateCopulaSpec::constant(0.99), edge, given)(0), h_clamp);
}

TEST(HPropagate, Errors)
{
  Eigen::VectorXd a = Eigen::VectorXd::Constant(3, 0.5), b = Eigen::VectorXd::Constant(2, 0.5);
  EXPECT_THROW(h_propagate(BivariateCopulaSpec::constant(0.3), a, b), SizeError);
  EXPECT_THROW(h_propagate(BivariateCopulaSpec{}, a, a), StateError);
}

TEST(LogDensity, TwoDimensionsIsSingleEdge)
{
  Eigen::MatrixXd u = testing_helpers::bivariate_sample(100, 0.6, 5);
  auto model = fit(as_sample(u), Estimator::svine, 1);
  double theta = model.structure.trees[0][0].copula.theta;
  Eigen::VectorXd ld = log_density(model, u);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    EXPECT_NEAR(ld(i), gaussian_loglik(u.row(i), theta), 1e-12);
  }
}

TEST(LogDensity, IndependentModelIsZero)
{
  Eigen::MatrixXd u = gaussian_copula_sample(80, corr3(), 6);
  auto model = independent_like(fit(as_sample(u), Estimator::svine, 2));
  EXPECT_EQ(log_density(model, u), Eigen::VectorXd::Zero(80));
  auto [m, sd] = evaluate(model, as_sample(u));
  EXPECT_EQ(m, 0.0);
  EXPECT_EQ(sd, 0.0);
}

TEST(LogDensity, AnalyticThreeDimensionalOracle)
{
  Eigen::MatrixXd train = gaussian_copula_sample(1000, corr3(), 7);
  Eigen::MatrixXd test = gaussian_copula_sample(1000, corr3(), 8);
  auto model = fit(as_sample(train), Estimator::svine, 2);
  Eigen::VectorXd ld = log_density(model, test);
  double mad = 0.0, diff = 0.0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    double truth = gaussian_copula_log_density(test.row(i), corr3());
    mad += std::abs(ld(i) - truth);
    diff += ld(i) - truth;
  }
  EXPECT_LT(mad / 1000, 0.05);
  EXPECT_LT(std::abs(diff / 1000), 0.05);
}

TEST(LogDensity, ExactForTrueParameters)
{
  // a vine with the true tree-1 correlations and the true partial
  // correlation reproduces the 3-D Gaussian copula density exactly
  Eigen::MatrixXd u = gaussian_copula_sample(200, corr3(), 9);
  auto model = fit(as_sample(u), Estimator::svine, 2);
  const auto r = corr3();
  for (auto& e : model.structure.trees[0]) {
    e.copula = BivariateCopulaSpec::constant(r(e.conditioned[0], e.conditioned[1]));
  }
  auto& top = model.structure.trees[1][0];
  size_t a = top.conditioned[0], b = top.conditioned[1], c = top.conditioning[0];
  double partial = (r(a, b) - r(a, c) * r(b, c)) /
                   std::sqrt((1 - r(a, c) * r(a, c)) * (1 - r(b, c) * r(b, c)));
  top.copula = BivariateCopulaSpec::constant(partial);
  Eigen::VectorXd ld = log_density(model, u);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    EXPECT_NEAR(ld(i), gaussian_copula_log_density(u.row(i), r), 1e-8);
  }
}

TEST(LogDensity, IntegratesToOne)
{
  Eigen::MatrixXd u = gaussian_copula_sample(500, corr3(), 10);
  auto model = fit(as_sample(u), Estimator::svine, 2);
  // Simpson over normal scores: int c(Phi(x)) phi(x1) phi(x2) phi(x3) dx
  const int m = 80;
  const double lo = -7.0, hi = 7.0, step = (hi - lo) / m;
  Eigen::VectorXd x(m + 1), w(m + 1);
  for (int k = 0; k <= m; ++k) {
    x(k) = lo + k * step;
    w(k) = (k == 0 || k == m ? 1.0 : (k % 2 ? 4.0 : 2.0)) * step / 3.0 * stats::normal_pdf(x(k));
  }
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(std::pow(m + 1, 3)), 3);
  Eigen::VectorXd wt(pts.rows());
  Eigen::Index r = 0;
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      for (int k = 0; k <= m; ++k, ++r) {
        pts.row(r) << stats::normal_cdf(x(i)), stats::normal_cdf(x(j)), stats::normal_cdf(x(k));
        wt(r) = w(i) * w(j) * w(k);
      }
    }
  }
  Eigen::VectorXd ld = log_density(model, pts);
  EXPECT_NEAR(wt.dot(ld.array().exp().matrix()), 1.0, 5e-3);
}

TEST(LogDensity, Errors)
{
  Eigen::MatrixXd u = gaussian_copula_sample(50, corr3(), 11);
  auto model = fit(as_sample(u), Estimator::svine, 2);
  EXPECT_THROW(log_density(model, u.leftCols(2)), SizeError);
  Eigen::MatrixXd bad = u.topRows(2);
  bad(1, 1) = 1.0;
  EXPECT_THROW(log_density(model, bad), BoundaryError);
}

TEST(Fit, SvineRecoversConstantCorrelations)
{
  Eigen::MatrixXd u = gaussian_copula_sample(500, corr3(), 12);
  auto model = fit(as_sample(u), Estimator::svine, 2);
  const auto r = corr3();
  for (const auto& e : model.structure.trees[0]) {
    EXPECT_NEAR(e.copula.theta, r(e.conditioned[0], e.conditioned[1]), 0.1) << e.label();
  }
  const auto& top = model.structure.trees[1][0];
  size_t a = top.conditioned[0], b = top.conditioned[1], c = top.conditioning[0];
  double partial = (r(a, b) - r(a, c) * r(b, c)) /
                   std::sqrt((1 - r(a, c) * r(a, c)) * (1 - r(b, c) * r(b, c)));
  EXPECT_NEAR(top.copula.theta, partial, 0.1);
}

TEST(Fit, TrainBeatsIndependence)
{
  Eigen::MatrixXd u = gaussian_copula_sample(300, random_correlation(4, 13), 13);
  auto s = as_sample(u);
  auto model = fit(s, Estimator::svine, 3);
  EXPECT_GE(evaluate(model, s).first, evaluate(independent_like(model), s).first);
}

TEST(Fit, TruncationMonotoneOnTrainingData)
{
  Eigen::MatrixXd u = gaussian_copula_sample(300, random_correlation(5, 14), 14);
  auto s = as_sample(u);
  double prev = -std::numeric_limits<double>::infinity();
  for (size_t k = 1; k <= 4; ++k) {
    double ll = log_density(fit(s, Estimator::svine, k), u).sum();
    EXPECT_GE(ll, prev - 1e-9) << k;
    prev = ll;
  }
}

TEST(Fit, Deterministic)
{
  Eigen::MatrixXd u = gaussian_copula_sample(120, random_correlation(4, 15), 15);
  auto s = as_sample(u);
  for (auto est : { Estimator::svine, Estimator::gpvine }) {
    auto a = fit(s, est, 2);
    auto b = fit(s, est, 2);
    for (size_t t = 0; t < a.structure.trees.size(); ++t) {
      for (size_t i = 0; i < a.structure.trees[t].size(); ++i) {
        EXPECT_EQ(a.structure.trees[t][i].label(), b.structure.trees[t][i].label());
      }
    }
    EXPECT_EQ(log_density(a, u), log_density(b, u));
  }
}

TEST(Fit, TreeOneEquivalence)
{
  Eigen::MatrixXd u = gaussian_copula_sample(150, random_correlation(4, 16), 16);
  auto s = as_sample(u);
  Eigen::MatrixXd test = gaussian_copula_sample(100, random_correlation(4, 16), 17);
  auto a = fit(s, Estimator::svine, 1);
  auto b = fit(s, Estimator::gpvine, 1);
  EXPECT_EQ(log_density(a, test), log_density(b, test));
}

TEST(Fit, GpvineSyntheticEdgeAndTauSurface)
{
  auto raw = synth_sample(100, 3);
  auto s = pseudo_observations(raw.values, raw.column_names);
  VineConfig cfg;
  cfg.first_tree = { { 0, 2 }, { 1, 2 } };
  auto model = fit(s, Estimator::gpvine, 2, cfg);
  auto [t, i] = model.structure.find("1,2|3");
  ASSERT_EQ(t, 1u);
  const auto& e = model.structure.trees[t][i];
  ASSERT_EQ(e.copula.kind, BivariateCopulaSpec::Kind::gp_conditional);
  EXPECT_EQ(e.copula.gp->input_dim(), 1);
  EXPECT_EQ(e.copula.gp->training_inputs().cols(), 1);
  for (const auto& f : model.structure.trees[0]) {
    EXPECT_EQ(f.copula.kind, BivariateCopulaSpec::Kind::constant);
  }

  Eigen::MatrixXd one(1, 1);
  one << 0.5;
  Eigen::MatrixXd rows = tau_surface(model, "1,2|3", one);
  ASSERT_EQ(rows.rows(), 1);
  ASSERT_EQ(rows.cols(), 3);
  EXPECT_EQ(rows(0, 0), 0.5);
  EXPECT_GT(rows(0, 1), -1.0);
  EXPECT_LT(rows(0, 1), 1.0);
  EXPECT_GT(rows(0, 2), 0.0);
  Eigen::MatrixXd grid = Eigen::VectorXd::LinSpaced(7, 0.05, 0.95);
  EXPECT_EQ(tau_surface(model, "1,2|3", grid).rows(), 7);
  EXPECT_THROW(tau_surface(model, "1,3", one), StateError);
  EXPECT_THROW(tau_surface(model, "1,2|3", Eigen::MatrixXd::Constant(2, 2, 0.5)), SizeError);
  EXPECT_THROW(tau_surface(model, "1,4", one), DomainError);
}

TEST(Fit, TwoDimensionalGpSurface)
{
  Eigen::MatrixXd u = gaussian_copula_sample(60, random_correlation(4, 18), 18);
  VineConfig cfg;
  cfg.gp.pseudo_inputs = 10;
  cfg.gp.max_evaluations = 20;
  auto model = fit(as_sample(u), Estimator::gpvine, 3, cfg);
  const auto& top = model.structure.trees[2][0];
  ASSERT_EQ(top.copula.kind, BivariateCopulaSpec::Kind::gp_conditional);
  Eigen::MatrixXd grid(4, 2);
  grid << 0.2, 0.2, 0.2, 0.8, 0.8, 0.2, 0.8, 0.8;
  Eigen::MatrixXd rows = tau_surface(model, top.label(), grid);
  EXPECT_EQ(rows.rows(), 4);
  EXPECT_EQ(rows.cols(), 4);
}

TEST(Fit, MllvineRestrictions)
{
  Eigen::MatrixXd u = gaussian_copula_sample(80, random_correlation(4, 19), 19);
  auto s = as_sample(u);
  EXPECT_THROW(fit(s, Estimator::mllvine, 3), DomainError);
  auto model = fit(s, Estimator::mllvine, 2);
  for (const auto& e : model.structure.trees[1]) {
    EXPECT_EQ(e.copula.kind, BivariateCopulaSpec::Kind::mll_conditional);
  }
  EXPECT_TRUE(log_density(model, u).allFinite());
}

TEST(Fit, Errors)
{
  Eigen::MatrixXd u = gaussian_copula_sample(30, corr3(), 20);
  auto s = as_sample(u);
  EXPECT_THROW(fit(s, Estimator::svine, 0), DomainError);
  EXPECT_THROW(fit(s, Estimator::svine, 3), DomainError);
  EXPECT_THROW(fit(as_sample(u.leftCols(1)), Estimator::svine, 1), SizeError);
  VineConfig cyc;
  cyc.first_tree = { { 0, 1 }, { 0, 1 } };
  EXPECT_THROW(fit(s, Estimator::svine, 2, cyc), DomainError);
  EXPECT_EQ(estimator_from_name("gpvine"), Estimator::gpvine);
  EXPECT_EQ(estimator_name(Estimator::mllvine), "mllvine");
  EXPECT_THROW(estimator_from_name("cvine"), DomainError);
}

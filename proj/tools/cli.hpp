#pragma once

#include "gpvine/gpvine.hpp"
#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace vinecop {

enum ExitCode
{
  ok = 0,
  usage = 2,
  data_error = 3,
  numerical = 4
};

struct UsageError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

//! "a:b:step" with inclusive endpoints.
inline std::vector<double>
parse_range(const std::string& spec)
{
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    double v = 0.0;
    if (!gpvine::detail::parse_double(gpvine::detail::trim(tok), v)) {
      throw UsageError("malformed grid range '" + spec + "' (expected a:b:step)");
    }
    parts.push_back(v);
  }
  if (parts.size() == 1) {
    return parts;
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw UsageError("malformed grid range '" + spec + "' (expected a:b:step, a <= b, step > 0)");
  }
  std::vector<double> out;
  auto count = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (long k = 0; k <= count; ++k) {
    out.push_back(parts[0] + static_cast<double>(k) * parts[2]);
  }
  return out;
}

//! Tensor grid from comma-separated ranges, one per conditioning variable.
inline Eigen::MatrixXd
parse_grid(const std::string& spec)
{
  std::vector<std::vector<double>> axes;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    axes.push_back(parse_range(tok));
  }
  if (axes.empty()) {
    throw UsageError("empty grid specification");
  }
  Eigen::Index rows = 1;
  for (const auto& a : axes) {
    rows *= static_cast<Eigen::Index>(a.size());
  }
  Eigen::MatrixXd grid(rows, static_cast<Eigen::Index>(axes.size()));
  for (Eigen::Index r = 0; r < rows; ++r) {
    Eigen::Index rem = r;
    for (Eigen::Index c = grid.cols() - 1; c >= 0; --c) {
      auto len = static_cast<Eigen::Index>(axes[c].size());
      grid(r, c) = axes[c][rem % len];
      rem /= len;
    }
  }
  return grid;
}

//! "1-3,2-3" (1-based) to 0-based pairs.
inline std::vector<std::pair<size_t, size_t>>
parse_first_tree(const std::string& spec, size_t d)
{
  std::vector<std::pair<size_t, size_t>> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto dash = tok.find('-');
    size_t a = 0, b = 0;
    try {
      if (dash == std::string::npos) {
        throw std::invalid_argument(tok);
      }
      a = std::stoul(tok.substr(0, dash));
      b = std::stoul(tok.substr(dash + 1));
    } catch (const std::logic_error&) {
      throw UsageError("malformed --first-tree entry '" + tok + "' (expected i-j)");
    }
    if (a < 1 || b < 1 || a > d || b > d || a == b) {
      throw UsageError("--first-tree entry '" + tok + "' is not a pair of distinct "
                       "variables in 1.." + std::to_string(d));
    }
    out.emplace_back(a - 1, b - 1);
  }
  if (out.size() != d - 1) {
    throw UsageError("--first-tree needs exactly " + std::to_string(d - 1) + " edges");
  }
  return out;
}

inline std::string
format_double(double x)
{
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

struct FitOptions
{
  std::string estimator = "svine";
  int trees = 0;
  std::uint64_t seed = 1;
  size_t pseudo_inputs = 20;
  size_t quadrature_nodes = 32;
  std::string first_tree;
};

inline gpvine::VineConfig
make_config(const FitOptions& o, size_t d)
{
  gpvine::VineConfig cfg;
  cfg.gp.seed = o.seed;
  cfg.gp.pseudo_inputs = o.pseudo_inputs;
  cfg.gp.ep.quadrature_nodes = o.quadrature_nodes;
  if (!o.first_tree.empty()) {
    cfg.first_tree = parse_first_tree(o.first_tree, d);
  }
  return cfg;
}

inline size_t
resolve_trees(const FitOptions& o, gpvine::Estimator est, size_t d)
{
  size_t trees = o.trees > 0 ? static_cast<size_t>(o.trees) : d - 1;
  if (o.trees < 0 || trees > d - 1) {
    throw UsageError("--trees must lie in 1.." + std::to_string(d - 1));
  }
  if (est == gpvine::Estimator::mllvine && trees > 2) {
    throw UsageError("mllvine supports at most 2 trees (a single conditioning "
                     "variable); pass --trees 2");
  }
  return trees;
}

inline gpvine::Estimator
parse_estimator(const std::string& name)
{
  try {
    return gpvine::estimator_from_name(name);
  } catch (const gpvine::DomainError& e) {
    throw UsageError(e.what());
  }
}

inline gpvine::RawDataset
read_data(const std::string& path)
{
  auto data = gpvine::load_csv(path);
  if (data.dropped_rows > 0) {
    std::cerr << "note: dropped " << data.dropped_rows
              << " row(s) with missing or non-numeric cells\n";
  }
  if (data.rows() < 2 || data.dim() < 2) {
    throw gpvine::ParseError(path + ": need at least 2 rows and 2 columns");
  }
  return data;
}

inline int
cmd_synth(size_t n, std::uint64_t seed, const std::string& out)
{
  if (n == 0) {
    throw UsageError("-n must be at least 1");
  }
  auto data = gpvine::synth_sample(n, seed);
  if (out.empty() || out == "-") {
    gpvine::write_csv(data, std::cout);
  } else {
    std::ofstream f(out);
    if (!f) {
      throw gpvine::ParseError("cannot write '" + out + "'");
    }
    gpvine::write_csv(data, f);
  }
  return ok;
}

inline int
cmd_fit(const std::string& data_path, const FitOptions& o, const std::string& out)
{
  auto est = parse_estimator(o.estimator);
  auto raw = read_data(data_path);
  const auto d = static_cast<size_t>(raw.dim());
  size_t trees = resolve_trees(o, est, d);
  auto cfg = make_config(o, d);
  auto sample = gpvine::pseudo_observations(raw.values, raw.column_names);
  auto model = gpvine::fit(sample, est, trees, cfg);

  std::cout << "estimator " << gpvine::estimator_name(est) << ", " << trees
            << " tree(s), n = " << sample.rows() << "\n";
  for (size_t t = 0; t < model.structure.trees.size(); ++t) {
    double ll = 0.0;
    for (const auto& e : model.structure.trees[t]) {
      ll += e.train_loglik;
    }
    std::cout << "tree " << t + 1 << ": train loglik " << std::setprecision(10) << ll
              << "  edges:";
    for (const auto& e : model.structure.trees[t]) {
      std::cout << " " << e.label() << (e.ep_converged ? "" : "(EP not converged)");
    }
    std::cout << "\n";
  }
  if (!out.empty()) {
    gpvine::save_model(model, out);
  }
  return ok;
}

inline gpvine::PseudoSample
eval_sample(const gpvine::RawDataset& raw, bool pit)
{
  if (!pit) {
    return { raw.values, raw.column_names };
  }
  return gpvine::pseudo_observations(raw.values, raw.column_names);
}

inline int
cmd_eval(const std::string& model_path, const std::string& data_path, bool pit, bool csv)
{
  auto model = gpvine::load_model(model_path);
  auto raw = read_data(data_path);
  if (static_cast<size_t>(raw.dim()) != model.dim()) {
    throw gpvine::SizeError("data has " + std::to_string(raw.dim()) +
                            " columns, model dimension is " +
                            std::to_string(model.dim()));
  }
  auto [mean, sd] = gpvine::evaluate(model, eval_sample(raw, pit));
  if (csv) {
    std::cout << "mean,sd,n\n"
              << format_double(mean) << "," << format_double(sd) << "," << raw.rows() << "\n";
  } else {
    std::cout << "mean log-density " << std::setprecision(10) << mean << " (sd " << sd
              << ", n = " << raw.rows() << ")\n";
  }
  return ok;
}

struct CompareOptions
{
  std::vector<std::string> estimators = { "svine", "gpvine" };
  int replicates = 50;
  double fraction = 0.5;
  unsigned threads = 0;
};

//! Per-replicate mean test log-likelihoods: result[estimator][tree][replicate].
inline std::vector<std::vector<std::vector<double>>>
run_replicates(const gpvine::PseudoSample& sample,
               const std::vector<gpvine::Estimator>& ests,
               const std::vector<size_t>& trees,
               const FitOptions& o,
               const CompareOptions& c)
{
  const auto reps = static_cast<size_t>(c.replicates);
  std::vector<std::vector<std::vector<double>>> res(ests.size());
  for (size_t e = 0; e < ests.size(); ++e) {
    res[e].assign(trees[e], std::vector<double>(reps, 0.0));
  }
  std::atomic<size_t> next{ 0 };
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (size_t r = next++; r < reps; r = next++) {
      try {
        auto [tr, te] = gpvine::split_indices(
          sample.rows(), gpvine::SplitSpec{ o.seed, c.fraction, r });
        gpvine::PseudoSample train{ sample.values(tr, Eigen::all), sample.column_names };
        gpvine::PseudoSample test{ sample.values(te, Eigen::all), sample.column_names };
        FitOptions ro = o;
        ro.seed = o.seed * 1000003ULL + r;
        auto cfg = make_config(ro, static_cast<size_t>(sample.dim()));
        for (size_t e = 0; e < ests.size(); ++e) {
          auto model = gpvine::fit(train, ests[e], trees[e], cfg);
          Eigen::MatrixXd by_tree = gpvine::log_density_by_tree(model, test.values);
          double cum = 0.0;
          for (size_t t = 0; t < trees[e]; ++t) {
            cum += by_tree.col(static_cast<Eigen::Index>(t)).mean();
            res[e][t][r] = cum;
          }
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) {
          error = std::current_exception();
        }
        next = reps;
      }
    }
  };
  unsigned n_threads = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(reps));
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n_threads; ++i) {
    pool.emplace_back(worker);
  }
  for (auto& th : pool) {
    th.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
  return res;
}

inline int
cmd_compare(const std::string& data_path, const FitOptions& o, const CompareOptions& c,
            const std::string& out)
{
  if (c.replicates < 1) {
    throw UsageError("--replicates must be at least 1");
  }
  if (!(c.fraction > 0.0 && c.fraction < 1.0)) {
    throw UsageError("--fraction must lie in (0, 1)");
  }
  if (c.estimators.empty()) {
    throw UsageError("--estimators is empty");
  }
  std::vector<gpvine::Estimator> ests;
  for (const auto& name : c.estimators) {
    ests.push_back(parse_estimator(name));
  }
  auto raw = read_data(data_path);
  const auto d = static_cast<size_t>(raw.dim());
  FitOptions probe = o;
  probe.estimator = "svine";
  const size_t max_trees = resolve_trees(probe, gpvine::Estimator::svine, d);
  std::vector<size_t> trees;
  for (auto e : ests) {
    trees.push_back(e == gpvine::Estimator::mllvine ? std::min<size_t>(max_trees, 2) : max_trees);
  }
  make_config(o, d); // validates --first-tree before the replicate loop
  auto sample = gpvine::pseudo_observations(raw.values, raw.column_names);
  auto res = run_replicates(sample, ests, trees, o, c);

  std::ostringstream table;
  table << "estimator,trees,mean,sd,replicates\n";
  for (size_t e = 0; e < ests.size(); ++e) {
    for (size_t t = 0; t < trees[e]; ++t) {
      Eigen::Map<const Eigen::VectorXd> v(res[e][t].data(), c.replicates);
      double mean = v.mean();
      double sd = c.replicates > 1 ? gpvine::stats::mean_sd(v).second : 0.0;
      table << c.estimators[e] << "," << t + 1 << "," << format_double(mean) << ","
            << format_double(sd) << "," << c.replicates << "\n";
    }
  }
  table << "\nestimator_a,estimator_b,trees,wilcoxon_p\n";
  for (size_t a = 0; a < ests.size(); ++a) {
    for (size_t b = a + 1; b < ests.size(); ++b) {
      for (size_t t = 0; t < std::min(trees[a], trees[b]); ++t) {
        table << c.estimators[a] << "," << c.estimators[b] << "," << t + 1 << ",";
        if (c.replicates < 2) {
          table << "n/a\n";
          continue;
        }
        Eigen::Map<const Eigen::VectorXd> x(res[a][t].data(), c.replicates);
        Eigen::Map<const Eigen::VectorXd> y(res[b][t].data(), c.replicates);
        table << format_double(gpvine::wilcoxon_signed_rank(x, y).p_value) << "\n";
      }
    }
  }
  std::cout << table.str();
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) {
      throw gpvine::ParseError("cannot write '" + out + "'");
    }
    f << table.str();
  }
  return ok;
}

inline int
cmd_tau_surface(const std::string& model_path,
                const std::string& edge,
                const std::string& grid_spec,
                const std::string& out)
{
  auto model = gpvine::load_model(model_path);
  Eigen::MatrixXd grid = parse_grid(grid_spec);
  Eigen::MatrixXd table = gpvine::tau_surface(model, edge, grid);
  std::ostringstream s;
  for (Eigen::Index c = 0; c < grid.cols(); ++c) {
    s << "z" << c + 1 << ",";
  }
  s << "tau_mean,tau_sd\n";
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    for (Eigen::Index c = 0; c < table.cols(); ++c) {
      s << (c ? "," : "") << format_double(table(i, c));
    }
    s << "\n";
  }
  if (out.empty() || out == "-") {
    std::cout << s.str();
  } else {
    std::ofstream f(out);
    if (!f) {
      throw gpvine::ParseError("cannot write '" + out + "'");
    }
    f << s.str();
  }
  return ok;
}

//! Entry point; returns the process exit code.
inline int
run(int argc, char** argv)
{
  CLI::App app{ "Vine copulas with simplified, Gaussian-process and local-likelihood "
                "conditional pair copulas" };
  app.require_subcommand(1);

  size_t n = 0;
  std::uint64_t seed = 1;
  std::string out, data, model_path, edge, grid = "0:1:0.01";
  FitOptions fo;
  CompareOptions co;
  bool no_pit = false, csv = false;

  auto* synth = app.add_subcommand("synth", "Sample the synthetic benchmark (columns X, Y, Z)");
  synth->add_option("-n", n, "Number of points")->required();
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", out, "Output CSV (default: stdout)");

  auto add_fit_options = [&](CLI::App* cmd) {
    cmd->add_option("--data", data, "Input CSV with a header row")->required();
    cmd->add_option("--trees", fo.trees, "Number of trees (default: d - 1)");
    cmd->add_option("--seed", fo.seed, "Random seed");
    cmd->add_option("--pseudo-inputs", fo.pseudo_inputs, "FITC pseudo-inputs per GP edge");
    cmd->add_option("--quadrature-nodes", fo.quadrature_nodes, "Gauss-Hermite nodes");
    cmd->add_option("--first-tree", fo.first_tree,
                    "Fix the first tree, e.g. 1-3,2-3 (1-based column indices)");
  };

  auto* fitc = app.add_subcommand("fit", "Fit a vine to a CSV file");
  add_fit_options(fitc);
  fitc->add_option("--estimator", fo.estimator, "svine, gpvine or mllvine");
  fitc->add_option("--out", out, "Model file to write");

  auto* evalc = app.add_subcommand("eval", "Mean and sd of the per-point log copula density");
  evalc->add_option("--model", model_path, "Model file")->required();
  evalc->add_option("--data", data, "Input CSV")->required();
  evalc->add_flag("--no-pit", no_pit, "Data are already on the copula scale");
  evalc->add_flag("--csv", csv, "Machine-readable output");

  auto* cmp = app.add_subcommand("compare", "Replicated train/test comparison of estimators");
  add_fit_options(cmp);
  cmp->add_option("--estimators", co.estimators, "Comma-separated estimators")->delimiter(',');
  cmp->add_option("--estimator", co.estimators, "Alias of --estimators")->delimiter(',');
  cmp->add_option("--replicates", co.replicates, "Number of random partitions");
  cmp->add_option("--fraction", co.fraction, "Training fraction");
  cmp->add_option("--threads", co.threads, "Worker threads (default: all cores)");
  cmp->add_option("--out", out, "Also write the table here");

  auto* tau = app.add_subcommand("tau-surface", "Posterior Kendall's tau of a GP edge on a grid");
  tau->add_option("--model", model_path, "Model file")->required();
  tau->add_option("--edge", edge, "Edge label, e.g. \"1,2|3\"")->required();
  tau->add_option("--grid", grid, "a:b:step per conditioning variable, comma-separated");
  tau->add_option("--out", out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    if (*synth) {
      return cmd_synth(n, seed, out);
    }
    if (*fitc) {
      return cmd_fit(data, fo, out);
    }
    if (*evalc) {
      return cmd_eval(model_path, data, !no_pit, csv);
    }
    if (*cmp) {
      return cmd_compare(data, fo, co, out);
    }
    if (*tau) {
      return cmd_tau_surface(model_path, edge, grid, out);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage;
  } catch (const gpvine::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage;
  } catch (const gpvine::StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage;
  } catch (const gpvine::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return data_error;
  } catch (const gpvine::SizeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return data_error;
  } catch (const gpvine::BoundaryError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return data_error;
  } catch (const gpvine::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical;
  }
  return usage;
}

} // namespace vinecop

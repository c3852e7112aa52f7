#pragma once

#include "gpvine/errors.hpp"
#include "gpvine/vine/vine.hpp"
#include <Eigen/Dense>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace gpvine {

//! Version written to and accepted from model files.
inline constexpr int model_format_version = 1;

namespace detail {

using nlohmann::json;

inline json
to_json_vector(const Eigen::VectorXd& v)
{
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline json
to_json_matrix(const Eigen::MatrixXd& m)
{
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(to_json_vector(m.row(i).transpose()));
  }
  return rows;
}

inline Eigen::VectorXd
vector_from_json(const json& j)
{
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd
matrix_from_json(const json& j, Eigen::Index cols)
{
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    Eigen::VectorXd row = vector_from_json(j[i]);
    if (row.size() != cols) {
      throw ParseError("model file: ragged matrix");
    }
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

inline json
copula_to_json(const BivariateCopulaSpec& c)
{
  using Kind = BivariateCopulaSpec::Kind;
  json j;
  switch (c.kind) {
    case Kind::unfitted:
      throw StateError("save_model: edge has no fitted copula");
    case Kind::independent:
      j["kind"] = "independent";
      break;
    case Kind::constant:
      j["kind"] = "constant";
      j["family"] = "gaussian";
      j["theta"] = c.theta;
      break;
    case Kind::gp_conditional: {
      const auto& gp = *c.gp;
      const auto& ep = gp.ep();
      j["kind"] = "gp";
      j["family"] = family_name(gp.family());
      j["quadrature_nodes"] = gp.quadrature_nodes();
      j["prior_mean"] = gp.prior().prior_mean;
      j["lengthscales"] = to_json_vector(gp.prior().hyper.lengthscales);
      j["amplitude"] = gp.prior().hyper.amplitude;
      j["noise"] = gp.prior().hyper.noise;
      j["pseudo_inputs"] = to_json_matrix(gp.prior().pseudo_inputs);
      j["training_inputs"] = to_json_matrix(gp.training_inputs());
      j["site_tau"] = to_json_vector(ep.site_tau);
      j["site_nu"] = to_json_vector(ep.site_nu);
      j["posterior_mean"] = to_json_vector(ep.posterior_mean);
      j["posterior_var"] = to_json_vector(ep.posterior_var);
      j["log_evidence"] = ep.log_evidence;
      j["converged"] = ep.converged;
      j["sweeps"] = ep.sweeps;
      break;
    }
    case Kind::mll_conditional: {
      const auto& mll = *c.mll;
      j["kind"] = "mll";
      j["family"] = family_name(mll.family());
      j["bandwidth"] = mll.bandwidth();
      j["pairs"] = to_json_matrix(mll.pairs());
      j["inputs"] = to_json_vector(mll.inputs());
      break;
    }
  }
  return j;
}

inline BivariateCopulaSpec
copula_from_json(const json& j)
{
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "independent") {
    return BivariateCopulaSpec::independent();
  }
  if (kind == "constant") {
    return BivariateCopulaSpec::constant(j.at("theta").get<double>());
  }
  if (kind == "gp") {
    FITCPrior prior;
    prior.prior_mean = j.at("prior_mean").get<double>();
    prior.hyper.lengthscales = vector_from_json(j.at("lengthscales"));
    prior.hyper.amplitude = j.at("amplitude").get<double>();
    prior.hyper.noise = j.at("noise").get<double>();
    const Eigen::Index d = prior.hyper.lengthscales.size();
    prior.pseudo_inputs = matrix_from_json(j.at("pseudo_inputs"), d);
    EPState ep;
    ep.site_tau = vector_from_json(j.at("site_tau"));
    ep.site_nu = vector_from_json(j.at("site_nu"));
    ep.posterior_mean = vector_from_json(j.at("posterior_mean"));
    ep.posterior_var = vector_from_json(j.at("posterior_var"));
    ep.log_evidence = j.at("log_evidence").get<double>();
    ep.converged = j.at("converged").get<bool>();
    ep.sweeps = j.at("sweeps").get<int>();
    return BivariateCopulaSpec::conditional(
      GPConditionalCopula(family_from_name(j.at("family").get<std::string>()),
                          std::move(prior),
                          matrix_from_json(j.at("training_inputs"), d),
                          std::move(ep),
                          j.at("quadrature_nodes").get<size_t>()));
  }
  if (kind == "mll") {
    return BivariateCopulaSpec::conditional(
      MLLModel(matrix_from_json(j.at("pairs"), 2),
               vector_from_json(j.at("inputs")),
               j.at("bandwidth").get<double>(),
               family_from_name(j.at("family").get<std::string>())));
  }
  throw ParseError("model file: unknown copula kind '" + kind + "'");
}

} // namespace detail

//! JSON document describing a fitted vine. Doubles are written with
//! round-trip precision, so a reloaded model evaluates identically.
inline nlohmann::json
model_to_json(const VineModel& model)
{
  using nlohmann::json;
  json j;
  j["format"] = "gpvine-model";
  j["version"] = model_format_version;
  j["estimator"] = estimator_name(model.estimator);
  j["dimension"] = model.structure.dimension;
  j["column_names"] = model.column_names;
  json trees = json::array();
  for (const auto& tree : model.structure.trees) {
    json edges = json::array();
    for (const auto& e : tree) {
      json je;
      je["label"] = e.label();
      je["conditioned"] = e.conditioned;
      je["conditioning"] = e.conditioning;
      je["constraint"] = e.constraint;
      je["level"] = e.level;
      je["parents"] = e.parents;
      je["train_loglik"] = e.train_loglik;
      je["ep_converged"] = e.ep_converged;
      je["copula"] = detail::copula_to_json(e.copula);
      edges.push_back(std::move(je));
    }
    trees.push_back(std::move(edges));
  }
  j["trees"] = std::move(trees);
  return j;
}

inline VineModel
model_from_json(const nlohmann::json& j)
{
  try {
    if (j.at("format").get<std::string>() != "gpvine-model") {
      throw ParseError("not a gpvine model file");
    }
    int version = j.at("version").get<int>();
    if (version != model_format_version) {
      throw ParseError("unsupported model format version " + std::to_string(version));
    }
    VineModel model;
    model.estimator = estimator_from_name(j.at("estimator").get<std::string>());
    model.structure.dimension = j.at("dimension").get<size_t>();
    model.column_names = j.at("column_names").get<std::vector<std::string>>();
    for (const auto& jt : j.at("trees")) {
      std::vector<VineEdge> tree;
      for (const auto& je : jt) {
        VineEdge e;
        e.conditioned = je.at("conditioned").get<std::array<size_t, 2>>();
        e.conditioning = je.at("conditioning").get<std::vector<size_t>>();
        e.constraint = je.at("constraint").get<std::vector<size_t>>();
        e.level = je.at("level").get<size_t>();
        e.parents = je.at("parents").get<std::array<size_t, 2>>();
        e.train_loglik = je.at("train_loglik").get<double>();
        e.ep_converged = je.at("ep_converged").get<bool>();
        e.copula = detail::copula_from_json(je.at("copula"));
        tree.push_back(std::move(e));
      }
      model.structure.trees.push_back(std::move(tree));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  } catch (const DomainError& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

inline void
save_model(const VineModel& model, const std::string& path)
{
  std::ofstream out(path);
  if (!out) {
    throw ParseError("cannot write '" + path + "'");
  }
  out << model_to_json(model).dump(1) << '\n';
  if (!out) {
    throw ParseError("error writing '" + path + "'");
  }
}

inline VineModel
load_model(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open '" + path + "'");
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return model_from_json(j);
}

} // namespace gpvine

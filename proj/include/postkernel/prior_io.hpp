#pragma once

// JSON documents describing an input grid plus a prior or meta-ensemble.
//
//   {
//     "name": "four_function",                    optional, defaults to ""
//     "grid": { "points": [[0], [1]],             coordinates, all the same dimension
//               "test_pmf": [0.5, 0.5] },         optional, defaults to uniform
//     "family": "ensemble" | "gaussian" | "mixture" | "meta",
//     "ensemble": { "functions": [[1, 1], ...], "weights": [...] },
//     "gaussian": { "mean": [...], "covariance": [[...], ...] },
//     "mixture":  { "components": [{"mean": ..., "covariance": ...}, ...], "weights": [...] },
//     "meta":     { "tasks": [{"f": [...], "train_pmf": [...], "test_pmf": [...]}, ...],
//                   "weights": [...] }
//   }
//
// Omitted "weights" mean uniform weights. Only the block named by "family"
// is read.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "postkernel/errors.hpp"
#include "postkernel/meta_ensemble.hpp"
#include "postkernel/priors.hpp"

namespace postkernel {

struct PriorDocument {
  std::string name;
  InputGrid grid;
  std::optional<Prior> prior;
  std::optional<MetaEnsemble> meta;
};

namespace detail {

using nlohmann::json;

inline Vector vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidPriorError(what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidPriorError(what + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw InvalidPriorError(what + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Matrix m(rows, static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector row = vector_from_json(j[static_cast<std::size_t>(r)], what);
    if (row.size() != m.cols()) throw InvalidPriorError(what + " has ragged rows");
    m.row(r) = row.transpose();
  }
  return m;
}

inline std::vector<double> weights_from_json(const json& block, std::size_t count) {
  if (!block.contains("weights")) return std::vector<double>(count, 1.0 / static_cast<double>(count));
  const Vector w = vector_from_json(block.at("weights"), "weights");
  return {w.data(), w.data() + w.size()};
}

inline json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vector(m.row(r).transpose())));
  return rows;
}

inline GaussianPrior gaussian_from_json(const json& j) {
  return {vector_from_json(j.at("mean"), "gaussian mean"), matrix_from_json(j.at("covariance"), "gaussian covariance")};
}

inline json gaussian_to_json(const GaussianPrior& g) { return {{"mean", to_json(g.mean)}, {"covariance", to_json(g.covariance)}}; }

}  // namespace detail

inline PriorDocument parse_prior_document(const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidPriorError(std::string("prior document is not valid JSON: ") + e.what());
  }
  try {
    PriorDocument out;
    out.name = doc.value("name", "");
    const json& grid = doc.at("grid");
    for (const auto& p : grid.at("points")) out.grid.points.push_back(detail::vector_from_json(p, "grid point"));
    const auto m = out.grid.points.size();
    out.grid.test_pmf = grid.contains("test_pmf")
                            ? detail::vector_from_json(grid.at("test_pmf"), "test_pmf")
                            : Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
    validate(out.grid);

    const std::string family = doc.at("family").get<std::string>();
    if (family == "ensemble") {
      const json& b = doc.at("ensemble");
      DiscreteEnsemblePrior p;
      for (const auto& f : b.at("functions")) p.functions.push_back(detail::vector_from_json(f, "ensemble function"));
      p.weights = detail::weights_from_json(b, p.functions.size());
      out.prior = p;
    } else if (family == "gaussian") {
      out.prior = detail::gaussian_from_json(doc.at("gaussian"));
    } else if (family == "mixture") {
      const json& b = doc.at("mixture");
      GaussianMixturePrior p;
      for (const auto& c : b.at("components")) p.components.push_back(detail::gaussian_from_json(c));
      p.weights = detail::weights_from_json(b, p.components.size());
      out.prior = p;
    } else if (family == "meta") {
      const json& b = doc.at("meta");
      MetaEnsemble e;
      for (const auto& t : b.at("tasks")) {
        e.tasks.push_back({detail::vector_from_json(t.at("f"), "task f"),
                           detail::vector_from_json(t.at("train_pmf"), "task train_pmf"),
                           detail::vector_from_json(t.at("test_pmf"), "task test_pmf")});
      }
      e.weights = detail::weights_from_json(b, e.tasks.size());
      validate(e);
      if (e.grid_size() != m) throw InvalidPriorError("meta-ensemble grid size does not match grid");
      out.meta = std::move(e);
    } else {
      throw InvalidPriorError("unknown prior family '" + family + "'");
    }
    if (out.prior) {
      validate(*out.prior);
      if (grid_size(*out.prior) != m) throw InvalidPriorError("prior grid size does not match grid");
    }
    return out;
  } catch (const json::exception& e) {
    throw InvalidPriorError(std::string("malformed prior document: ") + e.what());
  }
}

inline PriorDocument load_prior_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open prior file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_prior_document(buf.str());
}

inline std::string dump_prior_document(const PriorDocument& doc) {
  using detail::json;
  json j;
  j["name"] = doc.name;
  json points = json::array();
  for (const auto& p : doc.grid.points) points.push_back(detail::to_json(p));
  j["grid"] = {{"points", points}, {"test_pmf", detail::to_json(doc.grid.test_pmf)}};
  if (doc.prior) {
    std::visit(detail::Overloaded{
                   [&](const DiscreteEnsemblePrior& p) {
                     json fs = json::array();
                     for (const auto& f : p.functions) fs.push_back(detail::to_json(f));
                     j["family"] = "ensemble";
                     j["ensemble"] = {{"functions", fs}, {"weights", p.weights}};
                   },
                   [&](const GaussianPrior& p) {
                     j["family"] = "gaussian";
                     j["gaussian"] = detail::gaussian_to_json(p);
                   },
                   [&](const GaussianMixturePrior& p) {
                     json cs = json::array();
                     for (const auto& c : p.components) cs.push_back(detail::gaussian_to_json(c));
                     j["family"] = "mixture";
                     j["mixture"] = {{"components", cs}, {"weights", p.weights}};
                   },
               },
               *doc.prior);
  } else if (doc.meta) {
    json ts = json::array();
    for (const auto& t : doc.meta->tasks) {
      ts.push_back({{"f", detail::to_json(t.f)},
                    {"train_pmf", detail::to_json(t.train_pmf)},
                    {"test_pmf", detail::to_json(t.test_pmf)}});
    }
    j["family"] = "meta";
    j["meta"] = {{"tasks", ts}, {"weights", doc.meta->weights}};
  }
  return j.dump(2);
}

}  // namespace postkernel

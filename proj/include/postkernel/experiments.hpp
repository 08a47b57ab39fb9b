#pragma once

// The three CLI commands as library calls: verify, risk and ntk.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "postkernel/config.hpp"
#include "postkernel/ntk_lab.hpp"
#include "postkernel/prior_io.hpp"
#include "postkernel/regression.hpp"
#include "postkernel/report.hpp"
#include "postkernel/verify.hpp"

namespace postkernel {

inline VerifyReport run_verify(const ExperimentConfig& cfg) {
  validate(cfg);
  const PriorDocument doc = load_prior_document(cfg.prior_path);
  VerifyOptions opt;
  opt.seed = cfg.seed;
  opt.n_train = cfg.n_train;
  opt.trials = cfg.trials;
  opt.competitors = cfg.competitors;
  opt.rtol = cfg.rtol;
  opt.match_tol = cfg.match_tol;
  opt.eps = cfg.eps;
  opt.inject_zero_labels = cfg.inject_zero_labels;
  return run_verify_suite(doc, opt);
}

inline std::string prior_label(const PriorDocument& doc, const std::string& path) {
  if (!doc.name.empty()) return doc.name;
  return std::filesystem::path(path).stem().string();
}

/// Expected risk of prior-kernel KR, affine KR, posterior-kernel KR and the
/// zero predictor. Monte Carlo rows share draws, so differences are paired.
inline std::vector<RiskRow> run_risk(const ExperimentConfig& cfg) {
  validate(cfg);
  const PriorDocument doc = load_prior_document(cfg.prior_path);
  if (!doc.prior) throw ConfigError("risk needs a prior (ensemble, gaussian or mixture), not a meta-ensemble");
  const Prior& prior = *doc.prior;
  const RiskMode mode = cfg.mode == "exact" ? RiskMode::exact : RiskMode::monte_carlo;
  if (mode == RiskMode::exact && !std::holds_alternative<DiscreteEnsemblePrior>(prior)) {
    throw ConfigError("exact risk needs a discrete ensemble prior; rerun with --mode mc");
  }
  const std::vector<std::pair<std::string, Predictor>> methods{
      {"prior_kernel_kr", prior_kernel_predictor(prior, cfg.rtol)},
      {"affine_kr", affine_kr_predictor(prior, cfg.rtol)},
      {"posterior_kernel_kr", posterior_kernel_predictor(prior, cfg.match_tol, cfg.rtol)},
      {"zero", zero_predictor(grid_size(prior))},
  };
  std::vector<RiskRow> rows;
  const std::string label = prior_label(doc, cfg.prior_path);
  for (const auto& [name, predictor] : methods) {
    const RiskEstimate r = expected_risk(prior, doc.grid.test_pmf, predictor, cfg.n_train, mode, cfg.samples, cfg.seed);
    rows.push_back({cfg.seed, label, cfg.n_train, name, cfg.mode, r.risk, r.std_error});
  }
  return rows;
}

inline ntk::TrainConfig train_config(const ExperimentConfig& cfg) {
  ntk::TrainConfig t;
  t.learning_rate = cfg.lr;
  t.epochs = cfg.epochs;
  t.batch_size = cfg.batch_size;
  t.seed = cfg.seed;
  t.eval_every = cfg.eval_every;
  t.rtol = cfg.rtol;
  t.eps = cfg.eps;
  return t;
}

inline ntk::AlignmentTrace run_ntk(const ExperimentConfig& cfg) {
  validate(cfg);
  if (cfg.widths.empty() || cfg.widths.front() != 2) throw ConfigError("ntk widths must start with input dimension 2");
  const auto data = ntk::make_two_blobs(cfg.seed, cfg.n_points, cfg.n_points);
  return ntk::train_and_trace(ntk::init_net(cfg.seed, cfg.widths), data, train_config(cfg));
}

}  // namespace postkernel

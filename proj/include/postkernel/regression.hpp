#pragma once

// Ridgeless kernel regression, its affine variant, the optimal linear
// predictor, and expected squared risk under a prior.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "postkernel/errors.hpp"
#include "postkernel/kernel_metrics.hpp"
#include "postkernel/priors.hpp"
#include "postkernel/random.hpp"

namespace postkernel {

/// Labels with norm below this make posterior-kernel KR collapse to zero.
inline constexpr double kDegenerateLabelNorm = 1e-12;
inline constexpr double kExactRiskBudget = 1e7;

template <class K>
concept GridKernel = std::invocable<const K&, std::size_t, std::size_t> &&
                     std::convertible_to<std::invoke_result_t<const K&, std::size_t, std::size_t>, double>;

inline bool degenerate_labels(const Vector& y) { return y.norm() < kDegenerateLabelNorm; }

/// k_xX K_XX^+ Y.
inline double kr_predict(const Vector& k_xX, const Matrix& k_XX, const Vector& y, double rtol = kDefaultRtol) {
  if (k_xX.size() != k_XX.rows() || y.size() != k_XX.rows()) {
    throw DimensionMismatchError("kr_predict: kernel row, Gram matrix and labels disagree in length");
  }
  return k_xX.dot(pseudoinverse(k_XX, rtol) * y);
}

/// KR over every grid point with the Gram pseudoinverse formed once.
template <GridKernel K>
FunctionTable kr_predict_grid(const K& kernel, std::size_t m, const Dataset& d, double rtol = kDefaultRtol) {
  validate(d, m, std::numeric_limits<double>::infinity());
  const auto n = static_cast<Eigen::Index>(d.size());
  if (n == 0) return FunctionTable::Zero(static_cast<Eigen::Index>(m));
  Matrix gram(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) gram(a, b) = kernel(d.x[static_cast<std::size_t>(a)], d.x[static_cast<std::size_t>(b)]);
  }
  const Vector w = pseudoinverse(gram, rtol) * d.y;
  FunctionTable out(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) s += kernel(i, d.x[static_cast<std::size_t>(a)]) * w(a);
    out(static_cast<Eigen::Index>(i)) = s;
  }
  return out;
}

/// Grid KR with a kernel given as its full m x m matrix.
inline FunctionTable kr_predict_grid(const Matrix& kernel, const Dataset& d, double rtol = kDefaultRtol) {
  if (kernel.rows() != kernel.cols()) throw DimensionMismatchError("grid kernel matrix is not square");
  const auto m = static_cast<std::size_t>(kernel.rows());
  validate(d, m, std::numeric_limits<double>::infinity());
  if (d.empty()) return FunctionTable::Zero(kernel.rows());
  IndexList all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Vector w = pseudoinverse(gather(kernel, d.x, d.x), rtol) * d.y;
  return gather(kernel, all, d.x) * w;
}

struct PosteriorKrResult {
  FunctionTable prediction;
  /// Y = 0: the prediction is 0 regardless of the posterior mean.
  bool degenerate = false;
};

/// KR with the posterior kernel of `prior` given `d`.
inline PosteriorKrResult posterior_kernel_kr(const Prior& prior, const Dataset& d,
                                             double match_tol = kDefaultMatchTol, double rtol = kDefaultRtol) {
  const Posterior post = condition(prior, d, match_tol, rtol);
  return {kr_predict_grid(posterior_kernel_matrix(post), d, rtol), degenerate_labels(d.y)};
}

/// K_cov(x,X) K_cov(X,X)^+ (Y - fbar(X)) + fbar(x) at every grid point.
inline FunctionTable affine_kr_predict_grid(const Prior& prior, const Dataset& d, double rtol = kDefaultRtol) {
  const Vector fbar = mean_vector(prior);
  Dataset centered = d;
  centered.y = d.y - gather(fbar, d.x);
  return kr_predict_grid(covariance_matrix(prior), centered, rtol) + fbar;
}

inline double affine_kr_predict(const Prior& prior, const Dataset& d, std::size_t i, double rtol = kDefaultRtol) {
  check_index(prior, i);
  return affine_kr_predict_grid(prior, d, rtol)(static_cast<Eigen::Index>(i));
}

/// Minimizer a of E_f[(f(x_i) - a^T f(X))^2]: K_prior(X,X)^+ K_prior(X,x_i).
inline Vector optimal_linear_coefficients(const Prior& prior, const IndexList& x, std::size_t i,
                                          double rtol = kDefaultRtol) {
  check_index(prior, i);
  for (std::size_t xi : x) check_index(prior, xi);
  const Matrix k = second_moment_matrix(prior);
  const IndexList test{i};
  return pseudoinverse(gather(k, x, x), rtol) * gather(k, x, test);
}

// ---------------------------------------------------------------------------
// Predictors and expected risk

using Predictor = std::function<FunctionTable(const Dataset&)>;

inline Predictor prior_kernel_predictor(const Prior& prior, double rtol = kDefaultRtol) {
  return [k = second_moment_matrix(prior), rtol](const Dataset& d) { return kr_predict_grid(k, d, rtol); };
}

inline Predictor affine_kr_predictor(const Prior& prior, double rtol = kDefaultRtol) {
  return [cov = covariance_matrix(prior), fbar = mean_vector(prior), rtol](const Dataset& d) {
    Dataset centered = d;
    centered.y = d.y - gather(fbar, d.x);
    return FunctionTable(kr_predict_grid(cov, centered, rtol) + fbar);
  };
}

inline Predictor posterior_kernel_predictor(const Prior& prior, double match_tol = kDefaultMatchTol,
                                            double rtol = kDefaultRtol) {
  return [prior, match_tol, rtol](const Dataset& d) { return posterior_kernel_kr(prior, d, match_tol, rtol).prediction; };
}

inline Predictor posterior_mean_predictor(const Prior& prior, double match_tol = kDefaultMatchTol,
                                          double rtol = kDefaultRtol) {
  return [prior, match_tol, rtol](const Dataset& d) { return posterior_mean_vector(condition(prior, d, match_tol, rtol)); };
}

inline Predictor zero_predictor(std::size_t m) {
  return [m](const Dataset&) { return FunctionTable(FunctionTable::Zero(static_cast<Eigen::Index>(m))); };
}

enum class RiskMode { exact, monte_carlo };

struct RiskEstimate {
  double risk = 0.0;
  double std_error = 0.0;
};

/// Squared error of `pred` against `f`, averaged under the test measure.
inline double weighted_loss(const FunctionTable& pred, const FunctionTable& f, const Vector& mu_x) {
  return mu_x.dot((pred - f).cwiseAbs2());
}

namespace detail {

inline double tuple_count(std::size_t m, std::size_t n) { return std::pow(static_cast<double>(m), static_cast<double>(n)); }

/// Calls visit(X, P(X)) for every X in support(mu)^n.
template <class Visit>
void for_each_train_tuple(const Vector& mu, std::size_t n, Visit&& visit) {
  IndexList support;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (mu(i) > 0.0) support.push_back(static_cast<std::size_t>(i));
  }
  std::vector<std::size_t> digit(n, 0);
  IndexList x(n);
  while (true) {
    double p = 1.0;
    for (std::size_t a = 0; a < n; ++a) {
      x[a] = support[digit[a]];
      p *= mu(static_cast<Eigen::Index>(x[a]));
    }
    visit(x, p);
    std::size_t a = 0;
    while (a < n && ++digit[a] == support.size()) digit[a++] = 0;
    if (a == n) break;
  }
}

}  // namespace detail

/// Per-sample losses of `predictor` on (f, X) pairs drawn from the prior and
/// from mu_x^n. Sample s uses stream s of `seed`, so two predictors evaluated
/// with the same seed see the same draws.
inline std::vector<double> risk_samples(const Prior& prior, const Vector& mu_x, const Predictor& predictor,
                                        std::size_t n_train, std::size_t samples, std::uint64_t seed) {
  validate_pmf(mu_x, grid_size(prior), "train/test measure");
  std::vector<double> mu_w(mu_x.data(), mu_x.data() + mu_x.size());
  std::vector<double> losses;
  losses.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng = make_rng(seed, s);
    const FunctionTable f = sample(prior, rng);
    IndexList x(n_train);
    for (auto& xi : x) xi = detail::draw_index(mu_w, rng);
    losses.push_back(weighted_loss(predictor(observe(f, std::move(x))), f, mu_x));
  }
  return losses;
}

inline RiskEstimate mean_and_stderr(const std::vector<double>& v) {
  RiskEstimate out;
  if (v.empty()) return out;
  const double n = static_cast<double>(v.size());
  out.risk = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.risk) * (x - out.risk);
    out.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

/// Exact enumeration over ensemble members and X in grid^n_train, both
/// weighted by their probabilities.
inline RiskEstimate exact_risk(const DiscreteEnsemblePrior& prior, const Vector& mu_x, const Predictor& predictor,
                               std::size_t n_train) {
  validate(Prior{prior});
  validate_pmf(mu_x, grid_size(Prior{prior}), "train/test measure");
  const double work = static_cast<double>(prior.functions.size()) * detail::tuple_count(static_cast<std::size_t>(mu_x.size()), n_train);
  if (work > kExactRiskBudget) {
    throw BudgetExceededError("exact risk needs " + std::to_string(work) +
                              " (function, training set) evaluations, over the 1e7 budget; use monte-carlo mode");
  }
  double risk = 0.0;
  for (std::size_t k = 0; k < prior.functions.size(); ++k) {
    if (prior.weights[k] <= 0.0) continue;
    const FunctionTable& f = prior.functions[k];
    detail::for_each_train_tuple(mu_x, n_train, [&](const IndexList& x, double px) {
      risk += prior.weights[k] * px * weighted_loss(predictor(observe(f, x)), f, mu_x);
    });
  }
  return {risk, 0.0};
}

inline RiskEstimate expected_risk(const Prior& prior, const Vector& mu_x, const Predictor& predictor, std::size_t n_train,
                                  RiskMode mode, std::size_t samples = 10000, std::uint64_t seed = 0) {
  if (mode == RiskMode::exact) {
    const auto* ens = std::get_if<DiscreteEnsemblePrior>(&prior);
    if (ens == nullptr) {
      throw BudgetExceededError("exact risk is only available for discrete ensembles; use monte-carlo mode");
    }
    return exact_risk(*ens, mu_x, predictor, n_train);
  }
  return mean_and_stderr(risk_samples(prior, mu_x, predictor, n_train, samples, seed));
}

/// Paired Monte Carlo estimate of risk(a) - risk(b) on shared draws.
inline RiskEstimate paired_risk_difference(const Prior& prior, const Vector& mu_x, const Predictor& a, const Predictor& b,
                                           std::size_t n_train, std::size_t samples, std::uint64_t seed) {
  auto la = risk_samples(prior, mu_x, a, n_train, samples, seed);
  const auto lb = risk_samples(prior, mu_x, b, n_train, samples, seed);
  for (std::size_t s = 0; s < la.size(); ++s) la[s] -= lb[s];
  return mean_and_stderr(la);
}

}  // namespace postkernel

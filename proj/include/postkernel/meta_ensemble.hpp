#pragma once

// Finite meta-measures over (target, train measure, test measure) triples,
// where the inputs themselves carry information about the target.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "postkernel/errors.hpp"
#include "postkernel/kernel_metrics.hpp"
#include "postkernel/priors.hpp"
#include "postkernel/regression.hpp"

namespace postkernel {

struct MetaTask {
  FunctionTable f;
  Vector train_pmf;
  Vector test_pmf;
};

/// Probability of drawing the training inputs as a set, replacing the i.i.d.
/// product of the task's train pmf. Arguments: task index, training inputs.
using JointSetWeight = std::function<double(std::size_t, std::span<const std::size_t>)>;

struct MetaEnsemble {
  std::vector<MetaTask> tasks;
  std::vector<double> weights;
  JointSetWeight joint_set_weight;  // empty: i.i.d. draws from train_pmf

  std::size_t grid_size() const { return tasks.empty() ? 0 : static_cast<std::size_t>(tasks.front().f.size()); }
};

inline void validate(const MetaEnsemble& ens) {
  detail::validate_weights(ens.weights, ens.tasks.size(), "meta-ensemble");
  const std::size_t m = ens.grid_size();
  if (m == 0) throw InvalidPriorError("meta-ensemble over an empty grid");
  for (const auto& t : ens.tasks) {
    if (static_cast<std::size_t>(t.f.size()) != m || !t.f.allFinite()) {
      throw InvalidPriorError("meta-task function has the wrong length or non-finite values");
    }
    validate_pmf(t.train_pmf, m, "meta-task train pmf");
    validate_pmf(t.test_pmf, m, "meta-task test pmf");
  }
}

struct MetaConditioning {
  double match_tol = kDefaultMatchTol;
  /// Include the test_pmf(x) factor, i.e. condition on the test point too.
  bool condition_on_test_point = true;
};

/// Posterior weights over tasks given X, Y and the test point x.
inline std::vector<double> condition_meta(const MetaEnsemble& ens, const IndexList& x, const Vector& y, std::size_t test,
                                          const MetaConditioning& opts = {}) {
  validate(ens);
  const std::size_t m = ens.grid_size();
  if (static_cast<std::size_t>(y.size()) != x.size()) throw DimensionMismatchError("X and Y lengths differ");
  if (test >= m) throw IndexOutOfRangeError("test index " + std::to_string(test) + " out of range");
  for (auto xi : x) {
    if (xi >= m) throw IndexOutOfRangeError("train index " + std::to_string(xi) + " out of range");
  }
  std::vector<double> w(ens.tasks.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < ens.tasks.size(); ++k) {
    const MetaTask& t = ens.tasks[k];
    const double dev = x.empty() ? 0.0 : (gather(t.f, x) - y).lpNorm<Eigen::Infinity>();
    if (dev > opts.match_tol) continue;
    double p = ens.weights[k];
    if (ens.joint_set_weight) {
      p *= ens.joint_set_weight(k, x);
    } else {
      for (auto xi : x) p *= t.train_pmf(static_cast<Eigen::Index>(xi));
    }
    if (opts.condition_on_test_point) p *= t.test_pmf(static_cast<Eigen::Index>(test));
    w[k] = p;
    total += p;
  }
  if (!(total > 0.0)) throw InconsistentDatasetError("no task in the meta-ensemble can produce this observation");
  for (double& v : w) v /= total;
  return w;
}

/// Posterior mean of f(x) given (X, Y, x): the optimal predictor.
inline double f_opt_gen(const MetaEnsemble& ens, const IndexList& x, const Vector& y, std::size_t test,
                        const MetaConditioning& opts = {}) {
  const auto w = condition_meta(ens, x, y, test, opts);
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * ens.tasks[k].f(static_cast<Eigen::Index>(test));
  return s;
}

/// E[f(a) f(b) | X, Y, test] with weights conditioned on `test`.
inline double posterior_kernel_gen(const MetaEnsemble& ens, const IndexList& x, const Vector& y, std::size_t test,
                                   std::size_t a, std::size_t b, const MetaConditioning& opts = {}) {
  const std::size_t m = ens.grid_size();
  if (a >= m || b >= m) throw IndexOutOfRangeError("kernel argument out of range");
  const auto w = condition_meta(ens, x, y, test, opts);
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    s += w[k] * ens.tasks[k].f(static_cast<Eigen::Index>(a)) * ens.tasks[k].f(static_cast<Eigen::Index>(b));
  }
  return s;
}

/// KR at `test` with the generalized posterior kernel: both the Gram matrix
/// and the kernel row use weights conditioned on this test point.
inline double kr_predict_gen(const MetaEnsemble& ens, const IndexList& x, const Vector& y, std::size_t test,
                             const MetaConditioning& opts = {}, double rtol = kDefaultRtol) {
  const auto w = condition_meta(ens, x, y, test, opts);
  const auto n = static_cast<Eigen::Index>(x.size());
  Matrix gram = Matrix::Zero(n, n);
  Vector row = Vector::Zero(n);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] == 0.0) continue;
    const Vector fx = gather(ens.tasks[k].f, x);
    gram.noalias() += w[k] * fx * fx.transpose();
    row += w[k] * ens.tasks[k].f(static_cast<Eigen::Index>(test)) * fx;
  }
  return kr_predict(row, gram, y, rtol);
}

/// Prior kernel of the meta-ensemble, ignoring what X and x reveal.
inline Matrix meta_prior_kernel(const MetaEnsemble& ens) {
  const auto m = static_cast<Eigen::Index>(ens.grid_size());
  Matrix k = Matrix::Zero(m, m);
  for (std::size_t t = 0; t < ens.tasks.size(); ++t) k.noalias() += ens.weights[t] * ens.tasks[t].f * ens.tasks[t].f.transpose();
  return k;
}

/// Predictor of f(test) from (X, Y).
using MetaPredictor = std::function<double(const IndexList&, const Vector&, std::size_t)>;

/// Exact expected squared risk: tasks by weight, X by the task's train
/// measure (or joint set weight), test point by the task's test pmf.
inline double meta_exact_risk(const MetaEnsemble& ens, const MetaPredictor& predictor, std::size_t n_train) {
  validate(ens);
  const std::size_t m = ens.grid_size();
  const double work = static_cast<double>(ens.tasks.size()) * detail::tuple_count(m, n_train) * static_cast<double>(m);
  if (work > kExactRiskBudget) throw BudgetExceededError("meta-ensemble exact risk over the 1e7 budget");
  double risk = 0.0;
  const Vector everywhere = Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
  for (std::size_t k = 0; k < ens.tasks.size(); ++k) {
    const MetaTask& t = ens.tasks[k];
    if (ens.weights[k] <= 0.0) continue;
    const Vector& enumerate_over = ens.joint_set_weight ? everywhere : t.train_pmf;
    detail::for_each_train_tuple(enumerate_over, n_train, [&](const IndexList& x, double px) {
      const double p_x = ens.joint_set_weight ? ens.joint_set_weight(k, x) : px;
      if (p_x <= 0.0) return;
      const Vector y = gather(t.f, x);
      for (std::size_t s = 0; s < m; ++s) {
        const double q = t.test_pmf(static_cast<Eigen::Index>(s));
        if (q <= 0.0) continue;
        const double e = predictor(x, y, s) - t.f(static_cast<Eigen::Index>(s));
        risk += ens.weights[k] * p_x * q * e * e;
      }
    });
  }
  return risk;
}

/// The same meta-ensemble viewed as a plain ensemble prior over f.
inline DiscreteEnsemblePrior function_marginal(const MetaEnsemble& ens) {
  DiscreteEnsemblePrior p;
  for (std::size_t k = 0; k < ens.tasks.size(); ++k) {
    p.functions.push_back(ens.tasks[k].f);
    p.weights.push_back(ens.weights[k]);
  }
  return p;
}

}  // namespace postkernel

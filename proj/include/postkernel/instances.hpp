#pragma once

// Seeded random problem instances for verification runs.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "postkernel/meta_ensemble.hpp"
#include "postkernel/priors.hpp"
#include "postkernel/random.hpp"

namespace postkernel::instances {

inline std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Random pmf over m points with every entry positive.
inline Vector random_pmf(Rng& rng, std::size_t m) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Vector p(static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng);
  return p / p.sum();
}

/// Functions with values in {-2, -1, 0, 1, 2}, so distinct members often
/// agree on a training set and conditioning keeps several of them.
inline DiscreteEnsemblePrior random_ensemble(Rng& rng, std::size_t functions, std::size_t m) {
  std::uniform_int_distribution<int> value(-2, 2);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  DiscreteEnsemblePrior p;
  for (std::size_t k = 0; k < functions; ++k) {
    FunctionTable f(static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = value(rng);
    p.functions.push_back(f);
    p.weights.push_back(weight(rng));
  }
  p.weights = detail::normalized(std::move(p.weights));
  return p;
}

/// Random covariance A A^T / rank + jitter I with an optional random mean.
inline GaussianPrior random_gaussian(Rng& rng, std::size_t m, bool centered, double jitter = 1e-3) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto mm = static_cast<Eigen::Index>(m);
  Matrix a(mm, mm);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  GaussianPrior g;
  g.covariance = a * a.transpose() / static_cast<double>(m) + jitter * Matrix::Identity(mm, mm);
  g.mean = Vector::Zero(mm);
  if (!centered) {
    for (Eigen::Index i = 0; i < mm; ++i) g.mean(i) = normal(rng);
  }
  return g;
}

inline IndexList draw_inputs(Rng& rng, const Vector& pmf, std::size_t n) {
  std::vector<double> w(pmf.data(), pmf.data() + pmf.size());
  IndexList x(n);
  for (auto& xi : x) xi = detail::draw_index(w, rng);
  return x;
}

inline IndexList distinct_inputs(Rng& rng, std::size_t m, std::size_t n) {
  IndexList all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(n, m));
  return all;
}

/// Tasks with values in {-1, 0, 1} and random, partly sparse train/test pmfs.
inline MetaEnsemble random_meta_ensemble(Rng& rng, std::size_t tasks, std::size_t m) {
  std::uniform_int_distribution<int> value(-1, 1);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  std::bernoulli_distribution drop(0.3);
  const auto sparse_pmf = [&] {
    Vector p = random_pmf(rng, m);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (drop(rng)) p(i) = 0.0;
    }
    if (p.sum() == 0.0) p(static_cast<Eigen::Index>(uniform_size(rng, 0, m - 1))) = 1.0;
    return Vector(p / p.sum());
  };
  MetaEnsemble e;
  for (std::size_t k = 0; k < tasks; ++k) {
    MetaTask t;
    t.f = FunctionTable(static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < t.f.size(); ++i) t.f(i) = value(rng);
    t.train_pmf = sparse_pmf();
    t.test_pmf = sparse_pmf();
    e.tasks.push_back(std::move(t));
    e.weights.push_back(weight(rng));
  }
  e.weights = detail::normalized(std::move(e.weights));
  return e;
}

}  // namespace postkernel::instances

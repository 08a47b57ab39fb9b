#pragma once

// Explicit function priors over a finite input grid, their moments, and
// Bayesian conditioning on a noiseless training set.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "postkernel/errors.hpp"
#include "postkernel/kernel_metrics.hpp"
#include "postkernel/random.hpp"

namespace postkernel {

inline constexpr double kDefaultMatchTol = 1e-9;
inline constexpr double kPmfTol = 1e-12;
/// Gaussian posterior covariance entries below this magnitude are set to zero.
inline constexpr double kVarianceClamp = 1e-12;
/// Relative residual above which a Gaussian cannot have produced Y.
inline constexpr double kSupportTol = 1e-6;

/// Values of a target function, one per grid point.
using FunctionTable = Vector;
using IndexList = std::vector<std::size_t>;

struct InputGrid {
  std::vector<Vector> points;
  Vector test_pmf;

  std::size_t size() const { return points.size(); }
};

inline void validate_pmf(const Vector& pmf, std::size_t m, const std::string& what) {
  if (static_cast<std::size_t>(pmf.size()) != m) {
    throw InvalidPriorError(what + " has " + std::to_string(pmf.size()) + " entries, expected " +
                            std::to_string(m));
  }
  if (!pmf.allFinite() || pmf.minCoeff() < 0.0) throw InvalidPriorError(what + " has negative or non-finite mass");
  if (std::abs(pmf.sum() - 1.0) > kPmfTol) throw InvalidPriorError(what + " does not sum to 1");
}

inline void validate(const InputGrid& grid) {
  if (grid.points.empty()) throw InvalidPriorError("input grid is empty");
  const auto dim = grid.points.front().size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.points[i].size() != dim) throw InvalidPriorError("grid points have mixed dimension");
    for (std::size_t j = 0; j < i; ++j) {
      if (grid.points[i] == grid.points[j]) {
        throw InvalidPriorError("grid points " + std::to_string(j) + " and " + std::to_string(i) +
                                " coincide");
      }
    }
  }
  validate_pmf(grid.test_pmf, grid.size(), "test pmf");
}

/// Uniform test measure over m points on the integer line 0..m-1.
inline InputGrid uniform_grid(std::size_t m) {
  InputGrid grid;
  for (std::size_t i = 0; i < m; ++i) grid.points.push_back(Vector::Constant(1, static_cast<double>(i)));
  grid.test_pmf = Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
  return grid;
}

/// Training inputs as grid indices (repeats allowed) and their labels.
struct Dataset {
  IndexList x;
  Vector y;

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }
};

inline Dataset observe(const FunctionTable& f, IndexList x) {
  Dataset d;
  d.x = std::move(x);
  d.y.resize(static_cast<Eigen::Index>(d.x.size()));
  for (std::size_t i = 0; i < d.x.size(); ++i) d.y(static_cast<Eigen::Index>(i)) = f(static_cast<Eigen::Index>(d.x[i]));
  return d;
}

inline void validate(const Dataset& d, std::size_t m, double match_tol = kDefaultMatchTol) {
  if (static_cast<std::size_t>(d.y.size()) != d.x.size()) {
    throw DimensionMismatchError("dataset has " + std::to_string(d.x.size()) + " inputs but " +
                                 std::to_string(d.y.size()) + " labels");
  }
  if (!d.y.allFinite()) throw InconsistentDatasetError("dataset has non-finite labels");
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    if (d.x[i] >= m) throw IndexOutOfRangeError("dataset index " + std::to_string(d.x[i]) + " out of range");
    for (std::size_t j = 0; j < i; ++j) {
      if (d.x[i] == d.x[j] &&
          std::abs(d.y(static_cast<Eigen::Index>(i)) - d.y(static_cast<Eigen::Index>(j))) > match_tol) {
        throw InconsistentDatasetError("repeated input " + std::to_string(d.x[i]) + " has conflicting labels");
      }
    }
  }
}

inline Vector gather(const Vector& v, std::span<const std::size_t> idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  return out;
}

inline Matrix gather(const Matrix& k, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          k(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prior families

struct DiscreteEnsemblePrior {
  std::vector<FunctionTable> functions;
  std::vector<double> weights;
};

struct GaussianPrior {
  Vector mean;
  Matrix covariance;
};

struct GaussianMixturePrior {
  std::vector<GaussianPrior> components;
  std::vector<double> weights;
};

using Prior = std::variant<DiscreteEnsemblePrior, GaussianPrior, GaussianMixturePrior>;

/// A conditioned distribution (same family as the prior it came from) and the
/// data it was conditioned on.
struct Posterior {
  Prior distribution;
  Dataset data;
};

namespace detail {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

inline void validate_weights(const std::vector<double>& w, std::size_t count, const std::string& what) {
  if (count == 0) throw InvalidPriorError(what + " has no members");
  if (w.size() != count) throw InvalidPriorError(what + " weight count does not match member count");
  double total = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) throw InvalidPriorError(what + " has a negative or non-finite weight");
    total += x;
  }
  if (std::abs(total - 1.0) > kPmfTol) throw InvalidPriorError(what + " weights do not sum to 1");
}

inline void validate_gaussian(const GaussianPrior& g) {
  if (g.mean.size() == 0) throw InvalidPriorError("Gaussian prior over an empty grid");
  if (g.covariance.rows() != g.mean.size() || g.covariance.cols() != g.mean.size()) {
    throw InvalidPriorError("Gaussian covariance does not match mean length");
  }
  if (!g.mean.allFinite()) throw InvalidPriorError("Gaussian mean is not finite");
  const auto s = spectral_decomposition(g.covariance);
  const double lmax = s.eigenvalues(0);
  if (s.eigenvalues.minCoeff() < -1e-8 * std::max(lmax, 0.0)) {
    throw InvalidPriorError("Gaussian covariance is not positive semidefinite");
  }
}

inline std::vector<double> normalized(std::vector<double> w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

}  // namespace detail

inline std::size_t grid_size(const Prior& prior) {
  return std::visit(detail::Overloaded{
                        [](const DiscreteEnsemblePrior& p) -> std::size_t {
                          return p.functions.empty() ? 0 : static_cast<std::size_t>(p.functions.front().size());
                        },
                        [](const GaussianPrior& p) -> std::size_t { return static_cast<std::size_t>(p.mean.size()); },
                        [](const GaussianMixturePrior& p) -> std::size_t {
                          return p.components.empty() ? 0 : static_cast<std::size_t>(p.components.front().mean.size());
                        },
                    },
                    prior);
}

inline void validate(const Prior& prior) {
  std::visit(detail::Overloaded{
                 [](const DiscreteEnsemblePrior& p) {
                   detail::validate_weights(p.weights, p.functions.size(), "ensemble");
                   const auto m = p.functions.front().size();
                   if (m == 0) throw InvalidPriorError("ensemble over an empty grid");
                   for (const auto& f : p.functions) {
                     if (f.size() != m) throw InvalidPriorError("ensemble functions have mixed lengths");
                     if (!f.allFinite()) throw InvalidPriorError("ensemble function is not finite");
                   }
                 },
                 [](const GaussianPrior& p) { detail::validate_gaussian(p); },
                 [](const GaussianMixturePrior& p) {
                   detail::validate_weights(p.weights, p.components.size(), "mixture");
                   const auto m = p.components.front().mean.size();
                   for (const auto& c : p.components) {
                     if (c.mean.size() != m) throw InvalidPriorError("mixture components have mixed grid sizes");
                     detail::validate_gaussian(c);
                   }
                 },
             },
             prior);
}

inline DiscreteEnsemblePrior make_ensemble(std::vector<FunctionTable> functions, std::vector<double> weights) {
  DiscreteEnsemblePrior p{std::move(functions), std::move(weights)};
  validate(Prior{p});
  return p;
}

inline DiscreteEnsemblePrior make_uniform_ensemble(std::vector<FunctionTable> functions) {
  std::vector<double> w(functions.size(), 1.0 / static_cast<double>(functions.size()));
  return make_ensemble(std::move(functions), std::move(w));
}

inline DiscreteEnsemblePrior point_mass(FunctionTable f) { return make_ensemble({std::move(f)}, {1.0}); }

// ---------------------------------------------------------------------------
// Moments

/// E[f(x_i)] for every grid point.
inline Vector mean_vector(const Prior& prior) {
  return std::visit(detail::Overloaded{
                        [](const DiscreteEnsemblePrior& p) {
                          Vector m = Vector::Zero(p.functions.front().size());
                          for (std::size_t k = 0; k < p.functions.size(); ++k) m += p.weights[k] * p.functions[k];
                          return m;
                        },
                        [](const GaussianPrior& p) { return Vector(p.mean); },
                        [](const GaussianMixturePrior& p) {
                          Vector m = Vector::Zero(p.components.front().mean.size());
                          for (std::size_t k = 0; k < p.components.size(); ++k) m += p.weights[k] * p.components[k].mean;
                          return m;
                        },
                    },
                    prior);
}

/// E[f(x_i) f(x_j)] over the whole grid: the prior kernel as a matrix.
inline Matrix second_moment_matrix(const Prior& prior) {
  return std::visit(detail::Overloaded{
                        [](const DiscreteEnsemblePrior& p) {
                          const auto m = p.functions.front().size();
                          Matrix k = Matrix::Zero(m, m);
                          for (std::size_t c = 0; c < p.functions.size(); ++c) {
                            k.noalias() += p.weights[c] * p.functions[c] * p.functions[c].transpose();
                          }
                          return k;
                        },
                        [](const GaussianPrior& p) { return Matrix(p.covariance + p.mean * p.mean.transpose()); },
                        [](const GaussianMixturePrior& p) {
                          const auto m = p.components.front().mean.size();
                          Matrix k = Matrix::Zero(m, m);
                          for (std::size_t c = 0; c < p.components.size(); ++c) {
                            const auto& g = p.components[c];
                            k.noalias() += p.weights[c] * (g.covariance + g.mean * g.mean.transpose());
                          }
                          return k;
                        },
                    },
                    prior);
}

inline Matrix covariance_matrix(const Prior& prior) {
  if (const auto* g = std::get_if<GaussianPrior>(&prior)) return g->covariance;
  const Vector m = mean_vector(prior);
  return second_moment_matrix(prior) - m * m.transpose();
}

inline void check_index(const Prior& prior, std::size_t i) {
  if (i >= grid_size(prior)) throw IndexOutOfRangeError("grid index " + std::to_string(i) + " out of range");
}

inline double prior_mean(const Prior& prior, std::size_t i) {
  check_index(prior, i);
  const auto ii = static_cast<Eigen::Index>(i);
  return std::visit(detail::Overloaded{
                        [ii](const DiscreteEnsemblePrior& p) {
                          double s = 0.0;
                          for (std::size_t k = 0; k < p.functions.size(); ++k) s += p.weights[k] * p.functions[k](ii);
                          return s;
                        },
                        [ii](const GaussianPrior& p) { return p.mean(ii); },
                        [ii](const GaussianMixturePrior& p) {
                          double s = 0.0;
                          for (std::size_t k = 0; k < p.components.size(); ++k) s += p.weights[k] * p.components[k].mean(ii);
                          return s;
                        },
                    },
                    prior);
}

inline double prior_kernel(const Prior& prior, std::size_t i, std::size_t j) {
  check_index(prior, i);
  check_index(prior, j);
  const auto ii = static_cast<Eigen::Index>(i);
  const auto jj = static_cast<Eigen::Index>(j);
  const auto gaussian = [ii, jj](const GaussianPrior& g) { return g.covariance(ii, jj) + g.mean(ii) * g.mean(jj); };
  return std::visit(detail::Overloaded{
                        [ii, jj](const DiscreteEnsemblePrior& p) {
                          double s = 0.0;
                          for (std::size_t k = 0; k < p.functions.size(); ++k) {
                            s += p.weights[k] * p.functions[k](ii) * p.functions[k](jj);
                          }
                          return s;
                        },
                        gaussian,
                        [&gaussian](const GaussianMixturePrior& p) {
                          double s = 0.0;
                          for (std::size_t k = 0; k < p.components.size(); ++k) s += p.weights[k] * gaussian(p.components[k]);
                          return s;
                        },
                    },
                    prior);
}

inline double covariance_kernel(const Prior& prior, std::size_t i, std::size_t j) {
  if (const auto* g = std::get_if<GaussianPrior>(&prior)) {
    check_index(prior, i);
    check_index(prior, j);
    return g->covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return prior_kernel(prior, i, j) - prior_mean(prior, i) * prior_mean(prior, j);
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline std::size_t draw_index(const std::vector<double>& weights, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return k;
  }
  // Round-off can leave acc slightly below 1; fall back to the last member
  // with positive weight.
  for (std::size_t k = weights.size(); k-- > 0;) {
    if (weights[k] > 0.0) return k;
  }
  return weights.size() - 1;
}

inline FunctionTable draw_gaussian(const GaussianPrior& g, Rng& rng) {
  const auto s = spectral_decomposition(g.covariance);
  const Vector scale = s.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(g.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return g.mean + s.eigenvectors * scale.cwiseProduct(z);
}

}  // namespace detail

inline FunctionTable sample(const Prior& prior, Rng& rng) {
  return std::visit(detail::Overloaded{
                        [&rng](const DiscreteEnsemblePrior& p) {
                          return FunctionTable(p.functions[detail::draw_index(p.weights, rng)]);
                        },
                        [&rng](const GaussianPrior& p) { return detail::draw_gaussian(p, rng); },
                        [&rng](const GaussianMixturePrior& p) {
                          return detail::draw_gaussian(p.components[detail::draw_index(p.weights, rng)], rng);
                        },
                    },
                    prior);
}

/// Deterministic in (prior, seed).
inline FunctionTable sample(const Prior& prior, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample(prior, rng);
}

// ---------------------------------------------------------------------------
// Conditioning

namespace detail {

struct MarginalFit {
  bool in_support = false;
  Eigen::Index rank = 0;
  double log_density = -std::numeric_limits<double>::infinity();
};

/// Density of Y under N(m_X, S_XX) restricted to the support of S_XX.
inline MarginalFit marginal_fit(const GaussianPrior& g, const Dataset& d, double rtol) {
  const Vector r = d.y - gather(g.mean, d.x);
  const Matrix s = gather(g.covariance, d.x, d.x);
  const auto dec = spectral_decomposition(s);
  const double lmax = dec.eigenvalues(0);
  MarginalFit fit;
  Vector resid = r;
  double quad = 0.0;
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < dec.eigenvalues.size(); ++i) {
    const double lam = dec.eigenvalues(i);
    if (!(lmax > 0.0) || lam <= rtol * lmax) continue;
    const double proj = dec.eigenvectors.col(i).dot(r);
    resid -= proj * dec.eigenvectors.col(i);
    quad += proj * proj / lam;
    logdet += std::log(2.0 * M_PI * lam);
    ++fit.rank;
  }
  const double scale = std::max(1.0, d.y.lpNorm<Eigen::Infinity>());
  fit.in_support = resid.lpNorm<Eigen::Infinity>() <= kSupportTol * scale;
  if (fit.in_support) fit.log_density = -0.5 * quad - 0.5 * logdet;
  return fit;
}

inline GaussianPrior condition_gaussian(const GaussianPrior& g, const Dataset& d, double rtol) {
  const Matrix s = gather(g.covariance, d.x, d.x);
  IndexList all(static_cast<std::size_t>(g.mean.size()));
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Matrix c = gather(g.covariance, all, d.x);
  const Matrix gain = c * pseudoinverse(s, rtol);
  GaussianPrior post;
  post.mean = g.mean + gain * (d.y - gather(g.mean, d.x));
  post.covariance = g.covariance - gain * c.transpose();
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();

  const double scale = std::max(1.0, d.y.lpNorm<Eigen::Infinity>());
  const double resid = (gather(post.mean, d.x) - d.y).lpNorm<Eigen::Infinity>();
  if (!(resid <= kSupportTol * scale)) {
    throw InconsistentDatasetError("labels lie outside the support of the Gaussian prior (residual " +
                                   std::to_string(resid) + ")");
  }
  // f(X) = Y holds with certainty under the posterior.
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const auto xi = static_cast<Eigen::Index>(d.x[i]);
    post.mean(xi) = d.y(static_cast<Eigen::Index>(i));
    post.covariance.row(xi).setZero();
    post.covariance.col(xi).setZero();
  }
  post.covariance = post.covariance.unaryExpr([](double v) { return std::abs(v) < kVarianceClamp ? 0.0 : v; });
  return post;
}

}  // namespace detail

/// Posterior of the prior given f(X) = Y. Ensembles keep members that match
/// within match_tol; Gaussians use standard conditioning with a
/// pseudoinverse; mixtures reweight components by their marginal density of
/// Y and condition each. An empty dataset returns the prior unchanged.
inline Posterior condition(const Prior& prior, const Dataset& d, double match_tol = kDefaultMatchTol,
                           double rtol = kDefaultRtol) {
  validate(d, grid_size(prior), match_tol);
  if (d.empty()) return Posterior{prior, d};

  Prior dist = std::visit(
      detail::Overloaded{
          [&](const DiscreteEnsemblePrior& p) -> Prior {
            DiscreteEnsemblePrior out;
            for (std::size_t k = 0; k < p.functions.size(); ++k) {
              if (p.weights[k] <= 0.0) continue;
              const double dev = (gather(p.functions[k], d.x) - d.y).lpNorm<Eigen::Infinity>();
              if (dev <= match_tol) {
                out.functions.push_back(p.functions[k]);
                out.weights.push_back(p.weights[k]);
              }
            }
            if (out.functions.empty()) throw InconsistentDatasetError("no ensemble member reproduces the dataset");
            out.weights = detail::normalized(std::move(out.weights));
            return out;
          },
          [&](const GaussianPrior& p) -> Prior { return detail::condition_gaussian(p, d, rtol); },
          [&](const GaussianMixturePrior& p) -> Prior {
            std::vector<detail::MarginalFit> fits;
            Eigen::Index min_rank = std::numeric_limits<Eigen::Index>::max();
            for (std::size_t k = 0; k < p.components.size(); ++k) {
              fits.push_back(detail::marginal_fit(p.components[k], d, rtol));
              if (fits.back().in_support && p.weights[k] > 0.0) min_rank = std::min(min_rank, fits.back().rank);
            }
            // Densities on supports of different dimension are not comparable;
            // the lowest-dimensional support carries all the posterior mass.
            std::vector<std::size_t> keep;
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < p.components.size(); ++k) {
              if (fits[k].in_support && p.weights[k] > 0.0 && fits[k].rank == min_rank) {
                keep.push_back(k);
                best = std::max(best, std::log(p.weights[k]) + fits[k].log_density);
              }
            }
            if (keep.empty() || !std::isfinite(best)) {
              throw InconsistentDatasetError("dataset has zero density under every mixture component");
            }
            GaussianMixturePrior out;
            for (std::size_t k : keep) {
              const double w = std::exp(std::log(p.weights[k]) + fits[k].log_density - best);
              if (w <= 0.0) continue;
              out.components.push_back(detail::condition_gaussian(p.components[k], d, rtol));
              out.weights.push_back(w);
            }
            out.weights = detail::normalized(std::move(out.weights));
            return out;
          },
      },
      prior);
  return Posterior{std::move(dist), d};
}

inline double posterior_mean(const Posterior& post, std::size_t i) { return prior_mean(post.distribution, i); }

inline double posterior_kernel(const Posterior& post, std::size_t i, std::size_t j) {
  return prior_kernel(post.distribution, i, j);
}

inline Vector posterior_mean_vector(const Posterior& post) { return mean_vector(post.distribution); }

inline Matrix posterior_kernel_matrix(const Posterior& post) { return second_moment_matrix(post.distribution); }

}  // namespace postkernel

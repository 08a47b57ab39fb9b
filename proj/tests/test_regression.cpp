#include <gtest/gtest.h>

#include <cmath>

#include "postkernel/instances.hpp"
#include "postkernel/regression.hpp"
#include "test_support.hpp"

using namespace postkernel;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

DiscreteEnsemblePrior four_functions() {
  return make_uniform_ensemble({vec({1, 1}), vec({1, -1}), vec({-1, 1}), vec({-1, -1})});
}

/// Weighted least squares over ensemble members, min-norm solution via COD:
/// argmin_a sum_k w_k (f_k(i) - a^T f_k(X))^2.
Vector least_squares_coefficients(const DiscreteEnsemblePrior& p, const IndexList& x, std::size_t i) {
  const auto rows = static_cast<Eigen::Index>(p.functions.size());
  Matrix a(rows, static_cast<Eigen::Index>(x.size()));
  Vector b(rows);
  for (Eigen::Index k = 0; k < rows; ++k) {
    const double s = std::sqrt(p.weights[static_cast<std::size_t>(k)]);
    const Vector& f = p.functions[static_cast<std::size_t>(k)];
    for (std::size_t c = 0; c < x.size(); ++c) a(k, Eigen::Index(c)) = s * f(Eigen::Index(x[c]));
    b(k) = s * f(Eigen::Index(i));
  }
  return a.completeOrthogonalDecomposition().solve(b);
}

}  // namespace

TEST(KrPredict, ScalarCase) {
  EXPECT_DOUBLE_EQ(kr_predict(vec({2.5}), Matrix::Identity(1, 1), vec({-3})), -7.5);
}

TEST(KrPredict, ZeroLabelsGiveZero) {
  Rng rng = make_rng(1);
  const Matrix k = testing_support::random_psd(rng, 4, 4);
  EXPECT_EQ(kr_predict(testing_support::random_vector(rng, 4), k, Vector::Zero(4)), 0.0);
}

TEST(KrPredict, TwoByTwoSolve) {
  Matrix k(2, 2);
  k << 2, 1, 1, 2;
  // K^{-1} = [[2,-1],[-1,2]]/3, k^T K^{-1} e1 = (2 - 1)/3.
  EXPECT_NEAR(kr_predict(vec({1, 1}), k, vec({1, 0})), 1.0 / 3.0, 1e-15);
}

TEST(KrPredict, DimensionMismatch) {
  EXPECT_THROW(kr_predict(vec({1, 2}), Matrix::Identity(3, 3), vec({1, 2, 3})), DimensionMismatchError);
  EXPECT_THROW(kr_predict(vec({1, 2}), Matrix::Identity(2, 2), vec({1, 2, 3})), DimensionMismatchError);
}

TEST(KrPredict, LinearInLabels) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = make_rng(seed);
    const Eigen::Index n = 1 + Eigen::Index(seed % 6);
    const Matrix k = testing_support::random_psd(rng, n, 1 + Eigen::Index(seed % std::uint64_t(n)));
    const Vector row = testing_support::random_vector(rng, n);
    const Vector y1 = testing_support::random_vector(rng, n);
    const Vector y2 = testing_support::random_vector(rng, n);
    const double a = 1.7, b = -0.4;
    const double lhs = kr_predict(row, k, a * y1 + b * y2);
    EXPECT_NEAR(lhs, a * kr_predict(row, k, y1) + b * kr_predict(row, k, y2), 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(KrPredict, OrthogonalPerturbationLeavesPredictionUnchanged) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = make_rng(seed);
    const Eigen::Index n = 2 + Eigen::Index(seed % 5);
    const Vector y = testing_support::random_vector(rng, n);
    Vector v = testing_support::random_vector(rng, n);
    v -= (v.dot(y) / y.squaredNorm()) * y;
    const double c = 0.1 + double(seed % 7);
    const Vector row = testing_support::random_vector(rng, n);
    const Matrix base = y * y.transpose();
    EXPECT_NEAR(kr_predict(row, base + c * v * v.transpose(), y), kr_predict(row, base, y), 1e-9);
  }
}

TEST(KrPredictGrid, IdentityGramPredictsKernelRowDotY) {
  // Train points 0,1 are orthonormal in the kernel; test point 2 correlates with both.
  Matrix k(3, 3);
  k << 1, 0, 0.3, 0, 1, -0.5, 0.3, -0.5, 1;
  const Dataset d{{0, 1}, vec({2, 4})};
  const FunctionTable out = kr_predict_grid(k, d);
  EXPECT_NEAR(out(2), 0.3 * 2 - 0.5 * 4, 1e-14);
  EXPECT_NEAR(out(0), 2.0, 1e-14);
}

TEST(KrPredictGrid, CallableAndMatrixFormsAgree) {
  Rng rng = make_rng(7);
  const Matrix k = testing_support::random_psd(rng, 6, 6);
  const Dataset d{{0, 3, 5}, testing_support::random_vector(rng, 3)};
  const FunctionTable a = kr_predict_grid(k, d);
  const FunctionTable b = kr_predict_grid([&](std::size_t i, std::size_t j) { return k(Eigen::Index(i), Eigen::Index(j)); }, 6, d);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KrPredictGrid, InterpolatesWithInvertibleGram) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    const Matrix k = testing_support::random_psd(rng, 8, 8) + 0.1 * Matrix::Identity(8, 8);
    const IndexList x = instances::distinct_inputs(rng, 8, 4);
    const Dataset d{x, testing_support::random_vector(rng, 4)};
    const FunctionTable out = kr_predict_grid(k, d);
    for (std::size_t a = 0; a < x.size(); ++a) EXPECT_NEAR(out(Eigen::Index(x[a])), d.y(Eigen::Index(a)), 1e-9);
  }
}

TEST(KrPredictGrid, GaussianPriorKernelIsGpPosteriorMean) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    const GaussianPrior g = instances::random_gaussian(rng, 7, true);
    const IndexList x = instances::distinct_inputs(rng, 7, 3);
    const Dataset d = observe(sample(Prior{g}, rng), x);
    const Vector oracle = testing_support::gp_posterior_mean(g.mean, g.covariance, x, d.y);
    EXPECT_LE((kr_predict_grid(second_moment_matrix(g), d) - oracle).cwiseAbs().maxCoeff(), 1e-9) << "seed " << seed;
  }
}

TEST(PosteriorKernelKr, EqualsEnumeratedPosteriorMean) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng = make_rng(seed);
    const std::size_t m = 2 + seed % 8;
    const auto prior = instances::random_ensemble(rng, 4 + seed % 20, m);
    const Dataset d = observe(sample(Prior{prior}, rng), instances::draw_inputs(rng, Vector::Constant(Eigen::Index(m), 1.0 / m), 1 + seed % 4));
    const PosteriorKrResult r = posterior_kernel_kr(prior, d);
    if (r.degenerate) continue;
    const Vector oracle = testing_support::enumerated_posterior_mean(prior, d.x, d.y);
    EXPECT_LE((r.prediction - oracle).cwiseAbs().maxCoeff(), 1e-9) << "seed " << seed;
  }
}

TEST(PosteriorKernelKr, ZeroLabelsAreFlagged) {
  const auto prior = make_uniform_ensemble({vec({0, 1}), vec({0, -1}), vec({0, 3})});
  const PosteriorKrResult r = posterior_kernel_kr(prior, Dataset{{0}, vec({0})});
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.prediction, Vector::Zero(2));
  EXPECT_NEAR(posterior_mean(condition(prior, Dataset{{0}, vec({0})}), 1), 1.0, 1e-15);
}

TEST(AffineKr, CenteredPriorReducesToCovarianceKr) {
  Rng rng = make_rng(3);
  const GaussianPrior g = instances::random_gaussian(rng, 5, true);
  const Dataset d = observe(sample(Prior{g}, rng), {1, 4});
  EXPECT_EQ(affine_kr_predict_grid(g, d), kr_predict_grid(covariance_matrix(g), d));
}

TEST(AffineKr, PointMassIgnoresData) {
  const Vector f0 = vec({1.5, -2, 0.25});
  const Dataset d{{0, 2}, vec({7, 8})};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(affine_kr_predict(point_mass(f0), d, i), f0(Eigen::Index(i)));
}

TEST(AffineKr, SkewedEnsembleExample) {
  const auto prior = make_ensemble({vec({1, 1}), vec({-1, 1})}, {0.75, 0.25});
  EXPECT_NEAR(affine_kr_predict(prior, Dataset{{0}, vec({1})}, 1), 1.0, 1e-12);
}

TEST(OptimalLinearCoefficients, Examples) {
  const auto four = four_functions();
  EXPECT_NEAR(optimal_linear_coefficients(four, {0}, 0)(0), 1.0, 1e-15);
  EXPECT_EQ(optimal_linear_coefficients(four, {0}, 1)(0), 0.0);
  const GaussianPrior g{Vector::Zero(3), Matrix::Identity(3, 3)};
  EXPECT_EQ(optimal_linear_coefficients(g, {0, 1}, 2), Vector::Zero(2));
  EXPECT_THROW(optimal_linear_coefficients(four, {0}, 2), IndexOutOfRangeError);
}

TEST(OptimalLinearCoefficients, MatchLeastSquaresOracleAndKrWeights) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng = make_rng(seed);
    const std::size_t m = 3 + seed % 6;
    const auto prior = instances::random_ensemble(rng, 10 + seed % 30, m);
    const IndexList x = instances::distinct_inputs(rng, m, 1 + seed % (m - 1));
    const std::size_t i = seed % m;
    const Vector a = optimal_linear_coefficients(prior, x, i);
    EXPECT_LE((a - least_squares_coefficients(prior, x, i)).cwiseAbs().maxCoeff(), 1e-9) << "seed " << seed;
    // Prior-kernel KR is linear in Y with these coefficients.
    const Matrix k = second_moment_matrix(prior);
    for (std::size_t c = 0; c < x.size(); ++c) {
      const Dataset unit{x, Vector::Unit(Eigen::Index(x.size()), Eigen::Index(c))};
      EXPECT_NEAR(kr_predict_grid(k, unit)(Eigen::Index(i)), a(Eigen::Index(c)), 1e-9);
    }
  }
}

TEST(ExpectedRisk, FourFunctionValues) {
  const auto four = four_functions();
  const Vector mu = Vector::Constant(2, 0.5);
  EXPECT_DOUBLE_EQ(expected_risk(four, mu, zero_predictor(2), 1, RiskMode::exact).risk, 1.0);
  EXPECT_DOUBLE_EQ(expected_risk(four, mu, posterior_mean_predictor(four), 1, RiskMode::exact).risk, 0.5);
  EXPECT_DOUBLE_EQ(expected_risk(four, mu, posterior_kernel_predictor(four), 1, RiskMode::exact).risk, 0.5);
  EXPECT_DOUBLE_EQ(expected_risk(four, mu, prior_kernel_predictor(four), 1, RiskMode::exact).risk, 0.5);
  EXPECT_EQ(expected_risk(four, mu, zero_predictor(2), 1, RiskMode::exact).std_error, 0.0);
}

TEST(ExpectedRisk, PerfectPredictorHasZeroRisk) {
  const Vector f0 = vec({1, -3, 2});
  const Predictor truth = [f0](const Dataset&) { return f0; };
  EXPECT_EQ(expected_risk(point_mass(f0), Vector::Constant(3, 1.0 / 3), truth, 2, RiskMode::exact).risk, 0.0);
  const RiskEstimate mc = expected_risk(point_mass(f0), Vector::Constant(3, 1.0 / 3), truth, 2, RiskMode::monte_carlo, 100, 5);
  EXPECT_EQ(mc.risk, 0.0);
  EXPECT_EQ(mc.std_error, 0.0);
}

TEST(ExpectedRisk, MonteCarloAgreesWithExact) {
  Rng rng = make_rng(11);
  const auto prior = instances::random_ensemble(rng, 12, 4);
  const Vector mu = instances::random_pmf(rng, 4);
  const Predictor p = prior_kernel_predictor(prior);
  const double exact = expected_risk(prior, mu, p, 2, RiskMode::exact).risk;
  const RiskEstimate mc = expected_risk(prior, mu, p, 2, RiskMode::monte_carlo, 20000, 3);
  EXPECT_LE(std::abs(mc.risk - exact), 4.0 * mc.std_error);
}

TEST(ExpectedRisk, BudgetAndModeErrors) {
  Rng rng = make_rng(0);
  const auto big = instances::random_ensemble(rng, 10, 10);
  const Vector mu = Vector::Constant(10, 0.1);
  EXPECT_THROW(expected_risk(big, mu, zero_predictor(10), 7, RiskMode::exact), BudgetExceededError);
  EXPECT_NO_THROW(expected_risk(big, mu, zero_predictor(10), 7, RiskMode::monte_carlo, 10));
  const GaussianPrior g{Vector::Zero(2), Matrix::Identity(2, 2)};
  EXPECT_THROW(expected_risk(g, Vector::Constant(2, 0.5), zero_predictor(2), 1, RiskMode::exact), BudgetExceededError);
}

TEST(ExpectedRisk, MonteCarloIsDeterministicAndPaired) {
  const GaussianPrior g{vec({0.5, 0, -1}), Matrix::Identity(3, 3)};
  const Vector mu = Vector::Constant(3, 1.0 / 3);
  const auto a = expected_risk(g, mu, prior_kernel_predictor(g), 2, RiskMode::monte_carlo, 500, 9);
  const auto b = expected_risk(g, mu, prior_kernel_predictor(g), 2, RiskMode::monte_carlo, 500, 9);
  EXPECT_EQ(a.risk, b.risk);
  EXPECT_EQ(a.std_error, b.std_error);
  const auto same = paired_risk_difference(g, mu, zero_predictor(3), zero_predictor(3), 2, 200, 9);
  EXPECT_EQ(same.risk, 0.0);
  EXPECT_EQ(same.std_error, 0.0);
}

TEST(ExpectedRisk, AffineNotWorseThanPriorKernelOnShiftedPriors) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    auto prior = instances::random_ensemble(rng, 8, 4);
    for (auto& f : prior.functions) f.array() += 1.5;
    const Vector mu = instances::random_pmf(rng, 4);
    const double affine = expected_risk(prior, mu, affine_kr_predictor(prior), 1, RiskMode::exact).risk;
    const double plain = expected_risk(prior, mu, prior_kernel_predictor(prior), 1, RiskMode::exact).risk;
    EXPECT_LE(affine, plain + 1e-12) << "seed " << seed;
  }
}

#include <gtest/gtest.h>

#include <cmath>

#include "postkernel/kernel_metrics.hpp"
#include "test_support.hpp"

using namespace postkernel;
using testing_support::random_psd;
using testing_support::rng_for;
using testing_support::with_spectrum;

namespace {

double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST(Pseudoinverse, IdentityIsItsOwnInverse) {
  EXPECT_LE((pseudoinverse(Matrix::Identity(3, 3), 1e-7) - Matrix::Identity(3, 3)).norm(), 1e-14);
}

TEST(Pseudoinverse, ZeroMatrixMapsToZero) {
  EXPECT_EQ(pseudoinverse(Matrix::Zero(2, 2), 1e-7), Matrix::Zero(2, 2));
}

TEST(Pseudoinverse, RankOneOuterProduct) {
  const Vector y = Vector::Ones(2);
  // SVD oracle: (Y Y^T)^+ = Y Y^T / |Y|^4.
  const Matrix expected = Matrix::Constant(2, 2, 0.25);
  EXPECT_LE((pseudoinverse(y * y.transpose()) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Pseudoinverse, RejectsAsymmetricAndEmpty) {
  Matrix k(2, 2);
  k << 1, 0.5, 0.4, 1;
  EXPECT_THROW(pseudoinverse(k), InvalidMatrixError);
  EXPECT_THROW(pseudoinverse(Matrix(0, 0)), EmptyInputError);
  EXPECT_THROW(pseudoinverse(Matrix::Identity(2, 3)), InvalidMatrixError);
}

TEST(Pseudoinverse, SymmetrizesRoundOffAsymmetry) {
  Matrix k(2, 2);
  k << 2, 1, 1 + 1e-13, 2;
  EXPECT_NO_THROW(pseudoinverse(k));
}

TEST(Pseudoinverse, MoorePenroseIdentitiesOnRandomPsd) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto rng = rng_for(seed);
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(seed * 7 % 64);
    const Eigen::Index rank = 1 + static_cast<Eigen::Index>(seed % static_cast<std::uint64_t>(n));
    const Matrix k = random_psd(rng, n, rank);
    const Matrix p = pseudoinverse(k);
    EXPECT_LE(rel_frobenius(k * p * k, k), 1e-8) << "seed " << seed;
    EXPECT_LE(rel_frobenius(p * k * p, p), 1e-8) << "seed " << seed;
    EXPECT_LE(rel_frobenius((k * p).transpose(), k * p), 1e-8) << "seed " << seed;
    EXPECT_LE(rel_frobenius((p * k).transpose(), p * k), 1e-8) << "seed " << seed;
    // Independent route: SVD-based pseudoinverse.
    EXPECT_LE(rel_frobenius(p, testing_support::svd_pinv(k)), 1e-6) << "seed " << seed;
  }
}

TEST(SpectralDecomposition, ReconstructsAndIsOrthonormal) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = rng_for(100 + seed);
    const Matrix k = random_psd(rng, 12, 12);
    const auto s = spectral_decomposition(k);
    for (Eigen::Index i = 1; i < s.eigenvalues.size(); ++i) EXPECT_GE(s.eigenvalues(i - 1), s.eigenvalues(i));
    const Matrix rebuilt = s.eigenvectors * s.eigenvalues.asDiagonal() * s.eigenvectors.transpose();
    EXPECT_LE((rebuilt - k).norm(), 1e-8 * std::max(1.0, k.norm()));
    EXPECT_LE((s.eigenvectors.transpose() * s.eigenvectors - Matrix::Identity(12, 12)).norm(), 1e-8);
  }
}

TEST(Alignment, HandComputedValues) {
  const Vector y = Vector::Ones(2);
  EXPECT_NEAR(alignment(y, y * y.transpose()), 1.0, 1e-15);

  Vector y4(4);
  y4 << 0.3, -1.0, 2.0, 0.7;
  EXPECT_NEAR(alignment(y4, Matrix::Identity(4, 4)), 0.5, 1e-15);

  Matrix k(2, 2);
  k << 2, 1, 1, 2;
  EXPECT_NEAR(alignment(Vector::Unit(2, 0), k), 2.0 / std::sqrt(10.0), 1e-15);
}

TEST(Alignment, DegenerateInputs) {
  EXPECT_THROW(alignment(Vector::Zero(2), Matrix::Identity(2, 2)), DegenerateInputError);
  EXPECT_THROW(alignment(Vector::Ones(2), Matrix::Zero(2, 2)), DegenerateInputError);
  EXPECT_THROW(alignment(Vector::Ones(3), Matrix::Identity(2, 2)), DimensionMismatchError);
}

TEST(Alignment, ScaleInvarianceProperty) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rng = rng_for(200 + seed);
    const Matrix k = random_psd(rng, 6, 4);
    const Vector y = testing_support::random_vector(rng, 6);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    const double c = (seed % 2 ? -1.0 : 1.0) * u(rng);
    const double d = u(rng);
    EXPECT_NEAR(alignment(c * y, d * k), alignment(y, k), 1e-12);
    EXPECT_LE(alignment(y, k), 1.0 + 1e-12);
  }
}

TEST(RkhsAlignment, HandComputedValues) {
  const Vector y = Vector::Ones(2);
  // Y^T K^+ Y = 1 and |K^+|_F = 1/|Y|^2 for K = Y Y^T.
  EXPECT_NEAR(rkhs_alignment(y, y * y.transpose()), 1.0, 1e-12);
  Vector y4(4);
  y4 << 1.0, 2.0, -3.0, 0.5;
  EXPECT_NEAR(rkhs_alignment(y4, Matrix::Identity(4, 4)), 0.5, 1e-15);
  // K = diag(2, 1): (1/2) / sqrt(1/4 + 1) = 1/sqrt(5).
  Matrix k = Matrix::Zero(2, 2);
  k.diagonal() << 2, 1;
  EXPECT_NEAR(rkhs_alignment(Vector::Unit(2, 0), k), 1.0 / std::sqrt(5.0), 1e-15);
}

TEST(RkhsAlignment, ZeroKernelIsDegenerate) {
  EXPECT_THROW(rkhs_alignment(Vector::Ones(2), Matrix::Zero(2, 2)), DegenerateInputError);
}

TEST(EffectiveRank, HandComputedValues) {
  EXPECT_NEAR(effective_rank(Matrix::Identity(5, 5)), 5.0, 1e-12);
  Vector y(2);
  y << 3, 4;
  EXPECT_NEAR(effective_rank(Matrix(y * y.transpose())), 1.0, 1e-6);
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 2, 1, 1;
  // Entropy of (1/2, 1/4, 1/4) is (3/2) log 2.
  EXPECT_NEAR(effective_rank(d), std::pow(2.0, 1.5), 1e-12);
}

TEST(EffectiveRank, BoundsAndScaleInvariance) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto rng = rng_for(300 + seed);
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(seed % 10);
    const Matrix k = random_psd(rng, n, n);
    const double r = effective_rank(k);
    EXPECT_GE(r, 1.0 - 1e-12);
    EXPECT_LE(r, static_cast<double>(n) + 1e-12);
    EXPECT_NEAR(effective_rank(Matrix(7.5 * k)), r, 1e-10);
  }
}

TEST(EffectiveRank, CountsEqualNonzeroEigenvalues) {
  for (int r : {1, 2, 4}) {
    auto rng = rng_for(static_cast<std::uint64_t>(400 + r));
    Vector spectrum = Vector::Zero(8);
    spectrum.head(r).setConstant(3.0);
    EXPECT_NEAR(effective_rank(with_spectrum(rng, spectrum), 1e-10), r, 1e-3) << "r=" << r;
  }
}

TEST(EffectiveRank, NonPositiveSpectrumStillReturnsFlooredValue) {
  // All eigenvalues floored to eps gives a uniform spectrum.
  EXPECT_NEAR(effective_rank(Matrix::Zero(3, 3)), 3.0, 1e-12);
}

#pragma once

// Dense symmetric linear algebra and kernel diagnostics: pseudoinverse,
// kernel-target alignment, RKHS-norm alignment and effective rank.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "postkernel/errors.hpp"

namespace postkernel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultRtol = 1e-7;
inline constexpr double kDefaultEigenFloor = 1e-10;
inline constexpr double kSymmetryTol = 1e-10;

struct SpectralDecomposition {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // column i pairs with eigenvalues[i]
};

/// Returns (K + K^T)/2 after checking that K is square, finite and symmetric
/// to within |K_ij - K_ji| <= 1e-10 * max(1, |K_ij|).
inline Matrix symmetrized(const Matrix& k) {
  if (k.rows() == 0 || k.cols() == 0) throw EmptyInputError("kernel matrix is empty");
  if (k.rows() != k.cols()) {
    throw InvalidMatrixError("kernel matrix is not square (" + std::to_string(k.rows()) + "x" +
                             std::to_string(k.cols()) + ")");
  }
  if (!k.allFinite()) throw InvalidMatrixError("kernel matrix has non-finite entries");
  const Eigen::Index n = k.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double scale = std::max({1.0, std::abs(k(i, j)), std::abs(k(j, i))});
      if (std::abs(k(i, j) - k(j, i)) > kSymmetryTol * scale) {
        throw InvalidMatrixError("kernel matrix is not symmetric at (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
      }
    }
  }
  return 0.5 * (k + k.transpose());
}

inline SpectralDecomposition spectral_decomposition(const Matrix& k) {
  const Matrix sym = symmetrized(k);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw InvalidMatrixError("eigendecomposition failed");
  // Eigen sorts ascending; flip to descending.
  SpectralDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// Moore-Penrose pseudoinverse of a symmetric matrix from its spectrum.
inline Matrix pseudoinverse(const SpectralDecomposition& s, double rtol = kDefaultRtol) {
  if (!(rtol > 0.0)) throw InvalidMatrixError("rtol must be positive");
  const Eigen::Index n = s.eigenvalues.size();
  const double lmax = n > 0 ? s.eigenvalues(0) : 0.0;
  Vector inv = Vector::Zero(n);
  if (lmax > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (s.eigenvalues(i) > rtol * lmax) inv(i) = 1.0 / s.eigenvalues(i);
    }
  }
  return s.eigenvectors * inv.asDiagonal() * s.eigenvectors.transpose();
}

/// Eigenvalues lambda_i <= rtol * lambda_max are treated as zero.
inline Matrix pseudoinverse(const Matrix& k, double rtol = kDefaultRtol) {
  return pseudoinverse(spectral_decomposition(k), rtol);
}

/// a_{Y,K} = Y^T K Y / (|Y|^2 |K|_F).
inline double alignment(const Vector& y, const Matrix& k) {
  if (y.size() != k.rows() || k.rows() != k.cols()) {
    throw DimensionMismatchError("label vector length does not match kernel matrix");
  }
  const double yy = y.squaredNorm();
  const double kf = k.norm();
  if (!(yy > 0.0) || !(kf > 0.0)) throw DegenerateInputError("alignment of a zero label vector or zero kernel");
  return y.dot(k * y) / (yy * kf);
}

/// Alignment computed against the pseudoinverse K^+ instead of K. Lower is
/// better: Y^T K^+ Y is the RKHS norm of the interpolant.
inline double rkhs_alignment(const Vector& y, const Matrix& k, double rtol = kDefaultRtol) {
  if (y.size() != k.rows()) throw DimensionMismatchError("label vector length does not match kernel matrix");
  const Matrix kinv = pseudoinverse(k, rtol);
  const double yy = y.squaredNorm();
  const double kf = kinv.norm();
  if (!(yy > 0.0) || !(kf > 0.0)) {
    throw DegenerateInputError("RKHS alignment of a zero label vector or zero kernel");
  }
  return y.dot(kinv * y) / (yy * kf);
}

/// Same as rkhs_alignment but reuses an existing spectrum.
inline double rkhs_alignment(const Vector& y, const SpectralDecomposition& s, double rtol = kDefaultRtol) {
  if (y.size() != s.eigenvalues.size()) {
    throw DimensionMismatchError("label vector length does not match kernel matrix");
  }
  const Matrix kinv = pseudoinverse(s, rtol);
  const double yy = y.squaredNorm();
  const double kf = kinv.norm();
  if (!(yy > 0.0) || !(kf > 0.0)) {
    throw DegenerateInputError("RKHS alignment of a zero label vector or zero kernel");
  }
  return y.dot(kinv * y) / (yy * kf);
}

/// exp of the Shannon entropy of the normalized spectrum, with eigenvalues
/// floored at eps first.
inline double effective_rank_of_spectrum(const Vector& eigenvalues, double eps = kDefaultEigenFloor) {
  if (eigenvalues.size() == 0) throw EmptyInputError("effective rank of an empty spectrum");
  if (!(eps > 0.0)) throw InvalidMatrixError("eigenvalue floor must be positive");
  if (eigenvalues.maxCoeff() <= 0.0) {
    std::clog << "postkernel: warning: effective_rank on a spectrum with no positive eigenvalue; "
                 "using the floored spectrum\n";
  }
  const Vector floored = eigenvalues.cwiseMax(eps);
  const double total = floored.sum();
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < floored.size(); ++i) {
    const double mu = floored(i) / total;
    entropy -= mu * std::log(mu);
  }
  return std::exp(entropy);
}

inline double effective_rank(const Matrix& k, double eps = kDefaultEigenFloor) {
  return effective_rank_of_spectrum(spectral_decomposition(k).eigenvalues, eps);
}

}  // namespace postkernel

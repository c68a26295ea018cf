#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"

namespace cdantzig {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// 2-norm condition number from singular values; +inf when singular.
inline double condition_number(const Matrix& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (smax == 0.0 || smin == 0.0) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

/// Matrix max norm max_ij |m_ij|.
inline double max_norm(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return m.size() == 0 || (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

/// Symmetric square root of a PSD matrix. Eigenvalues below -tol are rejected;
/// those in [-tol, 0] are clamped to zero, so degenerate covariances are fine.
inline Matrix psd_sqrt(const Matrix& m, double tol = 1e-10) {
  if (m.size() == 0) return m;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  Vector values = eig.eigenvalues();
  if (values.minCoeff() < -tol) {
    throw ValidationError(ValidationKind::not_psd,
                          "matrix has eigenvalue " + std::to_string(values.minCoeff()));
  }
  values = values.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

inline double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

inline double norm_inf(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace cdantzig

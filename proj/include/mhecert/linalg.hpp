#pragma once

// Small dense helpers shared by the certificate, estimator and analysis code.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "mhecert/error.hpp"

namespace mhecert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double lambda_max_sym(const Mat& m) {
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline double lambda_min_sym(const Mat& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Rounding allowance for semidefiniteness tests: an eigenvalue counts as
/// nonnegative if it is above -1e-9 (1 + ||M||_F).
inline double psd_threshold(const Mat& m) { return -1e-9 * (1.0 + m.norm()); }

inline bool is_psd(const Mat& m) { return m.size() == 0 || lambda_min_sym(m) >= psd_threshold(m); }

/// M1 <= M2 in the Loewner order, with the same rounding allowance.
inline bool loewner_leq(const Mat& m1, const Mat& m2) { return is_psd(m2 - m1); }

inline bool is_symmetric(const Mat& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).norm() <= rel_tol * (1.0 + m.norm());
}

inline bool is_pd(const Mat& m) {
  if (!is_symmetric(m, 1e-10)) return false;
  Eigen::LLT<Mat> llt(symmetrize(m));
  return llt.info() == Eigen::Success && lambda_min_sym(m) > 0.0;
}

/// v' M v
inline double sq_norm(const Vec& v, const Mat& m) { return v.dot(m * v); }

/// Factor F with F' F = M for symmetric PSD M; tiny negative eigenvalues are clamped.
inline Mat psd_sqrt_factor(const Mat& m) {
  if (m.size() == 0) return m;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return s.asDiagonal() * es.eigenvectors().transpose();
}

/// Largest lambda with det(a - lambda b) = 0 for symmetric positive definite a, b.
/// Computed as lambda_max(L^-1 a L^-T) where b = L L'.
inline double generalized_eigmax(const Mat& a, const Mat& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols() && a.rows() == a.cols(),
                  "generalized_eigmax: dimension mismatch");
  detail::require(is_pd(a), "generalized_eigmax: numerator is not symmetric positive definite");
  detail::require(is_pd(b), "generalized_eigmax: denominator is not symmetric positive definite");
  Eigen::LLT<Mat> llt(symmetrize(b));
  const auto l = llt.matrixL();
  Mat tmp = l.solve(symmetrize(a));                          // L^-1 a
  Mat whitened = l.solve(tmp.transpose()).transpose();       // L^-1 a L^-T
  return lambda_max_sym(whitened);
}

}  // namespace mhecert

#pragma once

// Dense log-det barrier method for small LMI problems
//
//   maximize    c' z
//   subject to  G_k(z) = G_k0 + sum_i z_i G_ki  >  0,   k = 1..K
//
// The caller supplies a strictly feasible starting point. Problem sizes are
// tiny (tens of variables, blocks of size <= ~10), so everything is dense and
// the Newton system is assembled explicitly.

#include <cmath>
#include <limits>
#include <vector>

#include "mhecert/error.hpp"
#include "mhecert/linalg.hpp"

namespace mhecert::sdp {

struct AffineBlock {
  Mat constant;
  std::vector<Mat> coeffs;  // one symmetric matrix per decision variable

  Mat eval(const Vec& z) const {
    Mat g = constant;
    for (std::size_t i = 0; i < coeffs.size(); ++i)
      if (z[static_cast<Eigen::Index>(i)] != 0.0) g += z[static_cast<Eigen::Index>(i)] * coeffs[i];
    return g;
  }
};

struct Problem {
  Eigen::Index num_vars = 0;
  Vec objective;  // c
  std::vector<AffineBlock> blocks;

  Eigen::Index barrier_degree() const {
    Eigen::Index m = 0;
    for (const auto& b : blocks) m += b.constant.rows();
    return m;
  }
};

struct Options {
  double t0 = 1.0;
  double t_growth = 20.0;
  double gap_tol = 1e-9;  // stop when barrier_degree / t <= gap_tol * (1 + |c'z|)
  int max_newton = 60;    // per centering step
  int max_outer = 60;
  double newton_tol = 1e-10;
};

struct Result {
  Vec z;
  double objective = 0.0;
  int outer_iterations = 0;
  int newton_iterations = 0;
  bool converged = false;
};

namespace detail {

// Returns false if some block is not positive definite at z.
inline bool barrier_value(const Problem& prob, const Vec& z, double t, double& value) {
  value = -t * prob.objective.dot(z);
  for (const auto& b : prob.blocks) {
    Eigen::LLT<Mat> llt(b.eval(z));
    if (llt.info() != Eigen::Success) return false;
    const Vec d = Mat(llt.matrixL()).diagonal();
    if ((d.array() <= 0.0).any()) return false;
    value -= 2.0 * d.array().log().sum();
  }
  return std::isfinite(value);
}

inline void barrier_derivatives(const Problem& prob, const Vec& z, double t, Vec& grad, Mat& hess) {
  const Eigen::Index d = prob.num_vars;
  grad = -t * prob.objective;
  hess = Mat::Zero(d, d);
  std::vector<Mat> whitened(static_cast<std::size_t>(d));
  for (const auto& b : prob.blocks) {
    Eigen::LLT<Mat> llt(b.eval(z));
    const auto l = llt.matrixL();
    for (Eigen::Index i = 0; i < d; ++i) {
      const Mat& gi = b.coeffs[static_cast<std::size_t>(i)];
      Mat tmp = l.solve(gi);
      whitened[static_cast<std::size_t>(i)] = l.solve(tmp.transpose()).transpose();
      grad[i] -= whitened[static_cast<std::size_t>(i)].trace();
    }
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i; j < d; ++j) {
        const double v = (whitened[static_cast<std::size_t>(i)].array() *
                          whitened[static_cast<std::size_t>(j)].transpose().array())
                             .sum();
        hess(i, j) += v;
        if (i != j) hess(j, i) += v;
      }
  }
}

}  // namespace detail

/// Runs the barrier path-following method from a strictly feasible z0.
inline Result solve(const Problem& prob, const Vec& z0, const Options& opt = {}) {
  ::mhecert::detail::require(z0.size() == prob.num_vars, "sdp::solve: start point dimension mismatch");
  for (const auto& b : prob.blocks)
    ::mhecert::detail::require(static_cast<Eigen::Index>(b.coeffs.size()) == prob.num_vars,
                               "sdp::solve: block coefficient count mismatch");
  Result res;
  res.z = z0;
  double t = opt.t0;
  double phi = 0.0;
  ::mhecert::detail::require(detail::barrier_value(prob, res.z, t, phi),
                             "sdp::solve: start point is not strictly feasible");
  const double m = static_cast<double>(prob.barrier_degree());

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    res.outer_iterations = outer + 1;
    for (int it = 0; it < opt.max_newton; ++it) {
      Vec grad;
      Mat hess;
      detail::barrier_derivatives(prob, res.z, t, grad, hess);
      // Tiny regularization keeps the solve well posed when some variable is inactive.
      hess.diagonal().array() += 1e-14 * (1.0 + hess.diagonal().array().abs());
      Eigen::LDLT<Mat> ldlt(hess);
      Vec dz = -ldlt.solve(grad);
      const double decrement = -grad.dot(dz);
      ++res.newton_iterations;
      if (!(decrement > 0.0) || 0.5 * decrement <= opt.newton_tol) break;
      detail::barrier_value(prob, res.z, t, phi);
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        Vec cand = res.z + alpha * dz;
        double phic = 0.0;
        if (detail::barrier_value(prob, cand, t, phic) && phic <= phi - 0.25 * alpha * decrement) {
          res.z = std::move(cand);
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    res.objective = prob.objective.dot(res.z);
    if (m / t <= opt.gap_tol * (1.0 + std::abs(res.objective))) {
      res.converged = true;
      break;
    }
    t *= opt.t_growth;
  }
  res.objective = prob.objective.dot(res.z);
  return res;
}

}  // namespace mhecert::sdp

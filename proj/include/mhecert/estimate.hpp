#pragma once

// Time-discounted moving horizon estimation and full information estimation.
//
// Both problems are solved by single shooting: the decision vector is
// z = (x_init, w_0, ..., w_{L-1}) and states/outputs are obtained by forward
// simulation, so the dynamics equalities hold by construction. x_init and the
// disturbances are kept inside X and W by projection; intermediate states and
// outputs are kept inside X and Y by an exterior quadratic penalty.
//
// Window sequences are ordered oldest first. The discount index j = 1 denotes
// the most recent step, i.e. window element k carries weight eta^(L-1-k).

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "mhecert/certify.hpp"
#include "mhecert/error.hpp"
#include "mhecert/linalg.hpp"
#include "mhecert/model.hpp"

namespace mhecert {

enum class WarmStart { none, previous_shifted, true_sequence };

struct SolverConfig {
  int max_iterations = 100;
  double gradient_tol = 1e-10;
  double step_tol = 1e-12;
  double levenberg_lambda0 = 1e-3;
  double penalty_weight = 1e6;
  double prior_tolerance = 1e-4;  // admissible distance of the prior outside X
  WarmStart warm_start = WarmStart::none;

  void validate() const {
    detail::require(max_iterations > 0, "solver: max_iterations must be positive");
    detail::require(gradient_tol > 0 && step_tol > 0 && levenberg_lambda0 > 0 && penalty_weight > 0 &&
                        prior_tolerance >= 0,
                    "solver: tolerances must be positive");
  }
};

struct MheConfig {
  int horizon = 0;
  DiossCertificate cert;
  SolverConfig solver;

  void validate() const {
    detail::require(horizon >= 0, "MHE horizon must be nonnegative");
    cert.validate();
    solver.validate();
  }
};

struct MeasurementWindow {
  std::vector<Vec> inputs;
  std::vector<Vec> outputs;
  std::size_t size() const { return outputs.size(); }
};

/// Initial state and disturbance sequence of a window.
struct WindowSequence {
  Vec x_init;
  std::vector<Vec> w_seq;
};

struct EstimateResult {
  Vec x_init;
  std::vector<Vec> w_seq;
  std::vector<Vec> x_seq;  // length L + 1
  std::vector<Vec> y_seq;  // length L
  double cost = 0.0;
  std::optional<double> candidate_cost;
  bool used_candidate = false;
  bool converged = false;
  int iterations = 0;
  double max_constraint_violation = 0.0;  // intermediate states/outputs outside X/Y

  const Vec& estimate() const { return x_seq.back(); }
};

// ---------------------------------------------------------------------------
// Comparison functions

enum class KClass { K, Kinf };

/// Scalar comparison function r >= 0 -> value >= 0 with value(0) = 0.
struct KFunction {
  std::function<double(double)> value;
  std::function<double(double)> inverse;  // may be empty
  std::optional<double> quadratic_coeff;  // set when value(r) = c r^2
  KClass cls = KClass::Kinf;

  static KFunction quadratic(double c) {
    detail::require(c > 0.0, "KFunction::quadratic: coefficient must be positive");
    KFunction k;
    k.value = [c](double r) { return c * r * r; };
    k.inverse = [c](double v) { return std::sqrt(std::max(v, 0.0) / c); };
    k.quadratic_coeff = c;
    return k;
  }

  static KFunction custom(std::function<double(double)> value, std::function<double(double)> inverse = {},
                          KClass cls = KClass::Kinf) {
    KFunction k;
    k.value = std::move(value);
    k.inverse = std::move(inverse);
    k.cls = cls;
    return k;
  }

  double operator()(double r) const { return value(r); }
  bool has_inverse() const { return static_cast<bool>(inverse); }
  double inv(double v) const {
    detail::require(has_inverse(), "KFunction: inverse not available");
    return inverse(v);
  }

  /// value(0) = 0 and strictly increasing on the given grid.
  bool spot_check(const std::vector<double>& grid) const {
    if (value(0.0) != 0.0) return false;
    double prev = 0.0, prev_r = 0.0;
    for (double r : grid) {
      if (r <= prev_r) continue;
      const double v = value(r);
      if (!(v > prev)) return false;
      prev = v;
      prev_r = r;
    }
    return true;
  }
};

struct KFunctionSet {
  double eta = 0.0;
  KFunction alpha1, alpha2, sigma_w, sigma_y;

  bool quadratic() const {
    return alpha2.quadratic_coeff && sigma_w.quadratic_coeff && sigma_y.quadratic_coeff;
  }
};

/// Quadratic comparison functions implied by a certificate:
/// alpha1 = lambda_min(P1) r^2, alpha2 = lambda_max(P2) r^2, sigma_w = lambda_max(Q) r^2, sigma_y = lambda_max(R) r^2.
inline KFunctionSet kfunctions_from_certificate(const DiossCertificate& cert) {
  KFunctionSet k;
  k.eta = cert.eta;
  k.alpha1 = KFunction::quadratic(lambda_min_sym(cert.P1));
  k.alpha2 = KFunction::quadratic(lambda_max_sym(cert.P2));
  k.sigma_w = KFunction::quadratic(std::max(lambda_max_sym(cert.Q), 1e-300));
  k.sigma_y = KFunction::quadratic(std::max(lambda_max_sym(cert.R), 1e-300));
  return k;
}

// ---------------------------------------------------------------------------
// Cost functions (direct formulas)

namespace detail {

inline void check_cost_lengths(std::size_t len, const std::vector<Vec>& w_seq, const std::vector<Vec>& y_est,
                               const std::vector<Vec>& y_meas) {
  require(w_seq.size() == len && y_est.size() == len && y_meas.size() == len,
          "cost: sequence lengths must equal the window length");
}

}  // namespace detail

/// 2 eta^L ||x_init - prior||_P2^2 + sum_{j=1}^{L} eta^{j-1} (2 ||w_{t-j}||_Q^2 + ||y^_{t-j} - y_{t-j}||_R^2)
inline double mhe_cost(const DiossCertificate& cert, const Vec& prior, const Vec& x_init,
                       const std::vector<Vec>& w_seq, const std::vector<Vec>& y_est,
                       const std::vector<Vec>& y_meas) {
  const std::size_t len = w_seq.size();
  detail::check_cost_lengths(len, w_seq, y_est, y_meas);
  double cost = 2.0 * std::pow(cert.eta, static_cast<double>(len)) * sq_norm(x_init - prior, cert.P2);
  for (std::size_t k = 0; k < len; ++k) {
    const double disc = std::pow(cert.eta, static_cast<double>(len - 1 - k));
    cost += disc * (2.0 * sq_norm(w_seq[k], cert.Q) + sq_norm(y_est[k] - y_meas[k], cert.R));
  }
  return cost;
}

inline double mhe_cost(const MheConfig& cfg, const Vec& prior, const Vec& x_init, const std::vector<Vec>& w_seq,
                       const std::vector<Vec>& y_est, const std::vector<Vec>& y_meas) {
  return mhe_cost(cfg.cert, prior, x_init, w_seq, y_est, y_meas);
}

/// eta^t alpha2(2||x_init - prior||) + sum_{j=1}^{t} eta^{j-1} (sigma_w(2||w_{t-j}||) + sigma_y(||y^_{t-j} - y_{t-j}||))
inline double fie_cost(const KFunctionSet& k, const Vec& prior, const Vec& x_init, const std::vector<Vec>& w_seq,
                       const std::vector<Vec>& y_est, const std::vector<Vec>& y_meas, std::size_t t) {
  detail::check_cost_lengths(t, w_seq, y_est, y_meas);
  double cost = std::pow(k.eta, static_cast<double>(t)) * k.alpha2(2.0 * (x_init - prior).norm());
  for (std::size_t i = 0; i < t; ++i) {
    const double disc = std::pow(k.eta, static_cast<double>(t - 1 - i));
    cost += disc * (k.sigma_w(2.0 * w_seq[i].norm()) + k.sigma_y((y_est[i] - y_meas[i]).norm()));
  }
  return cost;
}

// ---------------------------------------------------------------------------
// Single-shooting least-squares machinery

namespace detail {

/// One weighted residual term. Either quadratic (||F v||^2 with F'F = W) or
/// radial (coeff * phi(scale ||v||)), the latter expressed as the vector
/// residual g(s) v with g(s) = sqrt(coeff phi(scale s)) / s, s = ||v||.
struct TermWeight {
  Mat factor;  // quadratic case
  const KFunction* phi = nullptr;
  double coeff = 1.0;
  double scale = 1.0;

  static TermWeight quadratic(const Mat& w) { return {psd_sqrt_factor(w), nullptr, 1.0, 1.0}; }
  static TermWeight radial(const KFunction& f, double coeff, double scale) { return {Mat(), &f, coeff, scale}; }

  Eigen::Index rows(Eigen::Index dim) const { return phi ? dim : factor.rows(); }

  double g(double s) const { return std::sqrt(std::max(coeff * (*phi)(scale * s), 0.0)) / s; }

  // Residual and its derivative with respect to v.
  void eval(const Vec& v, Vec& r, Mat& dr) const {
    if (!phi) {
      r = factor * v;
      dr = factor;
      return;
    }
    constexpr double kFloor = 1e-12;
    const double s = std::max(v.norm(), kFloor);
    const double gs = g(s);
    r = gs * v;
    dr = gs * Mat::Identity(v.size(), v.size());
    if (v.norm() > kFloor) {
      const double h = 1e-6 * s;
      const double dg = (g(s + h) - g(std::max(s - h, 0.5 * s))) / (s + h - std::max(s - h, 0.5 * s));
      dr += (dg / s) * v * v.transpose();
    }
  }
};

struct ShootingProblem {
  const SystemModel* model = nullptr;
  Vec prior;
  const std::vector<Vec>* inputs = nullptr;
  const std::vector<Vec>* outputs = nullptr;
  TermWeight prior_weight;
  std::vector<TermWeight> w_weights;  // per window element, oldest first
  std::vector<TermWeight> y_weights;
  double penalty_weight = 0.0;

  std::size_t len() const { return outputs->size(); }
  Eigen::Index n() const { return model->n; }
  Eigen::Index q() const { return model->q; }
  Eigen::Index dim() const { return n() + q() * static_cast<Eigen::Index>(len()); }

  Vec pack(const Vec& x_init, const std::vector<Vec>& w) const {
    Vec z(dim());
    z.head(n()) = x_init;
    for (std::size_t k = 0; k < len(); ++k) z.segment(n() + q() * static_cast<Eigen::Index>(k), q()) = w[k];
    return z;
  }

  WindowSequence unpack(const Vec& z) const {
    WindowSequence s{z.head(n()), {}};
    for (std::size_t k = 0; k < len(); ++k) s.w_seq.push_back(z.segment(n() + q() * static_cast<Eigen::Index>(k), q()));
    return s;
  }

  Vec lower() const {
    Vec lo(dim());
    lo.head(n()) = model->sets.X.lower();
    for (std::size_t k = 0; k < len(); ++k) lo.segment(n() + q() * static_cast<Eigen::Index>(k), q()) = model->sets.W.lower();
    return lo;
  }
  Vec upper() const {
    Vec hi(dim());
    hi.head(n()) = model->sets.X.upper();
    for (std::size_t k = 0; k < len(); ++k) hi.segment(n() + q() * static_cast<Eigen::Index>(k), q()) = model->sets.W.upper();
    return hi;
  }

  struct Evaluation {
    Vec residual;  // objective residuals followed by penalty residuals
    Mat jacobian;
    Eigen::Index objective_rows = 0;
    std::vector<Vec> x_seq, y_seq;
    double max_violation = 0.0;

    double objective() const { return residual.head(objective_rows).squaredNorm(); }
    double total() const { return residual.squaredNorm(); }
  };

  Evaluation evaluate(const Vec& z, bool with_jacobian) const {
    const Eigen::Index nz = dim(), nx = n(), nw = q(), ny = model->p;
    const auto L = len();
    Eigen::Index rows = prior_weight.rows(nx);
    for (std::size_t k = 0; k < L; ++k) rows += w_weights[k].rows(nw) + y_weights[k].rows(ny);
    const Eigen::Index obj_rows = rows;
    rows += nx * static_cast<Eigen::Index>(L) + ny * static_cast<Eigen::Index>(L);

    Evaluation ev;
    ev.objective_rows = obj_rows;
    ev.residual = Vec::Zero(rows);
    if (with_jacobian) ev.jacobian = Mat::Zero(rows, nz);
    Eigen::Index row = 0;
    Vec r;
    Mat dr;

    const Vec x0 = z.head(nx);
    prior_weight.eval(x0 - prior, r, dr);
    ev.residual.segment(row, r.size()) = r;
    if (with_jacobian) ev.jacobian.block(row, 0, r.size(), nx) = dr;
    row += r.size();

    ev.x_seq.reserve(L + 1);
    ev.y_seq.reserve(L);
    ev.x_seq.push_back(x0);
    Mat S = Mat::Zero(nx, nz);  // d x_k / d z
    if (with_jacobian) S.leftCols(nx).setIdentity();
    Eigen::Index pen_row = obj_rows;
    const double sp = std::sqrt(penalty_weight);

    for (std::size_t k = 0; k < L; ++k) {
      const Eigen::Index wc = nx + nw * static_cast<Eigen::Index>(k);
      const Vec w = z.segment(wc, nw);
      const Vec& u = (*inputs)[k];
      const Vec& xk = ev.x_seq.back();
      Vec yk = model->h(xk, u, w);

      // disturbance term
      w_weights[k].eval(w, r, dr);
      ev.residual.segment(row, r.size()) = r;
      if (with_jacobian) ev.jacobian.block(row, wc, r.size(), nw) = dr;
      row += r.size();

      // output term
      OutputLinearization lh;
      if (with_jacobian) lh = model->jac_h(xk, u, w);
      y_weights[k].eval(yk - (*outputs)[k], r, dr);
      ev.residual.segment(row, r.size()) = r;
      if (with_jacobian) {
        Mat dy = lh.C * S;
        dy.middleCols(wc, nw) += lh.D;
        ev.jacobian.middleRows(row, r.size()) = dr * dy;
      }
      row += r.size();

      // output box penalty
      const Vec yv = model->sets.Y.violation(yk);
      ev.max_violation = std::max(ev.max_violation, yv.size() ? yv.cwiseAbs().maxCoeff() : 0.0);
      ev.residual.segment(pen_row, ny) = sp * yv;
      if (with_jacobian) {
        Mat dy = lh.C * S;
        dy.middleCols(wc, nw) += lh.D;
        for (Eigen::Index i = 0; i < ny; ++i)
          if (yv[i] != 0.0) ev.jacobian.row(pen_row + i) = sp * dy.row(i);
      }
      pen_row += ny;

      // propagate
      Vec xn = model->f(xk, u, w);
      if (with_jacobian) {
        const auto lf = model->jac_f(xk, u, w);
        Mat Sn = lf.A * S;
        Sn.middleCols(wc, nw) += lf.B;
        S = std::move(Sn);
      }
      const Vec xv = model->sets.X.violation(xn);
      ev.max_violation = std::max(ev.max_violation, xv.size() ? xv.cwiseAbs().maxCoeff() : 0.0);
      ev.residual.segment(pen_row, nx) = sp * xv;
      if (with_jacobian)
        for (Eigen::Index i = 0; i < nx; ++i)
          if (xv[i] != 0.0) ev.jacobian.row(pen_row + i) = sp * S.row(i);
      pen_row += nx;

      ev.y_seq.push_back(std::move(yk));
      ev.x_seq.push_back(std::move(xn));
    }
    return ev;
  }
};

struct LmOutcome {
  Vec z;
  bool converged = false;
  int iterations = 0;
};

/// Projected Levenberg-Marquardt with Armijo backtracking along the projection arc.
/// Variables at an active bound (gradient pointing outward) are frozen for the step.
inline LmOutcome projected_lm(const ShootingProblem& prob, Vec z, const SolverConfig& cfg) {
  const Vec lo = prob.lower(), hi = prob.upper();
  auto project = [&](const Vec& v) { return v.cwiseMax(lo).cwiseMin(hi); };
  z = project(z);
  LmOutcome out;
  double lambda = cfg.levenberg_lambda0;
  auto ev = prob.evaluate(z, true);
  double cost = ev.total();

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const Vec grad = 2.0 * ev.jacobian.transpose() * ev.residual;
    const Vec pg = z - project(z - grad);
    if (pg.lpNorm<Eigen::Infinity>() <= cfg.gradient_tol * (1.0 + cost)) {
      out.converged = true;
      break;
    }
    ++out.iterations;

    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double gap = 1e-12 * (1.0 + std::abs(z[i]));
      const bool at_lo = z[i] <= lo[i] + gap && grad[i] > 0.0;
      const bool at_hi = z[i] >= hi[i] - gap && grad[i] < 0.0;
      if (!at_lo && !at_hi) free.push_back(i);
    }
    const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
    Mat Jf(ev.jacobian.rows(), nf);
    Vec gf(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
      Jf.col(k) = ev.jacobian.col(free[static_cast<std::size_t>(k)]);
      gf[k] = grad[free[static_cast<std::size_t>(k)]];
    }
    const Mat JtJ = Jf.transpose() * Jf;
    const double diag_scale = nf > 0 ? JtJ.diagonal().maxCoeff() : 1.0;

    bool accepted = false;
    bool stalled = false;
    for (int tries = 0; tries < 12 && !accepted; ++tries) {
      Mat H = JtJ;
      H.diagonal() += lambda * (JtJ.diagonal().array() + 1e-12 * (1.0 + diag_scale)).matrix();
      Vec df = -0.5 * Eigen::LDLT<Mat>(H).solve(gf);
      Vec dz = Vec::Zero(z.size());
      for (Eigen::Index k = 0; k < nf; ++k) dz[free[static_cast<std::size_t>(k)]] = df[k];

      double alpha = 1.0;
      for (int ls = 0; ls < 20; ++ls, alpha *= 0.5) {
        const Vec cand = project(z + alpha * dz);
        const Vec step = cand - z;
        if (step.lpNorm<Eigen::Infinity>() <= cfg.step_tol * (1.0 + z.lpNorm<Eigen::Infinity>())) {
          stalled = true;
          break;
        }
        auto cev = prob.evaluate(cand, false);
        const double ccost = cev.total();
        if (ccost <= cost + 1e-4 * grad.dot(step)) {
          z = cand;
          ev = prob.evaluate(z, true);
          cost = ev.total();
          accepted = true;
          if (alpha == 1.0) lambda = std::max(lambda / 3.0, 1e-12);
          break;
        }
      }
      if (stalled) break;
      if (!accepted) lambda *= 10.0;
    }
    if (stalled || !accepted) {
      out.converged = stalled;
      break;
    }
  }
  out.z = z;
  return out;
}

inline EstimateResult finish(const ShootingProblem& prob, const LmOutcome& lm) {
  EstimateResult res;
  const auto seq = prob.unpack(lm.z);
  const auto ev = prob.evaluate(lm.z, false);
  res.x_init = seq.x_init;
  res.w_seq = seq.w_seq;
  res.x_seq = ev.x_seq;
  res.y_seq = ev.y_seq;
  res.converged = lm.converged;
  res.iterations = lm.iterations;
  res.max_constraint_violation = ev.max_violation;
  return res;
}

inline void check_window(const SystemModel& model, const std::vector<Vec>& inputs, const std::vector<Vec>& outputs) {
  require(inputs.size() == outputs.size(), "window: input and output sequences differ in length");
  for (const auto& u : inputs) require(u.size() == model.m, "window: input dimension mismatch");
  for (const auto& y : outputs) require(y.size() == model.p, "window: output dimension mismatch");
}

inline void check_prior(const SystemModel& model, const Vec& prior, double tol) {
  require(prior.size() == model.n, "prior dimension mismatch");
  const Vec v = model.sets.X.violation(prior);
  require(v.size() == 0 || v.cwiseAbs().maxCoeff() <= tol, "prior lies outside the state constraint set");
}

inline void check_sequence(const SystemModel& model, const WindowSequence& s, std::size_t len, const char* what) {
  require(s.x_init.size() == model.n && s.w_seq.size() == len, std::string(what) + ": length mismatch");
  for (const auto& w : s.w_seq) require(w.size() == model.q, std::string(what) + ": disturbance dimension mismatch");
}

}  // namespace detail

/// Warm start for the next window from the previous solution: drops the oldest
/// element when the window slid forward and appends a zero disturbance.
inline WindowSequence shifted_guess(const EstimateResult& prev, std::size_t new_len, Eigen::Index q) {
  const std::size_t old_len = prev.w_seq.size();
  detail::require(new_len == old_len || new_len == old_len + 1, "shifted_guess: window must grow or slide by one");
  const std::size_t drop = old_len + 1 - new_len;
  WindowSequence g{prev.x_seq[drop], {}};
  for (std::size_t k = drop; k < old_len; ++k) g.w_seq.push_back(prev.w_seq[k]);
  g.w_seq.push_back(Vec::Zero(q));
  return g;
}

/// Solves the discounted MHE problem on one window. When a true-sequence candidate
/// is supplied its cost is recorded and it replaces the solver result whenever it
/// is strictly cheaper, so the returned cost never exceeds the candidate's.
inline EstimateResult solve_mhe(const SystemModel& model, const MheConfig& cfg, const Vec& prior,
                                const MeasurementWindow& window,
                                const std::optional<WindowSequence>& true_candidate = std::nullopt,
                                const std::optional<WindowSequence>& initial_guess = std::nullopt) {
  cfg.validate();
  detail::require(cfg.cert.n() == model.n && cfg.cert.Q.rows() == model.q && cfg.cert.R.rows() == model.p,
                  "solve_mhe: certificate dimensions do not match the model");
  detail::check_window(model, window.inputs, window.outputs);
  detail::check_prior(model, prior, cfg.solver.prior_tolerance);
  const std::size_t L = window.size();
  detail::require(L <= static_cast<std::size_t>(cfg.horizon), "solve_mhe: window longer than the horizon");

  detail::ShootingProblem prob;
  prob.model = &model;
  prob.prior = prior;
  prob.inputs = &window.inputs;
  prob.outputs = &window.outputs;
  prob.penalty_weight = cfg.solver.penalty_weight;
  const double eta = cfg.cert.eta;
  prob.prior_weight = detail::TermWeight::quadratic(2.0 * std::pow(eta, static_cast<double>(L)) * cfg.cert.P2);
  for (std::size_t k = 0; k < L; ++k) {
    const double disc = std::pow(eta, static_cast<double>(L - 1 - k));
    prob.w_weights.push_back(detail::TermWeight::quadratic(2.0 * disc * cfg.cert.Q));
    prob.y_weights.push_back(detail::TermWeight::quadratic(disc * cfg.cert.R));
  }

  Vec z0;
  if (cfg.solver.warm_start == WarmStart::true_sequence && true_candidate) {
    z0 = prob.pack(true_candidate->x_init, true_candidate->w_seq);
  } else if (initial_guess) {
    detail::check_sequence(model, *initial_guess, L, "initial guess");
    z0 = prob.pack(initial_guess->x_init, initial_guess->w_seq);
  } else {
    z0 = prob.pack(prior, std::vector<Vec>(L, Vec::Zero(model.q)));
  }
  auto res = detail::finish(prob, detail::projected_lm(prob, z0, cfg.solver));
  res.cost = mhe_cost(cfg.cert, prior, res.x_init, res.w_seq, res.y_seq, window.outputs);

  if (true_candidate) {
    detail::check_sequence(model, *true_candidate, L, "true candidate");
    const Trajectory cand = simulate(model, true_candidate->x_init, window.inputs, true_candidate->w_seq);
    const double ccost = mhe_cost(cfg.cert, prior, true_candidate->x_init, true_candidate->w_seq, cand.outputs,
                                  window.outputs);
    res.candidate_cost = ccost;
    if (ccost < res.cost) {
      res.x_init = true_candidate->x_init;
      res.w_seq = true_candidate->w_seq;
      res.x_seq = cand.states;
      res.y_seq = cand.outputs;
      res.cost = ccost;
      res.used_candidate = true;
      res.max_constraint_violation = 0.0;
      for (const auto& x : cand.states) {
        const Vec v = model.sets.X.violation(x);
        if (v.size()) res.max_constraint_violation = std::max(res.max_constraint_violation, v.cwiseAbs().maxCoeff());
      }
    }
  }
  return res;
}

/// Full information estimate over the whole history (window length t).
/// Quadratic comparison functions give an exact sum of squares; otherwise every
/// term is written as a radial residual and the same Gauss-Newton solver is used.
inline EstimateResult solve_fie(const SystemModel& model, const KFunctionSet& kfuns, const Vec& prior,
                                const MeasurementWindow& history, const SolverConfig& solver = {},
                                const std::optional<WindowSequence>& true_candidate = std::nullopt,
                                const std::optional<WindowSequence>& initial_guess = std::nullopt) {
  solver.validate();
  detail::require(kfuns.eta >= 0.0 && kfuns.eta < 1.0, "solve_fie: eta must lie in [0, 1)");
  detail::require(kfuns.alpha2.value && kfuns.sigma_w.value && kfuns.sigma_y.value,
                  "solve_fie: comparison functions missing");
  detail::check_window(model, history.inputs, history.outputs);
  detail::check_prior(model, prior, solver.prior_tolerance);
  const std::size_t t = history.size();

  detail::ShootingProblem prob;
  prob.model = &model;
  prob.prior = prior;
  prob.inputs = &history.inputs;
  prob.outputs = &history.outputs;
  prob.penalty_weight = solver.penalty_weight;
  const double eta = kfuns.eta;
  const double disc_prior = std::pow(eta, static_cast<double>(t));
  if (kfuns.quadratic()) {
    const auto In = Mat::Identity(model.n, model.n);
    const auto Iq = Mat::Identity(model.q, model.q);
    const auto Ip = Mat::Identity(model.p, model.p);
    prob.prior_weight = detail::TermWeight::quadratic(disc_prior * 4.0 * *kfuns.alpha2.quadratic_coeff * In);
    for (std::size_t k = 0; k < t; ++k) {
      const double disc = std::pow(eta, static_cast<double>(t - 1 - k));
      prob.w_weights.push_back(detail::TermWeight::quadratic(disc * 4.0 * *kfuns.sigma_w.quadratic_coeff * Iq));
      prob.y_weights.push_back(detail::TermWeight::quadratic(disc * *kfuns.sigma_y.quadratic_coeff * Ip));
    }
  } else {
    prob.prior_weight = detail::TermWeight::radial(kfuns.alpha2, disc_prior, 2.0);
    for (std::size_t k = 0; k < t; ++k) {
      const double disc = std::pow(eta, static_cast<double>(t - 1 - k));
      prob.w_weights.push_back(detail::TermWeight::radial(kfuns.sigma_w, disc, 2.0));
      prob.y_weights.push_back(detail::TermWeight::radial(kfuns.sigma_y, disc, 1.0));
    }
  }

  Vec z0;
  if (solver.warm_start == WarmStart::true_sequence && true_candidate) {
    z0 = prob.pack(true_candidate->x_init, true_candidate->w_seq);
  } else if (initial_guess) {
    detail::check_sequence(model, *initial_guess, t, "initial guess");
    z0 = prob.pack(initial_guess->x_init, initial_guess->w_seq);
  } else {
    z0 = prob.pack(prior, std::vector<Vec>(t, Vec::Zero(model.q)));
  }
  auto res = detail::finish(prob, detail::projected_lm(prob, z0, solver));
  res.cost = fie_cost(kfuns, prior, res.x_init, res.w_seq, res.y_seq, history.outputs, t);

  if (true_candidate) {
    detail::check_sequence(model, *true_candidate, t, "true candidate");
    const Trajectory cand = simulate(model, true_candidate->x_init, history.inputs, true_candidate->w_seq);
    const double ccost =
        fie_cost(kfuns, prior, true_candidate->x_init, true_candidate->w_seq, cand.outputs, history.outputs, t);
    res.candidate_cost = ccost;
    if (ccost < res.cost) {
      res.x_init = true_candidate->x_init;
      res.w_seq = true_candidate->w_seq;
      res.x_seq = cand.states;
      res.y_seq = cand.outputs;
      res.cost = ccost;
      res.used_candidate = true;
    }
  }
  return res;
}

}  // namespace mhecert

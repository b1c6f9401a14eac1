#pragma once

// Nonlinear perturbed system x+ = f(x,u,w), y = h(x,u,w) with box constraints.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mhecert/error.hpp"
#include "mhecert/linalg.hpp"

namespace mhecert {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Per-coordinate closed interval; +-inf encodes an unbounded coordinate.
class Box {
 public:
  Box() = default;
  explicit Box(Eigen::Index dim) : lower_(Vec::Constant(dim, -kInf)), upper_(Vec::Constant(dim, kInf)) {}
  Box(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    detail::require(lower_.size() == upper_.size(), "Box: bound dimension mismatch");
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      detail::require(!std::isnan(lower_[i]) && !std::isnan(upper_[i]), "Box: NaN bound");
      detail::require(lower_[i] <= upper_[i], "Box: lower bound exceeds upper bound");
    }
  }

  static Box symmetric(Eigen::Index dim, double bound) {
    return Box(Vec::Constant(dim, -bound), Vec::Constant(dim, bound));
  }

  Eigen::Index dim() const { return lower_.size(); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }

  bool contains(const Vec& v) const {
    if (v.size() != dim()) return false;
    for (Eigen::Index i = 0; i < dim(); ++i)
      if (!(v[i] >= lower_[i] && v[i] <= upper_[i])) return false;
    return true;
  }

  Vec project(const Vec& v) const { return v.cwiseMax(lower_).cwiseMin(upper_); }

  bool finite(Eigen::Index i) const { return std::isfinite(lower_[i]) && std::isfinite(upper_[i]); }
  bool is_bounded() const {
    for (Eigen::Index i = 0; i < dim(); ++i)
      if (!finite(i)) return false;
    return true;
  }

  /// Componentwise distance outside the box (zero inside).
  Vec violation(const Vec& v) const {
    return (v - upper_).cwiseMax(0.0) - (lower_ - v).cwiseMax(0.0);
  }

 private:
  Vec lower_;
  Vec upper_;
};

struct ConstraintSets {
  Box X, U, W, Y;
};

struct Linearization {
  Mat A, B;  // df/dx, df/dw
};

struct OutputLinearization {
  Mat C, D;  // dh/dx, dh/dw
};

/// Dynamics, output map, their analytic Jacobians and constraint sets.
/// Immutable after construction; all callbacks must be pure.
struct SystemModel {
  using Dynamics = std::function<Vec(const Vec&, const Vec&, const Vec&)>;
  using DynamicsJacobian = std::function<Linearization(const Vec&, const Vec&, const Vec&)>;
  using OutputJacobian = std::function<OutputLinearization(const Vec&, const Vec&, const Vec&)>;

  std::string name;
  Eigen::Index n = 0, m = 0, q = 0, p = 0;
  Dynamics f;
  Dynamics h;
  DynamicsJacobian jac_f;
  OutputJacobian jac_h;
  ConstraintSets sets;

  void check_dims(const Vec& x, const Vec& u, const Vec& w) const {
    detail::require(x.size() == n, "state dimension mismatch for model '" + name + "'");
    detail::require(u.size() == m, "input dimension mismatch for model '" + name + "'");
    detail::require(w.size() == q, "disturbance dimension mismatch for model '" + name + "'");
  }
};

struct StepResult {
  Vec next_state;
  Vec output;
};

inline StepResult step(const SystemModel& model, const Vec& x, const Vec& u, const Vec& w) {
  model.check_dims(x, u, w);
  return {model.f(x, u, w), model.h(x, u, w)};
}

/// A simulated or measured trajectory: |states| = T+1, the other sequences have length T.
struct Trajectory {
  std::vector<Vec> states;
  std::vector<Vec> inputs;
  std::vector<Vec> disturbances;
  std::vector<Vec> outputs;
  long start_time = 0;

  std::size_t length() const { return inputs.size(); }
  bool consistent() const {
    return states.size() == inputs.size() + 1 && disturbances.size() == inputs.size() &&
           outputs.size() == inputs.size();
  }
};

inline Trajectory simulate(const SystemModel& model, const Vec& x0, const std::vector<Vec>& inputs,
                           const std::vector<Vec>& disturbances, long start_time = 0) {
  detail::require(inputs.size() == disturbances.size(), "simulate: input/disturbance length mismatch");
  Trajectory traj;
  traj.start_time = start_time;
  traj.inputs = inputs;
  traj.disturbances = disturbances;
  traj.states.reserve(inputs.size() + 1);
  traj.outputs.reserve(inputs.size());
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto [xn, y] = step(model, traj.states.back(), inputs[k], disturbances[k]);
    traj.outputs.push_back(std::move(y));
    traj.states.push_back(std::move(xn));
  }
  return traj;
}

/// Re-simulates from states[0] and reports whether every state and output is reproduced bit for bit.
inline bool replays_exactly(const SystemModel& model, const Trajectory& traj) {
  if (!traj.consistent() || traj.states.empty()) return false;
  Trajectory again = simulate(model, traj.states.front(), traj.inputs, traj.disturbances, traj.start_time);
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    if (again.states[k] != traj.states[k]) return false;
  for (std::size_t k = 0; k < traj.outputs.size(); ++k)
    if (again.outputs[k] != traj.outputs[k]) return false;
  return true;
}

struct SamplePoint {
  Vec x, u, w;
};

struct JacobianReport {
  double max_dev_A = 0.0, max_dev_B = 0.0, max_dev_C = 0.0, max_dev_D = 0.0;
  double max_deviation = 0.0;
  bool pass = false;
};

namespace detail {

inline double max_rel_dev(const Mat& analytic, const Mat& fd) {
  if (analytic.size() == 0) return 0.0;
  return ((analytic - fd).array().abs() / (1.0 + analytic.array().abs())).maxCoeff();
}

}  // namespace detail

/// Compares the analytic Jacobians with central differences at each sample.
inline JacobianReport check_jacobians(const SystemModel& model, const std::vector<SamplePoint>& samples,
                                      double tol, double fd_step = 1e-6) {
  JacobianReport rep;
  for (const auto& s : samples) {
    model.check_dims(s.x, s.u, s.w);
    Mat Afd(model.n, model.n), Bfd(model.n, model.q), Cfd(model.p, model.n), Dfd(model.p, model.q);
    for (Eigen::Index i = 0; i < model.n; ++i) {
      Vec xp = s.x, xm = s.x;
      xp[i] += fd_step;
      xm[i] -= fd_step;
      Afd.col(i) = (model.f(xp, s.u, s.w) - model.f(xm, s.u, s.w)) / (2 * fd_step);
      Cfd.col(i) = (model.h(xp, s.u, s.w) - model.h(xm, s.u, s.w)) / (2 * fd_step);
    }
    for (Eigen::Index i = 0; i < model.q; ++i) {
      Vec wp = s.w, wm = s.w;
      wp[i] += fd_step;
      wm[i] -= fd_step;
      Bfd.col(i) = (model.f(s.x, s.u, wp) - model.f(s.x, s.u, wm)) / (2 * fd_step);
      Dfd.col(i) = (model.h(s.x, s.u, wp) - model.h(s.x, s.u, wm)) / (2 * fd_step);
    }
    const auto lf = model.jac_f(s.x, s.u, s.w);
    const auto lh = model.jac_h(s.x, s.u, s.w);
    rep.max_dev_A = std::max(rep.max_dev_A, detail::max_rel_dev(lf.A, Afd));
    rep.max_dev_B = std::max(rep.max_dev_B, detail::max_rel_dev(lf.B, Bfd));
    rep.max_dev_C = std::max(rep.max_dev_C, detail::max_rel_dev(lh.C, Cfd));
    rep.max_dev_D = std::max(rep.max_dev_D, detail::max_rel_dev(lh.D, Dfd));
  }
  rep.max_deviation = std::max({rep.max_dev_A, rep.max_dev_B, rep.max_dev_C, rep.max_dev_D});
  rep.pass = rep.max_deviation <= tol;
  return rep;
}

struct ReactorParams {
  double k1 = 0.16;
  double k2 = 0.0064;
  double dt = 0.1;
  double x_lower = 0.1;
  double x_upper = 4.5;
  double w_bound = 1e-3;
};

/// Euler-discretized 2A <-> B batch reactor:
///   x1+ = x1 + dt(-2 k1 x1^2 + 2 k2 x2) + 5 w1
///   x2+ = x2 + dt(k1 x1^2 - k2 x2) + 2 w2
///   y   = x1 + x2 + 10 w3
inline SystemModel reactor_model(const ReactorParams& prm = {}) {
  SystemModel sys;
  sys.name = "reactor";
  sys.n = 2;
  sys.m = 0;
  sys.q = 3;
  sys.p = 1;
  const double k1 = prm.k1, k2 = prm.k2, dt = prm.dt;
  sys.f = [=](const Vec& x, const Vec&, const Vec& w) {
    Vec xn(2);
    xn[0] = x[0] + dt * (-2.0 * k1 * x[0] * x[0] + 2.0 * k2 * x[1]) + 5.0 * w[0];
    xn[1] = x[1] + dt * (k1 * x[0] * x[0] - k2 * x[1]) + 2.0 * w[1];
    return xn;
  };
  sys.h = [](const Vec& x, const Vec&, const Vec& w) {
    Vec y(1);
    y[0] = x[0] + x[1] + 10.0 * w[2];
    return y;
  };
  sys.jac_f = [=](const Vec& x, const Vec&, const Vec&) {
    Linearization l{Mat(2, 2), Mat::Zero(2, 3)};
    l.A << 1.0 - 4.0 * dt * k1 * x[0], 2.0 * dt * k2,
           2.0 * dt * k1 * x[0], 1.0 - dt * k2;
    l.B(0, 0) = 5.0;
    l.B(1, 1) = 2.0;
    return l;
  };
  sys.jac_h = [](const Vec&, const Vec&, const Vec&) {
    OutputLinearization l{Mat::Ones(1, 2), Mat::Zero(1, 3)};
    l.D(0, 2) = 10.0;
    return l;
  };
  sys.sets.X = Box(Vec::Constant(2, prm.x_lower), Vec::Constant(2, prm.x_upper));
  sys.sets.U = Box(0);
  sys.sets.W = Box::symmetric(3, prm.w_bound);
  sys.sets.Y = Box(1);
  return sys;
}

/// x+ = A x + B w (+ G u), y = C x + D w. Unbounded boxes unless supplied.
inline SystemModel linear_model(const Mat& A, const Mat& B, const Mat& C, const Mat& D,
                                ConstraintSets sets = {}, Mat G = {}) {
  detail::require(A.rows() == A.cols(), "linear_model: A must be square");
  detail::require(B.rows() == A.rows() && C.cols() == A.cols(), "linear_model: B/C dimension mismatch");
  detail::require(D.rows() == C.rows() && D.cols() == B.cols(), "linear_model: D dimension mismatch");
  SystemModel sys;
  sys.name = "linear";
  sys.n = A.rows();
  sys.q = B.cols();
  sys.p = C.rows();
  sys.m = G.size() == 0 ? 0 : G.cols();
  if (G.size() == 0) G = Mat::Zero(sys.n, 0);
  detail::require(G.rows() == sys.n, "linear_model: G dimension mismatch");
  sys.f = [=](const Vec& x, const Vec& u, const Vec& w) -> Vec { return A * x + B * w + G * u; };
  sys.h = [=](const Vec& x, const Vec&, const Vec& w) -> Vec { return C * x + D * w; };
  sys.jac_f = [=](const Vec&, const Vec&, const Vec&) { return Linearization{A, B}; };
  sys.jac_h = [=](const Vec&, const Vec&, const Vec&) { return OutputLinearization{C, D}; };
  sys.sets.X = sets.X.dim() == sys.n ? sets.X : Box(sys.n);
  sys.sets.U = sets.U.dim() == sys.m ? sets.U : Box(sys.m);
  sys.sets.W = sets.W.dim() == sys.q ? sets.W : Box(sys.q);
  sys.sets.Y = sets.Y.dim() == sys.p ? sets.Y : Box(sys.p);
  return sys;
}

/// Serializable description of a built-in model.
struct ModelConfig {
  std::string kind = "reactor";  // reactor | linear
  ReactorParams reactor;
  Mat A, B, C, D;
  ConstraintSets sets;  // linear models only; empty boxes mean unbounded

  SystemModel build() const {
    if (kind == "reactor") return reactor_model(reactor);
    if (kind == "linear") return linear_model(A, B, C, D, sets);
    throw UsageError("unknown model kind '" + kind + "'");
  }
};

}  // namespace mhecert

#pragma once

// Closed-loop plant + estimator simulation with per-step inequality monitors.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mhecert/analyze.hpp"
#include "mhecert/certify.hpp"
#include "mhecert/error.hpp"
#include "mhecert/estimate.hpp"
#include "mhecert/model.hpp"
#include "mhecert/random.hpp"

namespace mhecert {

/// Uniform sample from a bounded box, a pure function of (seed, t, coordinate).
inline Vec sample_disturbance(std::uint64_t seed, std::uint64_t t, const Box& box) {
  Vec w(box.dim());
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    detail::require(box.finite(i), "sample_disturbance: unbounded box coordinate");
    const double lo = box.lower()[i], hi = box.upper()[i];
    const double u = counter_uniform(seed, t, static_cast<std::uint64_t>(i));
    w[i] = std::min(lo + (hi - lo) * u, hi);
  }
  return w;
}

enum class EstimatorKind { mhe, fie };
enum class DisturbanceKind { uniform_box, zero };

struct MonitorFlags {
  bool value_bound = true;    // W(x^_t) against prior weighting + value function
  bool mstep = true;          // M-step decrease against the true-sequence cost
  bool rges = true;           // exponential error envelope (needs the horizon condition)
  bool fie_lyapunov = true;   // FIE bound on W(x^_t)
  bool alt_lyapunov = true;   // decrease of the alternative Lyapunov-like function
  bool fie_error = true;      // FIE error bound
};

struct ScenarioConfig {
  ModelConfig model;
  DiossCertificate cert;
  EstimatorKind estimator = EstimatorKind::mhe;
  int horizon = 15;
  SolverConfig solver;
  Vec x0_true;
  Vec x0_hat;
  long T = 300;
  std::uint64_t seed = 1;
  DisturbanceKind disturbance = DisturbanceKind::uniform_box;
  MonitorFlags monitors;
  bool candidate = true;  // pass the true sequence to the solver

  static ScenarioConfig reactor_default() {
    ScenarioConfig c;
    Mat P(2, 2);
    P << 1.249, 1.146, 1.146, 1.053;
    c.cert = DiossCertificate::from_metric(P, 1e4 * Mat::Identity(3, 3), 100.0 * Mat::Identity(1, 1), 0.91);
    c.x0_true = (Vec(2) << 3.0, 1.0).finished();
    c.x0_hat = (Vec(2) << 0.1, 4.5).finished();
    return c;
  }

  void validate(const SystemModel& sys) const {
    cert.validate();
    solver.validate();
    detail::require(cert.n() == sys.n && cert.Q.rows() == sys.q && cert.R.rows() == sys.p,
                    "scenario: certificate dimensions do not match the model");
    detail::require(horizon >= 0, "scenario: horizon must be nonnegative");
    detail::require(T >= 1, "scenario: T must be at least 1");
    detail::require(sys.sets.X.contains(x0_true), "scenario: x0_true outside X");
    detail::require(sys.sets.X.contains(x0_hat), "scenario: x0_hat outside X");
    if (disturbance == DisturbanceKind::uniform_box) detail::require(sys.sets.W.is_bounded(), "scenario: W must be bounded");
    else detail::require(sys.sets.W.contains(Vec::Zero(sys.q)), "scenario: zero disturbance outside W");
  }
};

struct StepRecord {
  long t = 0;
  Vec x, xhat, err;
  double err_norm = 0.0;
  double W_delta = 0.0;  // ||e||_P1^2
  std::optional<double> cost, candidate_cost;
  bool converged = true;
  bool used_candidate = false;
  int iterations = 0;
  double constraint_violation = 0.0;
  std::optional<MonitorValue> value_bound, mstep, rges, fie_lyapunov, alt_lyapunov, fie_error;
};

struct MonitorSummary {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double max_residual = -kInf;
  double max_relative = -kInf;  // residual / (1 + |bound|)
};

struct SimulationSummary {
  MonitorSummary value_bound, mstep, rges, fie_lyapunov, alt_lyapunov, fie_error;
  double final_error = 0.0;
  double wall_time = 0.0;
  std::size_t nonconverged = 0;
  bool horizon_condition = false;
  double rho_M = 0.0;
  bool aborted = false;
  std::string diagnostic;

  bool monitors_ok() const {
    for (const auto* m : {&value_bound, &mstep, &rges, &fie_lyapunov, &alt_lyapunov, &fie_error})
      if (m->violations > 0) return false;
    return true;
  }
};

struct SimulationLog {
  std::vector<StepRecord> records;
  SimulationSummary summary;
};

namespace detail {

inline void tally(MonitorSummary& s, const std::optional<MonitorValue>& m) {
  if (!m) return;
  ++s.checked;
  const double r = m->residual();
  s.max_residual = std::max(s.max_residual, r);
  s.max_relative = std::max(s.max_relative, r / (1.0 + std::abs(m->bound)));
  if (!m->holds()) ++s.violations;
}

}  // namespace detail

inline SimulationLog run_scenario(const ScenarioConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const SystemModel sys = cfg.model.build();
  cfg.validate(sys);
  const DiossCertificate& cert = cfg.cert;
  const bool is_fie = cfg.estimator == EstimatorKind::fie;
  const long M = is_fie ? cfg.T : cfg.horizon;

  SimulationLog log;
  auto& sum = log.summary;
  const auto hc = horizon_condition(cert, cfg.horizon);
  sum.horizon_condition = !is_fie && hc.satisfied && cfg.horizon >= 1;
  sum.rho_M = hc.rho_M;
  std::optional<RgesBound> rges;
  if (sum.horizon_condition) rges = RgesBound::from_certificate(cert, cfg.horizon);
  const KFunctionSet kfuns = kfunctions_from_certificate(cert);

  MheConfig mcfg{cfg.horizon, cert, cfg.solver};
  std::vector<Vec> xs{cfg.x0_true}, xhats, ws, us, ys;
  std::vector<EstimateResult> results;
  std::vector<std::optional<double>> alt_values;
  const Vec e0 = cfg.x0_true - cfg.x0_hat;
  const double e0_P2 = std::sqrt(sq_norm(e0, cert.P2));

  for (long t = 0; t <= cfg.T; ++t) {
    if (t > 0) {
      const std::size_t k = static_cast<std::size_t>(t - 1);
      Vec w = cfg.disturbance == DisturbanceKind::zero ? Vec::Zero(sys.q)
                                                       : sample_disturbance(cfg.seed, static_cast<std::uint64_t>(k), sys.sets.W);
      Vec u = Vec::Zero(sys.m);
      auto [xn, y] = step(sys, xs[k], u, w);
      ws.push_back(std::move(w));
      us.push_back(std::move(u));
      ys.push_back(std::move(y));
      if (!sys.sets.X.contains(xn)) {
        sum.aborted = true;
        sum.diagnostic = "plant state left X at t=" + std::to_string(t);
        break;
      }
      xs.push_back(std::move(xn));
    }

    const long Mt = std::min(t, M);
    const std::size_t first = static_cast<std::size_t>(t - Mt);
    MeasurementWindow win{{us.begin() + static_cast<long>(first), us.end()},
                          {ys.begin() + static_cast<long>(first), ys.end()}};
    const std::vector<Vec> w_window(ws.begin() + static_cast<long>(first), ws.end());
    std::optional<WindowSequence> cand;
    if (cfg.candidate) cand = WindowSequence{xs[first], w_window};
    std::optional<WindowSequence> guess;
    if (cfg.solver.warm_start == WarmStart::previous_shifted && !results.empty())
      guess = shifted_guess(results.back(), static_cast<std::size_t>(Mt), sys.q);

    EstimateResult res;
    if (is_fie) {
      res = solve_fie(sys, kfuns, cfg.x0_hat, win, cfg.solver, cand, guess);
    } else {
      const Vec& prior = t == 0 ? cfg.x0_hat : xhats[first];
      res = solve_mhe(sys, mcfg, prior, win, cand, guess);
    }

    StepRecord rec;
    rec.t = t;
    rec.x = xs.back();
    rec.xhat = res.estimate();
    rec.err = rec.x - rec.xhat;
    rec.err_norm = rec.err.norm();
    rec.W_delta = sq_norm(rec.err, cert.P1);
    rec.cost = res.cost;
    rec.candidate_cost = res.candidate_cost;
    rec.converged = res.converged;
    rec.used_candidate = res.used_candidate;
    rec.iterations = res.iterations;
    rec.constraint_violation = res.max_constraint_violation;
    if (!res.converged) ++sum.nonconverged;

    const auto& mon = cfg.monitors;
    if (is_fie) {
      if (mon.fie_lyapunov)
        rec.fie_lyapunov = MonitorValue{sq_norm(rec.err, cert.P), fie_lyapunov_bound(kfuns, sq_norm(e0, cert.P), ws,
                                                                                     static_cast<std::size_t>(t))};
      if (mon.fie_error)
        rec.fie_error = MonitorValue{rec.err_norm, fie_error_bound(kfuns, e0.norm(), ws, static_cast<std::size_t>(t))};
    } else {
      const Vec& xhat_past = t == 0 ? cfg.x0_hat : xhats[first];
      const double W_past = sq_norm(xhat_past - xs[first], cert.P2);
      if (mon.value_bound) rec.value_bound = value_function_bound(cert, rec.W_delta, W_past, res.cost, w_window);
      if (mon.mstep) rec.mstep = mstep_decrease(cert, rec.W_delta, W_past, w_window);
      if (mon.rges && rges)
        rec.rges = MonitorValue{std::sqrt(rec.W_delta), rges_error_bound(*rges, e0_P2, ws, static_cast<std::size_t>(t))};
      std::optional<double> alt;
      if (t >= M) alt = alt_lyapunov_value(cert, M, W_past, res.cost, w_window);
      alt_values.push_back(alt);
      if (mon.alt_lyapunov && t >= 2 * M && M >= 1) {
        const auto& prev = alt_values[static_cast<std::size_t>(t - M)];
        const double bound = 4.0 * std::pow(cert.eta, static_cast<double>(M)) * cert.bound_ratio() * *prev +
                             4.0 * detail::discounted_q_sum(cert, w_window);
        rec.alt_lyapunov = MonitorValue{*alt, bound};
      }
    }
    detail::tally(sum.value_bound, rec.value_bound);
    detail::tally(sum.mstep, rec.mstep);
    detail::tally(sum.rges, rec.rges);
    detail::tally(sum.fie_lyapunov, rec.fie_lyapunov);
    detail::tally(sum.alt_lyapunov, rec.alt_lyapunov);
    detail::tally(sum.fie_error, rec.fie_error);

    xhats.push_back(rec.xhat);
    results.push_back(std::move(res));
    log.records.push_back(std::move(rec));
  }
  if (!log.records.empty()) sum.final_error = log.records.back().err_norm;
  sum.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

}  // namespace mhecert

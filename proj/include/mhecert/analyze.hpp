#pragma once

// Horizon conditions, M-step decrease residuals and closed-form error bounds.

#include <cmath>
#include <string>
#include <vector>

#include "mhecert/certify.hpp"
#include "mhecert/error.hpp"
#include "mhecert/estimate.hpp"
#include "mhecert/linalg.hpp"

namespace mhecert {

enum class Method { proposed, allan2021FIE, knuefer2021MHE, allan2019moving };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::proposed: return "proposed";
    case Method::allan2021FIE: return "allan2021FIE";
    case Method::knuefer2021MHE: return "knuefer2021MHE";
    case Method::allan2019moving: return "allan2019moving";
  }
  return "?";
}

/// Contraction condition C mu^M < 1.
struct ContractionSpec {
  double C = 1.0;
  double mu = 0.5;
  Method method = Method::proposed;
  bool is_lower_bound = false;  // C and mu are only strict lower bounds for this method

  void validate() const {
    detail::require(C > 0.0 && std::isfinite(C), "ContractionSpec: C must be positive");
    detail::require(mu > 0.0 && mu < 1.0, "ContractionSpec: mu must lie in (0, 1)");
  }
};

/// Smallest M >= 0 with C mu^M < 1 (strict).
inline long min_horizon(double C, double mu) {
  detail::require(C > 0.0 && std::isfinite(C), "min_horizon: C must be positive");
  detail::require(mu > 0.0, "min_horizon: mu must be positive");
  if (C < 1.0) return 0;
  detail::require(mu < 1.0, "min_horizon: no finite horizon for mu >= 1 and C >= 1");
  const double guess = std::ceil(-std::log(C) / std::log(mu));
  detail::require(guess < 1e15, "min_horizon: horizon too large to represent");
  long m = std::max(0L, static_cast<long>(guess));
  auto holds = [&](long k) { return C * std::pow(mu, static_cast<double>(k)) < 1.0; };
  while (!holds(m)) ++m;
  while (m > 0 && holds(m - 1)) --m;
  return m;
}

inline long min_horizon(const ContractionSpec& s) {
  s.validate();
  return min_horizon(s.C, s.mu);
}

struct HorizonCondition {
  double rho_M = 0.0;  // 4 eta^M lambda_max(P2, P1)
  double rho = 0.0;    // (rho_M)^(1/M), undefined (0) for M = 0
  bool satisfied = false;
};

inline HorizonCondition horizon_condition(const DiossCertificate& cert, long M) {
  detail::require(M >= 0, "horizon_condition: M must be nonnegative");
  const double lam = cert.bound_ratio();
  HorizonCondition h;
  h.rho_M = 4.0 * std::pow(cert.eta, static_cast<double>(M)) * lam;
  h.satisfied = h.rho_M < 1.0;
  if (M >= 1) h.rho = std::pow(4.0 * lam, 1.0 / static_cast<double>(M)) * cert.eta;
  return h;
}

/// The four contraction conditions compared in the literature table.
inline std::vector<ContractionSpec> table1_specs(const DiossCertificate& cert) {
  const double c1 = lambda_min_sym(cert.P1);
  const double c2 = lambda_max_sym(cert.P2);
  const double eta = cert.eta;
  const double ratio = c2 / c1;
  std::vector<ContractionSpec> out;
  out.push_back({4.0 * cert.bound_ratio(), eta, Method::proposed, false});
  // (1 - (1-eta) c1/(4 c2))^(1/4), computed via log1p to keep resolution when c1 << c2
  const double mu_fie = std::exp(0.25 * std::log1p(-(1.0 - eta) / (4.0 * ratio)));
  out.push_back({std::sqrt(4.0 * ratio), mu_fie, Method::allan2021FIE, true});
  out.push_back({8.0 * ratio, eta, Method::knuefer2021MHE, false});
  out.push_back({3.0 * std::sqrt(8.0 * ratio), std::sqrt(eta), Method::allan2019moving, false});
  return out;
}

namespace detail {

inline double discounted_q_sum(const DiossCertificate& cert, const std::vector<Vec>& w_window) {
  // w_window ordered oldest first; the last element carries discount eta^0
  double s = 0.0;
  const std::size_t L = w_window.size();
  for (std::size_t k = 0; k < L; ++k)
    s += std::pow(cert.eta, static_cast<double>(L - 1 - k)) * sq_norm(w_window[k], cert.Q);
  return s;
}

}  // namespace detail

/// Bound and residual of an inequality "value <= bound".
struct MonitorValue {
  double value = 0.0;
  double bound = 0.0;
  double residual() const { return value - bound; }
  bool holds(double rel_tol = 1e-8) const { return residual() <= rel_tol * (1.0 + std::abs(bound)); }
};

/// Prior-weighting bound: W_now <= 2 eta^L lambda W_past + cost + 2 sum eta^{j-1} ||w||_Q^2.
inline MonitorValue value_function_bound(const DiossCertificate& cert, double W_now, double W_past, double cost,
                                         const std::vector<Vec>& w_window) {
  const double L = static_cast<double>(w_window.size());
  return {W_now, 2.0 * std::pow(cert.eta, L) * cert.bound_ratio() * W_past + cost +
                     2.0 * detail::discounted_q_sum(cert, w_window)};
}

/// M-step decrease: W_now <= 4 eta^L lambda W_past + 4 sum eta^{j-1} ||w||_Q^2.
inline MonitorValue mstep_decrease(const DiossCertificate& cert, double W_now, double W_past,
                                   const std::vector<Vec>& w_window) {
  const double L = static_cast<double>(w_window.size());
  return {W_now, 4.0 * std::pow(cert.eta, L) * cert.bound_ratio() * W_past +
                     4.0 * detail::discounted_q_sum(cert, w_window)};
}

inline double mstep_decrease_residual(const DiossCertificate& cert, double W_now, double W_past,
                                      const std::vector<Vec>& w_window) {
  return mstep_decrease(cert, W_now, W_past, w_window).residual();
}

/// Same decrease written with a contraction rate: W_now <= rho^L W_past + 4 sum eta^{j-1} ||w||_Q^2.
inline double mstep_decrease_residual(const DiossCertificate& cert, double W_now, double W_past,
                                      const std::vector<Vec>& w_window, double rho) {
  const double L = static_cast<double>(w_window.size());
  return W_now - (std::pow(rho, L) * W_past + 4.0 * detail::discounted_q_sum(cert, w_window));
}

struct RgesBound {
  double rho = 0.0;
  Mat P1, P2, Q;

  static RgesBound from_certificate(const DiossCertificate& cert, long M) {
    const auto h = horizon_condition(cert, M);
    detail::require(M >= 1 && h.satisfied, "RgesBound: horizon condition not satisfied");
    return {h.rho, cert.P1, cert.P2, cert.Q};
  }
};

/// max{ 4 sqrt(rho)^t ||e0||_P2, max_q 4/(1 - rho^(1/4)) rho^(q/4) ||w_{t-q-1}||_Q }.
/// disturbances holds w_0 .. w_{t-1}.
inline double rges_error_bound(const RgesBound& b, double e0_P2norm, const std::vector<Vec>& disturbances,
                               std::size_t t) {
  detail::require(b.rho >= 0.0 && b.rho < 1.0, "rges_error_bound: rho must lie in [0, 1)");
  detail::require(disturbances.size() >= t, "rges_error_bound: disturbance history shorter than t");
  const double r4 = std::pow(b.rho, 0.25);
  double bound = 4.0 * std::pow(std::sqrt(b.rho), static_cast<double>(t)) * e0_P2norm;
  for (std::size_t q = 0; q < t; ++q) {
    const double wq = std::sqrt(std::max(sq_norm(disturbances[t - q - 1], b.Q), 0.0));
    bound = std::max(bound, 4.0 / (1.0 - r4) * std::pow(r4, static_cast<double>(q)) * wq);
  }
  return bound;
}

/// 2 eta^M lambda W_past + cost + 2 sum eta^{j-1} ||w||_Q^2 over the last M disturbances.
inline double alt_lyapunov_value(const DiossCertificate& cert, long M, double W_past, double cost,
                                 const std::vector<Vec>& w_window) {
  detail::require(M >= 0 && w_window.size() >= static_cast<std::size_t>(M),
                  "alt_lyapunov_value: disturbance window shorter than M");
  const std::vector<Vec> last(w_window.end() - M, w_window.end());
  return 2.0 * std::pow(cert.eta, static_cast<double>(M)) * cert.bound_ratio() * W_past + cost +
         2.0 * detail::discounted_q_sum(cert, last);
}

/// max{ 2 a1^-1(4 eta^t a2(2 e0)), max_j 2 a1^-1(4/(1 - sqrt(eta)) sqrt(eta)^j sw(2 ||w_{t-j-1}||)) }.
inline double fie_error_bound(const KFunctionSet& k, double e0_norm, const std::vector<Vec>& disturbances,
                              std::size_t t) {
  detail::require(k.alpha1.has_inverse(), "fie_error_bound: alpha1 inverse is required");
  detail::require(disturbances.size() >= t, "fie_error_bound: disturbance history shorter than t");
  const double eta = k.eta;
  const double se = std::sqrt(eta);
  double bound = 2.0 * k.alpha1.inv(4.0 * std::pow(eta, static_cast<double>(t)) * k.alpha2(2.0 * e0_norm));
  for (std::size_t j = 0; j < t; ++j) {
    const double v = 4.0 / (1.0 - se) * std::pow(se, static_cast<double>(j)) *
                     k.sigma_w(2.0 * disturbances[t - j - 1].norm());
    bound = std::max(bound, 2.0 * k.alpha1.inv(v));
  }
  return bound;
}

/// Bound on W(x^_t, x_t) for FIE: 2 eta^t a2(2 a1^-1(W0)) + 2 sum eta^{j-1} sw(2 ||w_{t-j}||).
inline double fie_lyapunov_bound(const KFunctionSet& k, double W0, const std::vector<Vec>& disturbances,
                                 std::size_t t) {
  detail::require(k.alpha1.has_inverse(), "fie_lyapunov_bound: alpha1 inverse is required");
  detail::require(disturbances.size() >= t, "fie_lyapunov_bound: disturbance history shorter than t");
  double b = 2.0 * std::pow(k.eta, static_cast<double>(t)) * k.alpha2(2.0 * k.alpha1.inv(W0));
  for (std::size_t j = 1; j <= t; ++j)
    b += 2.0 * std::pow(k.eta, static_cast<double>(j - 1)) * k.sigma_w(2.0 * disturbances[t - j].norm());
  return b;
}

}  // namespace mhecert

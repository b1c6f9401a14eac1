#pragma once

// Exponential delta-IOSS certificates with a constant metric.
//
// For a constant metric P the dissipation inequality
//   ||x+ - x~+||_P^2 <= eta ||x - x~||_P^2 + ||w - w~||_Q^2 + ||y - y~||_R^2
// holds on convex X x W whenever the differential LMI
//   [ A'PA - eta P - C'RC    A'PB - C'RD     ]
//   [ B'PA - D'RC            B'PB - Q - D'RD ]  <= 0
// holds at every linearization point. We check the LMI on vertex or grid
// samples; vertex checks are exact when [A B] is affine in the sampled
// coordinates and C, D are constant (each quadratic form is then convex along
// the box, so its maximum sits at a vertex).

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mhecert/error.hpp"
#include "mhecert/linalg.hpp"
#include "mhecert/model.hpp"
#include "mhecert/random.hpp"
#include "mhecert/sdp.hpp"

namespace mhecert {

struct DiossCertificate {
  Mat P;   // constant metric used in the LMI
  Mat P1;  // lower quadratic bound
  Mat P2;  // upper quadratic bound
  Mat Q;
  Mat R;
  double eta = 0.0;
  std::optional<Mat> transform;  // constant linear coordinate change, identity when empty

  /// Quadratic certificate with P1 = P2 = P.
  static DiossCertificate from_metric(Mat P, Mat Q, Mat R, double eta, std::optional<Mat> transform = {}) {
    DiossCertificate c;
    c.P1 = P;
    c.P2 = P;
    c.P = std::move(P);
    c.Q = std::move(Q);
    c.R = std::move(R);
    c.eta = eta;
    c.transform = std::move(transform);
    return c;
  }

  Eigen::Index n() const { return P.rows(); }
  bool quadratic() const { return P1 == P2; }

  /// lambda_max(P2, P1)
  double bound_ratio() const { return generalized_eigmax(P2, P1); }

  /// Value of the quadratic Lyapunov function ||a - b||_P^2.
  double w_delta(const Vec& a, const Vec& b) const { return sq_norm(a - b, P); }

  void validate() const {
    const Eigen::Index nn = P.rows();
    detail::require(nn > 0 && P.cols() == nn, "certificate: P must be square and nonempty");
    detail::require(P1.rows() == nn && P1.cols() == nn && P2.rows() == nn && P2.cols() == nn,
                    "certificate: P1/P2 dimension mismatch");
    detail::require(Q.rows() == Q.cols() && R.rows() == R.cols(), "certificate: Q and R must be square");
    detail::require(is_symmetric(P, 1e-10) && is_symmetric(Q, 1e-10) && is_symmetric(R, 1e-10),
                    "certificate: matrices must be symmetric");
    detail::require(is_pd(P1) && is_pd(P2) && is_pd(P), "certificate: P, P1, P2 must be positive definite");
    detail::require(loewner_leq(P1, P2), "certificate: P1 <= P2 violated");
    detail::require(is_psd(Q) && is_psd(R), "certificate: Q and R must be positive semidefinite");
    detail::require(eta >= 0.0 && eta < 1.0, "certificate: eta must lie in [0, 1)");
    if (transform) {
      detail::require(transform->rows() == nn && transform->cols() == nn, "certificate: transform dimension mismatch");
      detail::require(std::abs(transform->determinant()) > 1e-14 * (1.0 + std::pow(transform->norm(), nn)),
                      "certificate: transform is singular");
    }
  }
};

struct LmiSample {
  SamplePoint point;
  Mat A, B, C, D;
};

inline LmiSample linearize(const SystemModel& model, const SamplePoint& pt) {
  model.check_dims(pt.x, pt.u, pt.w);
  auto lf = model.jac_f(pt.x, pt.u, pt.w);
  auto lh = model.jac_h(pt.x, pt.u, pt.w);
  return {pt, std::move(lf.A), std::move(lf.B), std::move(lh.C), std::move(lh.D)};
}

/// The (n+q) x (n+q) differential dissipation matrix; negative semidefinite iff the
/// dissipation inequality holds for the linearization at the sample.
inline Mat lmi_matrix(const LmiSample& s, const Mat& P, const Mat& Q, const Mat& R, double eta) {
  const Eigen::Index n = s.A.rows(), q = s.B.cols();
  detail::require(s.A.cols() == n && s.B.rows() == n && s.C.cols() == n && s.D.rows() == s.C.rows() &&
                      s.D.cols() == q,
                  "lmi_matrix: linearization dimensions inconsistent");
  detail::require(P.rows() == n && P.cols() == n && Q.rows() == q && R.rows() == s.C.rows(),
                  "lmi_matrix: weight dimensions inconsistent");
  Mat M(n + q, n + q);
  const Mat PA = P * s.A, PB = P * s.B, RC = R * s.C, RD = R * s.D;
  M.topLeftCorner(n, n) = s.A.transpose() * PA - eta * P - s.C.transpose() * RC;
  M.topRightCorner(n, q) = s.A.transpose() * PB - s.C.transpose() * RD;
  M.bottomLeftCorner(q, n) = M.topRightCorner(n, q).transpose();
  M.bottomRightCorner(q, q) = s.B.transpose() * PB - Q - s.D.transpose() * RD;
  return symmetrize(M);
}

// ---------------------------------------------------------------------------
// Sampling plans over the stacked coordinate vector (x, u, w).

enum class PlanMode { vertices, grid };
enum class Soundness { exact, heuristic };

inline const char* to_string(Soundness s) { return s == Soundness::exact ? "exact" : "heuristic"; }

struct SamplingPlan {
  PlanMode mode = PlanMode::vertices;
  std::vector<int> scheduled;    // indices into (x, u, w)
  std::vector<int> grid_counts;  // grid mode: one count per scheduled index
};

/// X x U x W as a single box over the stacked vector (x, u, w).
inline Box stacked_box(const SystemModel& model) {
  const Eigen::Index d = model.n + model.m + model.q;
  Vec lo(d), hi(d);
  lo << model.sets.X.lower(), model.sets.U.lower(), model.sets.W.lower();
  hi << model.sets.X.upper(), model.sets.U.upper(), model.sets.W.upper();
  return Box(lo, hi);
}

inline SamplePoint split_point(const SystemModel& model, const Vec& z) {
  return {z.head(model.n), z.segment(model.n, model.m), z.tail(model.q)};
}

/// Representative value of a coordinate that is not sampled.
inline double nominal_coordinate(const Box& box, Eigen::Index i) {
  const double lo = box.lower()[i], hi = box.upper()[i];
  if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
  if (std::isfinite(lo)) return std::max(lo, 0.0);
  if (std::isfinite(hi)) return std::min(hi, 0.0);
  return 0.0;
}

inline Vec nominal_point(const Box& box) {
  Vec z(box.dim());
  for (Eigen::Index i = 0; i < box.dim(); ++i) z[i] = nominal_coordinate(box, i);
  return z;
}

namespace detail {

struct StackedJacobian {
  Mat A, B, C, D;
};

inline StackedJacobian stacked_jacobian(const SystemModel& model, const Vec& z) {
  const auto pt = split_point(model, z);
  auto lf = model.jac_f(pt.x, pt.u, pt.w);
  auto lh = model.jac_h(pt.x, pt.u, pt.w);
  return {std::move(lf.A), std::move(lf.B), std::move(lh.C), std::move(lh.D)};
}

inline double jac_scale(const StackedJacobian& j) {
  double s = 0.0;
  for (const Mat* m : {&j.A, &j.B, &j.C, &j.D})
    if (m->size() > 0) s = std::max(s, m->cwiseAbs().maxCoeff());
  return s;
}

inline double max_abs_diff(const Mat& a, const Mat& b) { return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff(); }

// Probe values for a coordinate: its finite bounds, or nominal +-1 when unbounded.
inline std::pair<double, double> probe_values(const Box& box, Eigen::Index i) {
  const double nom = nominal_coordinate(box, i);
  const double lo = std::isfinite(box.lower()[i]) ? box.lower()[i] : nom - 1.0;
  const double hi = std::isfinite(box.upper()[i]) ? box.upper()[i] : nom + 1.0;
  return {lo, hi};
}

}  // namespace detail

/// Coordinates of (x, u, w) on which some linearization matrix depends.
inline std::vector<int> detect_scheduled_dims(const SystemModel& model) {
  const Box box = stacked_box(model);
  const Vec nom = nominal_point(box);
  std::vector<int> dims;
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    auto [lo, hi] = detail::probe_values(box, i);
    Vec a = nom, b = nom;
    a[i] = lo;
    b[i] = hi;
    const auto ja = detail::stacked_jacobian(model, a), jb = detail::stacked_jacobian(model, b);
    const double tol = 1e-12 * (1.0 + std::max(detail::jac_scale(ja), detail::jac_scale(jb)));
    if (detail::max_abs_diff(ja.A, jb.A) > tol || detail::max_abs_diff(ja.B, jb.B) > tol ||
        detail::max_abs_diff(ja.C, jb.C) > tol || detail::max_abs_diff(ja.D, jb.D) > tol)
      dims.push_back(static_cast<int>(i));
  }
  return dims;
}

/// True iff [A B] is affine along the scheduled coordinates (three-collinear-point
/// residual <= 1e-10), does not depend on the other coordinates, and C, D are
/// constant over all probed points.
inline bool affinity_check(const SystemModel& model, const Box& box, const std::vector<int>& scheduled_dims) {
  detail::require(box.dim() == model.n + model.m + model.q, "affinity_check: box dimension mismatch");
  std::vector<bool> is_sched(static_cast<std::size_t>(box.dim()), false);
  for (int d : scheduled_dims) {
    detail::require(d >= 0 && d < box.dim(), "affinity_check: scheduled index out of range");
    detail::require(box.finite(d), "affinity_check: scheduled coordinate must be bounded");
    is_sched[static_cast<std::size_t>(d)] = true;
  }
  const Vec nom = nominal_point(box);
  const auto ref = detail::stacked_jacobian(model, nom);
  double scale = detail::jac_scale(ref);
  constexpr double kAffineTol = 1e-10;
  auto same_cd = [&](const detail::StackedJacobian& j) {
    return detail::max_abs_diff(j.C, ref.C) <= kAffineTol * (1.0 + scale) &&
           detail::max_abs_diff(j.D, ref.D) <= kAffineTol * (1.0 + scale);
  };

  // Independence of the unscheduled coordinates.
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    if (is_sched[static_cast<std::size_t>(i)]) continue;
    auto [lo, hi] = detail::probe_values(box, i);
    for (double v : {lo, hi}) {
      Vec z = nom;
      z[i] = v;
      const auto j = detail::stacked_jacobian(model, z);
      if (detail::max_abs_diff(j.A, ref.A) > kAffineTol * (1.0 + scale) ||
          detail::max_abs_diff(j.B, ref.B) > kAffineTol * (1.0 + scale) || !same_cd(j))
        return false;
    }
  }
  if (scheduled_dims.empty()) return true;

  // Midpoint affinity on deterministic pseudo-random pairs and on the coordinate axes.
  auto random_point = [&](std::uint64_t k) {
    Vec z = nom;
    for (int d : scheduled_dims) {
      const double u = counter_uniform(0x5eedULL, k, static_cast<std::uint64_t>(d));
      z[d] = box.lower()[d] + u * (box.upper()[d] - box.lower()[d]);
    }
    return z;
  };
  std::vector<std::pair<Vec, Vec>> pairs;
  for (int d : scheduled_dims) {
    Vec a = nom, b = nom;
    a[d] = box.lower()[d];
    b[d] = box.upper()[d];
    pairs.emplace_back(a, b);
  }
  for (std::uint64_t k = 0; k < 16; ++k) pairs.emplace_back(random_point(2 * k), random_point(2 * k + 1));

  for (const auto& [a, b] : pairs) {
    const auto ja = detail::stacked_jacobian(model, a), jb = detail::stacked_jacobian(model, b);
    const auto jm = detail::stacked_jacobian(model, 0.5 * (a + b));
    scale = std::max({scale, detail::jac_scale(ja), detail::jac_scale(jb)});
    const double tol = kAffineTol * (1.0 + scale);
    if (detail::max_abs_diff(jm.A, 0.5 * (ja.A + jb.A)) > tol) return false;
    if (detail::max_abs_diff(jm.B, 0.5 * (ja.B + jb.B)) > tol) return false;
    if (!same_cd(ja) || !same_cd(jb) || !same_cd(jm)) return false;
  }
  return true;
}

/// Sample points of a plan, with the unscheduled coordinates at their nominal values.
inline std::vector<SamplePoint> plan_points(const SystemModel& model, const SamplingPlan& plan) {
  const Box box = stacked_box(model);
  const Vec nom = nominal_point(box);
  std::vector<std::vector<double>> axes;
  for (std::size_t k = 0; k < plan.scheduled.size(); ++k) {
    const int d = plan.scheduled[k];
    detail::require(d >= 0 && d < box.dim(), "sampling plan: scheduled index out of range");
    if (plan.mode == PlanMode::vertices) {
      detail::require(box.finite(d), "sampling plan: vertex mode requires bounded scheduled coordinates");
      axes.push_back({box.lower()[d], box.upper()[d]});
    } else {
      detail::require(plan.grid_counts.size() == plan.scheduled.size(),
                      "sampling plan: one grid count per scheduled coordinate required");
      const int cnt = plan.grid_counts[k];
      detail::require(cnt >= 1, "sampling plan: grid counts must be positive");
      detail::require(box.finite(d) || cnt == 1, "sampling plan: grid over an unbounded coordinate");
      std::vector<double> ax;
      if (cnt == 1) {
        ax.push_back(nom[d]);
      } else {
        for (int i = 0; i < cnt; ++i)
          ax.push_back(box.lower()[d] + (box.upper()[d] - box.lower()[d]) * i / (cnt - 1));
      }
      axes.push_back(std::move(ax));
    }
  }
  std::vector<SamplePoint> pts;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    Vec z = nom;
    for (std::size_t k = 0; k < axes.size(); ++k) z[plan.scheduled[k]] = axes[k][idx[k]];
    pts.push_back(split_point(model, z));
    std::size_t k = 0;
    for (; k < axes.size(); ++k) {
      if (++idx[k] < axes[k].size()) break;
      idx[k] = 0;
    }
    if (k == axes.size()) break;
  }
  return pts;
}

inline std::vector<LmiSample> plan_samples(const SystemModel& model, const SamplingPlan& plan) {
  std::vector<LmiSample> out;
  for (const auto& pt : plan_points(model, plan)) out.push_back(linearize(model, pt));
  return out;
}

// ---------------------------------------------------------------------------
// Verification

struct VerificationReport {
  double worst_eigenvalue = -kInf;
  SamplePoint worst_point;
  std::size_t num_samples = 0;
  bool bounds_ok = false;  // P1 <= P <= P2
  bool affine = false;
  Soundness soundness = Soundness::heuristic;
  bool pass = false;
};

/// Expresses a sample and the metric in the coordinates xbar = T x.
inline std::pair<LmiSample, Mat> transformed(const LmiSample& s, const Mat& P, const Mat& T) {
  const Mat Tinv = T.inverse();
  LmiSample t = s;
  t.A = T * s.A * Tinv;
  t.B = T * s.B;
  t.C = s.C * Tinv;
  return {t, symmetrize(Tinv.transpose() * P * Tinv)};
}

inline VerificationReport verify_certificate(const SystemModel& model, const DiossCertificate& cert,
                                             const SamplingPlan& plan, double tol) {
  cert.validate();
  detail::require(cert.n() == model.n && cert.Q.rows() == model.q && cert.R.rows() == model.p,
                  "verify_certificate: certificate dimensions do not match the model");
  VerificationReport rep;
  const auto samples = plan_samples(model, plan);
  rep.num_samples = samples.size();
  for (const auto& s : samples) {
    double lmax = 0.0;
    if (cert.transform) {
      auto [ts, Pbar] = transformed(s, cert.P, *cert.transform);
      lmax = lambda_max_sym(lmi_matrix(ts, Pbar, cert.Q, cert.R, cert.eta));
    } else {
      lmax = lambda_max_sym(lmi_matrix(s, cert.P, cert.Q, cert.R, cert.eta));
    }
    if (lmax > rep.worst_eigenvalue) {
      rep.worst_eigenvalue = lmax;
      rep.worst_point = s.point;
    }
  }
  rep.bounds_ok = loewner_leq(cert.P1, cert.P) && loewner_leq(cert.P, cert.P2);
  rep.affine = affinity_check(model, stacked_box(model), plan.scheduled);
  rep.soundness = plan.mode == PlanMode::vertices && rep.affine ? Soundness::exact : Soundness::heuristic;
  rep.pass = rep.worst_eigenvalue <= tol && rep.bounds_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Synthesis

enum class SynthesisObjective { minimize_eta, maximize_margin };

struct SynthesisOptions {
  bool diagonal_qr = true;
  double qr_max = 1e6;      // upper bound on Q, R entries (keeps the margin bounded)
  double p_floor = 1e-6;    // P >= p_floor I after trace normalization
  sdp::Options solver{};
};

struct EtaMargin {
  double eta;
  double margin;  // -max_k lambda_max(LMI_k); >= 0 means feasible
};

struct SynthesisResult {
  DiossCertificate certificate;
  double margin = 0.0;
  std::vector<EtaMargin> tried;
};

namespace detail {

struct MarginSolution {
  Mat P, Q, R;
  double margin;
};

// Symmetric basis matrices: trace-free ones for P (P = I + sum z S_k keeps trace(P) = n),
// and unrestricted ones for full Q, R.
inline std::vector<Mat> trace_free_basis(Eigen::Index n) {
  std::vector<Mat> basis;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    Mat s = Mat::Zero(n, n);
    s(i, i) = 1.0;
    s(n - 1, n - 1) = -1.0;
    basis.push_back(s);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      Mat s = Mat::Zero(n, n);
      s(i, j) = s(j, i) = 1.0;
      basis.push_back(s);
    }
  return basis;
}

inline std::vector<Mat> weight_basis(Eigen::Index n, bool diagonal) {
  std::vector<Mat> basis;
  for (Eigen::Index i = 0; i < n; ++i) {
    Mat s = Mat::Zero(n, n);
    s(i, i) = 1.0;
    basis.push_back(s);
    if (diagonal) continue;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      Mat o = Mat::Zero(n, n);
      o(i, j) = o(j, i) = 1.0;
      basis.push_back(o);
    }
  }
  return basis;
}

// maximize s  s.t.  LMI_k(P,Q,R) <= -s I,  P >= eps I,  0 <= Q, R <= qr_max,  trace(P) = n.
inline MarginSolution max_margin(const std::vector<LmiSample>& samples, Eigen::Index n, Eigen::Index q,
                                 Eigen::Index p, double eta, const SynthesisOptions& opt) {
  const auto pb = trace_free_basis(n);
  const auto qb = weight_basis(q, opt.diagonal_qr);
  const auto rb = weight_basis(p, opt.diagonal_qr);
  const std::size_t np = pb.size(), nq = qb.size(), nr = rb.size();
  const Eigen::Index nv = static_cast<Eigen::Index>(np + nq + nr + 1);
  const Eigen::Index is = nv - 1;

  sdp::Problem prob;
  prob.num_vars = nv;
  prob.objective = Vec::Zero(nv);
  prob.objective[is] = 1.0;

  const Mat In = Mat::Identity(n, n), Zq = Mat::Zero(q, q), Zp = Mat::Zero(p, p);
  for (const auto& s : samples) {
    const Eigen::Index d = n + q;
    sdp::AffineBlock blk;
    blk.constant = -lmi_matrix(s, In, Zq, Zp, eta);
    for (const auto& b : pb) blk.coeffs.push_back(-lmi_matrix(s, b, Zq, Zp, eta));
    for (const auto& b : qb) blk.coeffs.push_back(-lmi_matrix(s, Mat::Zero(n, n), b, Zp, eta));
    for (const auto& b : rb) blk.coeffs.push_back(-lmi_matrix(s, Mat::Zero(n, n), Zq, b, eta));
    blk.coeffs.push_back(-Mat::Identity(d, d));
    prob.blocks.push_back(std::move(blk));
  }
  auto zero_coeffs = [&](Eigen::Index dim) { return std::vector<Mat>(static_cast<std::size_t>(nv), Mat::Zero(dim, dim)); };
  {
    sdp::AffineBlock blk{(1.0 - opt.p_floor) * In, zero_coeffs(n)};
    for (std::size_t k = 0; k < np; ++k) blk.coeffs[k] = pb[k];
    prob.blocks.push_back(std::move(blk));
  }
  auto add_weight_blocks = [&](const std::vector<Mat>& basis, std::size_t offset, Eigen::Index dim) {
    if (dim == 0) return;
    sdp::AffineBlock lower{Mat::Zero(dim, dim), zero_coeffs(dim)};
    sdp::AffineBlock upper{opt.qr_max * Mat::Identity(dim, dim), zero_coeffs(dim)};
    for (std::size_t k = 0; k < basis.size(); ++k) {
      lower.coeffs[offset + k] = basis[k];
      upper.coeffs[offset + k] = -basis[k];
    }
    if (opt.diagonal_qr) {
      // Split diagonal blocks into scalar constraints; same barrier, cheaper factorizations.
      for (Eigen::Index i = 0; i < dim; ++i) {
        for (const auto* full : {&lower, &upper}) {
          sdp::AffineBlock sc{full->constant.block(i, i, 1, 1), zero_coeffs(1)};
          for (std::size_t k = 0; k < static_cast<std::size_t>(nv); ++k)
            sc.coeffs[k] = full->coeffs[k].block(i, i, 1, 1);
          prob.blocks.push_back(std::move(sc));
        }
      }
    } else {
      prob.blocks.push_back(std::move(lower));
      prob.blocks.push_back(std::move(upper));
    }
  };
  add_weight_blocks(qb, np, q);
  add_weight_blocks(rb, np + nq, p);

  // Start: P = I, Q = R = qr_max/2 I, s safely below the current margin.
  Vec z0 = Vec::Zero(nv);
  for (std::size_t k = 0; k < nq; ++k)
    if (qb[k].trace() > 0) z0[static_cast<Eigen::Index>(np + k)] = 0.5 * opt.qr_max;
  for (std::size_t k = 0; k < nr; ++k)
    if (rb[k].trace() > 0) z0[static_cast<Eigen::Index>(np + nq + k)] = 0.5 * opt.qr_max;
  double worst = -kInf;
  for (const auto& s : samples) {
    Mat Q0 = 0.5 * opt.qr_max * Mat::Identity(q, q), R0 = 0.5 * opt.qr_max * Mat::Identity(p, p);
    worst = std::max(worst, lambda_max_sym(lmi_matrix(s, In, Q0, R0, eta)));
  }
  z0[is] = -worst - 1.0 - 1e-6 * std::abs(worst);

  const auto sol = sdp::solve(prob, z0, opt.solver);

  MarginSolution out;
  out.P = In;
  for (std::size_t k = 0; k < np; ++k) out.P += sol.z[static_cast<Eigen::Index>(k)] * pb[k];
  out.Q = Mat::Zero(q, q);
  for (std::size_t k = 0; k < nq; ++k) out.Q += sol.z[static_cast<Eigen::Index>(np + k)] * qb[k];
  out.R = Mat::Zero(p, p);
  for (std::size_t k = 0; k < nr; ++k) out.R += sol.z[static_cast<Eigen::Index>(np + nq + k)] * rb[k];
  out.P = symmetrize(out.P);
  out.Q = symmetrize(out.Q);
  out.R = symmetrize(out.R);
  double lmax = -kInf;
  for (const auto& s : samples) lmax = std::max(lmax, lambda_max_sym(lmi_matrix(s, out.P, out.Q, out.R, eta)));
  out.margin = -lmax;
  return out;
}

}  // namespace detail

/// Searches the eta grid for a constant-metric certificate (P1 = P2 = P, trace(P) = n).
/// minimize_eta bisects the sorted grid (feasibility is monotone in eta);
/// maximize_margin evaluates every grid point.
inline SynthesisResult synthesize_certificate(const SystemModel& model, const SamplingPlan& plan,
                                              std::vector<double> eta_grid,
                                              SynthesisObjective objective = SynthesisObjective::minimize_eta,
                                              const SynthesisOptions& opt = {}) {
  detail::require(!eta_grid.empty(), "synthesize_certificate: empty eta grid");
  for (double e : eta_grid) detail::require(e >= 0.0 && e < 1.0, "synthesize_certificate: eta must lie in [0, 1)");
  std::sort(eta_grid.begin(), eta_grid.end());
  eta_grid.erase(std::unique(eta_grid.begin(), eta_grid.end()), eta_grid.end());
  const auto samples = plan_samples(model, plan);

  SynthesisResult res;
  std::optional<detail::MarginSolution> best;
  double best_eta = eta_grid.front();
  auto attempt = [&](double eta) {
    auto sol = detail::max_margin(samples, model.n, model.q, model.p, eta, opt);
    res.tried.push_back({eta, sol.margin});
    return sol;
  };
  auto feasible = [](const detail::MarginSolution& s) { return s.margin >= 0.0 && is_pd(s.P); };

  if (objective == SynthesisObjective::minimize_eta) {
    std::size_t lo = 0, hi = eta_grid.size();  // first feasible index lies in [lo, hi)
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      auto sol = attempt(eta_grid[mid]);
      if (feasible(sol)) {
        best = std::move(sol);
        best_eta = eta_grid[mid];
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
  } else {
    for (double eta : eta_grid) {
      auto sol = attempt(eta);
      if (feasible(sol) && (!best || sol.margin > best->margin)) {
        best = std::move(sol);
        best_eta = eta;
      }
    }
  }

  if (!best) {
    double bm = -kInf, be = eta_grid.front();
    for (const auto& t : res.tried)
      if (t.margin > bm) {
        bm = t.margin;
        be = t.eta;
      }
    throw CertificationFailure("no certificate found on the eta grid (best margin " + std::to_string(bm) +
                                   " at eta " + std::to_string(be) + ")",
                               bm, be);
  }
  res.certificate = DiossCertificate::from_metric(best->P, best->Q, best->R, best_eta);
  res.margin = best->margin;
  return res;
}

}  // namespace mhecert

#include <random>

#include <gtest/gtest.h>

#include "mhecert/estimate.hpp"
#include "mhecert/random.hpp"
#include "oracles.hpp"

using namespace mhecert;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }
Vec v1(double v) { return Vec::Constant(1, v); }
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

DiossCertificate paper_certificate() {
  Mat P(2, 2);
  P << 1.249, 1.146, 1.146, 1.053;
  return DiossCertificate::from_metric(P, 1e4 * Mat::Identity(3, 3), m1(100.0), 0.91);
}

struct ReactorRun {
  SystemModel sys = reactor_model();
  Trajectory traj;
  ReactorRun(long T, bool noisy, std::uint64_t seed = 9) {
    std::vector<Vec> us(static_cast<std::size_t>(T), Vec(0)), ws;
    for (long t = 0; t < T; ++t) {
      Vec w = Vec::Zero(3);
      if (noisy)
        for (int i = 0; i < 3; ++i) w[i] = -1e-3 + 2e-3 * counter_uniform(seed, static_cast<std::uint64_t>(t), i);
      ws.push_back(w);
    }
    traj = simulate(sys, v2(3.0, 1.0), us, ws);
  }
  MeasurementWindow window(std::size_t first, std::size_t len) const {
    MeasurementWindow w;
    for (std::size_t k = first; k < first + len; ++k) {
      w.inputs.push_back(traj.inputs[k]);
      w.outputs.push_back(traj.outputs[k]);
    }
    return w;
  }
  WindowSequence truth(std::size_t first, std::size_t len) const {
    WindowSequence s{traj.states[first], {}};
    for (std::size_t k = first; k < first + len; ++k) s.w_seq.push_back(traj.disturbances[k]);
    return s;
  }
};

}  // namespace

TEST(MheCost, ScalarToy) {
  const auto cert = DiossCertificate::from_metric(m1(1.0), m1(1.0), m1(1.0), 0.5);
  const double c = mhe_cost(cert, v1(0.0), v1(1.0), {v1(1.0), v1(1.0)}, {v1(2.0), v1(2.0)}, {v1(1.0), v1(1.0)});
  EXPECT_DOUBLE_EQ(c, 5.0);
}

TEST(MheCost, TrivialCases) {
  const auto cert = paper_certificate();
  const Vec d = v2(0.3, -0.2);
  EXPECT_DOUBLE_EQ(mhe_cost(cert, v2(1, 1), v2(1, 1) + d, {}, {}, {}), 2.0 * d.dot(cert.P2 * d));
  const std::vector<Vec> ys{v1(2.0), v1(2.5)};
  EXPECT_EQ(mhe_cost(cert, v2(1, 1), v2(1, 1), {Vec::Zero(3), Vec::Zero(3)}, ys, ys), 0.0);
  EXPECT_THROW(mhe_cost(cert, v2(1, 1), v2(1, 1), {Vec::Zero(3)}, ys, ys), UsageError);
}

TEST(FieCost, ScalarToy) {
  KFunctionSet k;
  k.eta = 0.5;
  k.alpha1 = k.alpha2 = k.sigma_w = k.sigma_y = KFunction::quadratic(1.0);
  EXPECT_DOUBLE_EQ(fie_cost(k, v1(0.0), v1(1.0), {v1(1.0)}, {v1(2.0)}, {v1(1.0)}, 1), 7.0);
  EXPECT_DOUBLE_EQ(fie_cost(k, v1(0.0), v1(1.5), {}, {}, {}, 0), 9.0);
  EXPECT_EQ(fie_cost(k, v1(0.5), v1(0.5), {v1(0.0)}, {v1(1.0)}, {v1(1.0)}, 1), 0.0);
}

TEST(KFunction, QuadraticAndCustom) {
  const auto q = KFunction::quadratic(3.0);
  EXPECT_DOUBLE_EQ(q(2.0), 12.0);
  EXPECT_NEAR(q.inv(q(1.7)), 1.7, 1e-15);
  EXPECT_TRUE(q.spot_check({0.0, 0.1, 1.0, 10.0}));
  const auto c = KFunction::custom([](double r) { return r + r * r * r; });
  EXPECT_FALSE(c.has_inverse());
  EXPECT_THROW(c.inv(1.0), UsageError);
  EXPECT_TRUE(c.spot_check({0.0, 0.5, 1.0, 2.0}));
  const auto bad = KFunction::custom([](double r) { return 1.0 + r; });
  EXPECT_FALSE(bad.spot_check({0.0, 1.0}));
  EXPECT_THROW(KFunction::quadratic(0.0), UsageError);
}

TEST(SolveMhe, ScalarNormalEquations) {
  // x+ = a x + w, y = x, one measurement: w = 0 and x0 solves a 2x2 (here decoupled) normal system
  const double a = 0.8, eta = 0.7, p = 2.0, q = 3.0, r = 5.0, prior = 0.4, y0 = 1.3;
  const auto sys = linear_model(m1(a), m1(1.0), m1(1.0), m1(0.0));
  MheConfig cfg{1, DiossCertificate::from_metric(m1(p), m1(q), m1(r), eta), {}};
  const auto res = solve_mhe(sys, cfg, v1(prior), {{Vec(0)}, {v1(y0)}});
  const double x0 = (2 * eta * p * prior + r * y0) / (2 * eta * p + r);
  EXPECT_NEAR(res.x_init[0], x0, 1e-10);
  EXPECT_NEAR(res.w_seq[0][0], 0.0, 1e-10);
  EXPECT_NEAR(res.estimate()[0], a * x0, 1e-10);
  EXPECT_TRUE(res.converged);
}

TEST(SolveMhe, MatchesClosedFormWeightedLeastSquares) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int L = 1 + trial % 7;
    const auto inst = oracle::random_scalar_instance(rng, L);
    const auto sys = inst.model();
    MheConfig cfg{L, inst.cert(), {}};
    MeasurementWindow win;
    for (double y : inst.y) {
      win.inputs.push_back(Vec(0));
      win.outputs.push_back(v1(y));
    }
    const auto res = solve_mhe(sys, cfg, v1(inst.prior), win);
    const double ref = inst.closed_form_estimate();
    EXPECT_NEAR(res.estimate()[0], ref, 1e-8 * (1.0 + std::abs(ref))) << "trial " << trial;
  }
}

TEST(SolveMhe, ZeroDisturbanceExactPrior) {
  const ReactorRun run(40, false);
  MheConfig cfg{15, paper_certificate(), {}};
  const auto res = solve_mhe(run.sys, cfg, run.traj.states[25], run.window(25, 15));
  EXPECT_LE(res.cost, 1e-20);
  EXPECT_LE((res.estimate() - run.traj.states[40]).norm(), 1e-8);
}

TEST(SolveMhe, EmptyWindowReturnsPrior) {
  const auto sys = reactor_model();
  MheConfig cfg{15, paper_certificate(), {}};
  const auto res = solve_mhe(sys, cfg, v2(0.1, 4.5), {});
  EXPECT_EQ(res.estimate(), v2(0.1, 4.5));
  EXPECT_EQ(res.cost, 0.0);
  EXPECT_EQ(res.iterations, 0);
}

TEST(SolveMhe, FeasibilityAndCandidateDominance) {
  const ReactorRun run(30, true);
  MheConfig cfg{15, paper_certificate(), {}};
  const Vec prior = v2(0.1, 4.5);
  const auto truth = run.truth(0, 15);
  const auto res = solve_mhe(run.sys, cfg, prior, run.window(0, 15), truth);
  ASSERT_TRUE(res.candidate_cost.has_value());
  EXPECT_LE(res.cost, *res.candidate_cost);
  EXPECT_TRUE(run.sys.sets.X.contains(res.x_init));
  for (const auto& w : res.w_seq) EXPECT_TRUE(run.sys.sets.W.contains(w));
  const auto replay = simulate(run.sys, res.x_init, run.window(0, 15).inputs, res.w_seq);
  EXPECT_EQ(replay.states, res.x_seq);
  EXPECT_EQ(replay.outputs, res.y_seq);
  EXPECT_NEAR(res.cost, mhe_cost(cfg, prior, res.x_init, res.w_seq, res.y_seq, run.window(0, 15).outputs), 0.0);
}

TEST(SolveMhe, CandidateReplacesTruncatedSolve) {
  const ReactorRun run(30, true);
  MheConfig cfg{15, paper_certificate(), {}};
  cfg.solver.max_iterations = 1;
  const auto truth = run.truth(10, 15);
  const auto res = solve_mhe(run.sys, cfg, v2(0.1, 4.5), run.window(10, 15), truth);
  EXPECT_TRUE(res.used_candidate);
  EXPECT_EQ(res.cost, *res.candidate_cost);
  EXPECT_EQ(res.x_init, truth.x_init);
  EXPECT_EQ(res.estimate(), run.traj.states[25]);
}

TEST(SolveMhe, ShiftedWarmStartConvergesQuickly) {
  const ReactorRun run(60, false);
  MheConfig cfg{15, paper_certificate(), {}};
  // consistent prior: the true state at the window start
  const auto first = solve_mhe(run.sys, cfg, run.traj.states[30], run.window(30, 15));
  const auto guess = shifted_guess(first, 15, run.sys.q);
  cfg.solver.warm_start = WarmStart::previous_shifted;
  const auto next = solve_mhe(run.sys, cfg, run.traj.states[31], run.window(31, 15), std::nullopt, guess);
  EXPECT_LE(next.iterations, 3);
  EXPECT_TRUE(next.converged);
  EXPECT_LE((next.estimate() - run.traj.states[46]).norm(), 1e-8);
}

TEST(SolveMhe, ShiftedGuessGrowingWindow) {
  EstimateResult prev;
  prev.x_init = v1(1.0);
  prev.w_seq = {v1(0.1), v1(0.2)};
  prev.x_seq = {v1(1.0), v1(2.0), v1(3.0)};
  const auto grow = shifted_guess(prev, 3, 1);
  EXPECT_EQ(grow.x_init, v1(1.0));
  ASSERT_EQ(grow.w_seq.size(), 3u);
  EXPECT_EQ(grow.w_seq[2], v1(0.0));
  const auto slide = shifted_guess(prev, 2, 1);
  EXPECT_EQ(slide.x_init, v1(2.0));
  EXPECT_EQ(slide.w_seq[0], v1(0.2));
  EXPECT_THROW(shifted_guess(prev, 5, 1), UsageError);
}

TEST(SolveMhe, Deterministic) {
  const ReactorRun run(30, true);
  MheConfig cfg{15, paper_certificate(), {}};
  const auto a = solve_mhe(run.sys, cfg, v2(0.1, 4.5), run.window(5, 15), run.truth(5, 15));
  const auto b = solve_mhe(run.sys, cfg, v2(0.1, 4.5), run.window(5, 15), run.truth(5, 15));
  EXPECT_EQ(a.x_seq, b.x_seq);
  EXPECT_EQ(a.w_seq, b.w_seq);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(SolveMhe, DisturbanceBoxIsHonored) {
  // outputs far from anything reachable force the disturbances onto their bounds
  const auto sys = reactor_model();
  MheConfig cfg{5, paper_certificate(), {}};
  MeasurementWindow win;
  for (int k = 0; k < 5; ++k) {
    win.inputs.push_back(Vec(0));
    win.outputs.push_back(v1(4.0 + 0.5 * k));
  }
  const auto res = solve_mhe(sys, cfg, v2(2.0, 1.0), win);
  for (const auto& w : res.w_seq) EXPECT_TRUE(sys.sets.W.contains(w));
  EXPECT_TRUE(sys.sets.X.contains(res.x_init));
}

TEST(SolveMhe, PreconditionErrors) {
  const auto sys = reactor_model();
  MheConfig cfg{2, paper_certificate(), {}};
  EXPECT_THROW(solve_mhe(sys, cfg, v2(5.0, 1.0), {}), UsageError);
  MeasurementWindow long_win{{Vec(0), Vec(0), Vec(0)}, {v1(1), v1(1), v1(1)}};
  EXPECT_THROW(solve_mhe(sys, cfg, v2(1.0, 1.0), long_win), UsageError);
  MeasurementWindow ragged{{Vec(0)}, {v1(1), v1(1)}};
  EXPECT_THROW(solve_mhe(sys, cfg, v2(1.0, 1.0), ragged), UsageError);
  cfg.horizon = -1;
  EXPECT_THROW(solve_mhe(sys, cfg, v2(1.0, 1.0), {}), UsageError);
}

TEST(SolveFie, EmptyHistoryReturnsPrior) {
  const auto sys = reactor_model();
  const auto k = kfunctions_from_certificate(paper_certificate());
  const auto res = solve_fie(sys, k, v2(0.1, 4.5), {});
  EXPECT_EQ(res.estimate(), v2(0.1, 4.5));
  EXPECT_EQ(res.cost, 0.0);
}

TEST(SolveFie, QuadraticMatchesMheWithScaledWeights) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int t = 1 + trial % 6;
    auto inst = oracle::random_scalar_instance(rng, t);
    const double c2 = inst.p, sw = inst.q1, sy = inst.r;
    KFunctionSet k;
    k.eta = inst.eta;
    k.alpha1 = k.alpha2 = KFunction::quadratic(c2);
    k.sigma_w = KFunction::quadratic(sw);
    k.sigma_y = KFunction::quadratic(sy);
    // FIE: eta^t c2 (2s)^2 = 2 eta^t (2 c2) s^2 and sw (2|w|)^2 = 2 (2 sw) |w|^2
    inst.p = 2.0 * c2;
    inst.q1 = inst.q2 = 2.0 * sw;
    const auto sys = inst.model();
    MeasurementWindow win;
    for (double y : inst.y) {
      win.inputs.push_back(Vec(0));
      win.outputs.push_back(v1(y));
    }
    const auto fie = solve_fie(sys, k, v1(inst.prior), win);
    const auto mhe = solve_mhe(sys, {t, inst.cert(), {}}, v1(inst.prior), win);
    EXPECT_NEAR(fie.estimate()[0], mhe.estimate()[0], 1e-8 * (1.0 + std::abs(mhe.estimate()[0])));
    EXPECT_NEAR(fie.cost, mhe.cost, 1e-9 * (1.0 + mhe.cost));
    EXPECT_NEAR(fie.estimate()[0], inst.closed_form_estimate(), 1e-8 * (1.0 + std::abs(fie.estimate()[0])));
  }
}

TEST(SolveFie, RadialResidualsReproduceQuadraticPath) {
  const ReactorRun run(12, true);
  const auto kq = kfunctions_from_certificate(paper_certificate());
  KFunctionSet kc = kq;
  for (auto* f : {&kc.alpha2, &kc.sigma_w, &kc.sigma_y}) {
    const double c = *f->quadratic_coeff;
    *f = KFunction::custom([c](double r) { return c * r * r; });
  }
  ASSERT_FALSE(kc.quadratic());
  const Vec prior = v2(0.1, 4.5);
  const auto a = solve_fie(run.sys, kq, prior, run.window(0, 12));
  const auto b = solve_fie(run.sys, kc, prior, run.window(0, 12));
  EXPECT_NEAR(a.cost, b.cost, 1e-7 * (1.0 + a.cost));
  EXPECT_LE((a.estimate() - b.estimate()).norm(), 1e-5);
}

TEST(SolveFie, GenericKFunctionsReachLocalMinimum) {
  const ReactorRun run(10, true);
  KFunctionSet k = kfunctions_from_certificate(paper_certificate());
  k.sigma_w = KFunction::custom([](double r) { return 1e4 * r * r + 1e8 * r * r * r * r; });
  k.alpha2 = KFunction::custom([](double r) { return 2.3 * r * r + 0.5 * std::pow(r, 3); });
  const Vec prior = v2(0.1, 4.5);
  const auto win = run.window(0, 10);
  const auto res = solve_fie(run.sys, k, prior, win, {}, run.truth(0, 10));
  EXPECT_LE(res.cost, *res.candidate_cost);
  // no feasible coordinate perturbation lowers the cost noticeably
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    Vec x0 = run.sys.sets.X.project(res.x_init + 1e-4 * v2(nd(rng), nd(rng)));
    std::vector<Vec> ws = res.w_seq;
    for (auto& w : ws) w = run.sys.sets.W.project(w + 1e-6 * Vec::NullaryExpr(3, [&] { return nd(rng); }));
    const auto tr = simulate(run.sys, x0, win.inputs, ws);
    double viol = 0.0;
    for (std::size_t i = 1; i < tr.states.size(); ++i)
      viol = std::max(viol, run.sys.sets.X.violation(tr.states[i]).cwiseAbs().maxCoeff());
    // the optimum may sit marginally outside X under the exterior penalty
    if (viol > res.max_constraint_violation) continue;
    EXPECT_GE(fie_cost(k, prior, x0, ws, tr.outputs, win.outputs, 10), res.cost * (1.0 - 1e-9));
  }
}

#pragma once

// JSON/CSV serialization for model configs, certificates, scenarios and simulation logs.
// Doubles are written in shortest round-trip form (at most 17 significant digits).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mhecert/certify.hpp"
#include "mhecert/error.hpp"
#include "mhecert/harness.hpp"
#include "mhecert/model.hpp"

namespace mhecert::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Primitives

inline json number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double to_number(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw UsageError(what + ": expected a number");
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

inline json to_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    a.push_back(row);
  }
  return a;
}

inline Vec vec_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  detail::require(j.is_array(), what + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = to_number(j[i], what);
  return v;
}

/// Accepts a scalar (1x1), a flat array (column) or an array of rows.
inline Mat mat_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  detail::require(j.is_array(), what + ": expected a matrix");
  if (j.empty()) return Mat(0, 0);
  if (!j.front().is_array()) {
    const Vec v = vec_from_json(j, what);
    return Mat(v);
  }
  const std::size_t cols = j.front().size();
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    detail::require(j[r].is_array() && j[r].size() == cols, what + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = to_number(j[r][c], what);
  }
  return m;
}

inline json box_to_json(const Box& b) {
  json a = json::array();
  for (Eigen::Index i = 0; i < b.dim(); ++i) a.push_back({number(b.lower()[i]), number(b.upper()[i])});
  return a;
}

/// [[lo, hi], ...] with null for an unbounded side.
inline Box box_from_json(const json& j, const std::string& what) {
  detail::require(j.is_array(), what + ": expected [[lo, hi], ...]");
  Vec lo(static_cast<Eigen::Index>(j.size())), hi(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    detail::require(j[i].is_array() && j[i].size() == 2, what + ": each entry must be [lo, hi]");
    const auto k = static_cast<Eigen::Index>(i);
    lo[k] = j[i][0].is_null() ? -kInf : to_number(j[i][0], what);
    hi[k] = j[i][1].is_null() ? kInf : to_number(j[i][1], what);
  }
  return Box(lo, hi);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(what + ": malformed JSON (" + e.what() + ")");
  }
}

inline json load_json(const std::string& path) { return parse(read_file(path), path); }

// ---------------------------------------------------------------------------
// Model config

inline json to_json(const ModelConfig& m) {
  json j;
  j["model"] = m.kind;
  if (m.kind == "reactor") {
    const auto& r = m.reactor;
    j["k1"] = r.k1;
    j["k2"] = r.k2;
    j["dt"] = r.dt;
    j["x_box"] = json::array({{r.x_lower, r.x_upper}, {r.x_lower, r.x_upper}});
    j["w_bound"] = r.w_bound;
  } else {
    j["A"] = to_json(m.A);
    j["B"] = to_json(m.B);
    j["C"] = to_json(m.C);
    j["D"] = to_json(m.D);
    if (m.sets.X.dim()) j["x_box"] = box_to_json(m.sets.X);
    if (m.sets.W.dim()) j["w_box"] = box_to_json(m.sets.W);
    if (m.sets.Y.dim()) j["y_box"] = box_to_json(m.sets.Y);
  }
  return j;
}

inline ModelConfig model_config_from_json(const json& j) {
  detail::require(j.is_object(), "model config: expected an object");
  ModelConfig m;
  m.kind = j.value("model", std::string("reactor"));
  if (m.kind == "reactor") {
    auto& r = m.reactor;
    r.k1 = j.value("k1", r.k1);
    r.k2 = j.value("k2", r.k2);
    r.dt = j.value("dt", r.dt);
    r.w_bound = j.value("w_bound", r.w_bound);
    if (j.contains("x_box")) {
      const Box b = box_from_json(j["x_box"], "x_box");
      detail::require(b.dim() == 2, "reactor x_box must have two entries");
      detail::require(b.lower()[0] == b.lower()[1] && b.upper()[0] == b.upper()[1],
                      "reactor x_box must use equal bounds for both states");
      r.x_lower = b.lower()[0];
      r.x_upper = b.upper()[0];
    }
    detail::require(r.dt > 0.0 && r.w_bound >= 0.0 && r.x_lower < r.x_upper, "reactor parameters out of range");
  } else if (m.kind == "linear") {
    for (const char* k : {"A", "B", "C", "D"})
      detail::require(j.contains(k), std::string("linear model: missing '") + k + "'");
    m.A = mat_from_json(j["A"], "A");
    m.B = mat_from_json(j["B"], "B");
    m.C = mat_from_json(j["C"], "C");
    m.D = mat_from_json(j["D"], "D");
    if (j.contains("x_box")) m.sets.X = box_from_json(j["x_box"], "x_box");
    if (j.contains("w_box")) m.sets.W = box_from_json(j["w_box"], "w_box");
    if (j.contains("y_box")) m.sets.Y = box_from_json(j["y_box"], "y_box");
    m.build();  // dimension checks
  } else {
    throw UsageError("model config: unknown model '" + m.kind + "'");
  }
  return m;
}

inline ModelConfig load_model_config(const std::string& path) { return model_config_from_json(load_json(path)); }

// ---------------------------------------------------------------------------
// Certificate

inline json to_json(const DiossCertificate& c) {
  json j;
  j["P"] = to_json(c.P);
  j["Q"] = to_json(c.Q);
  j["R"] = to_json(c.R);
  j["eta"] = c.eta;
  j["transform"] = c.transform ? to_json(*c.transform) : json(nullptr);
  if (!c.quadratic() || c.P1 != c.P) {
    j["P1"] = to_json(c.P1);
    j["P2"] = to_json(c.P2);
  }
  return j;
}

inline DiossCertificate certificate_from_json(const json& j) {
  detail::require(j.is_object(), "certificate: expected an object");
  for (const char* k : {"P", "Q", "R", "eta"})
    detail::require(j.contains(k), std::string("certificate: missing '") + k + "'");
  DiossCertificate c;
  c.P = mat_from_json(j["P"], "P");
  c.Q = mat_from_json(j["Q"], "Q");
  c.R = mat_from_json(j["R"], "R");
  c.eta = to_number(j["eta"], "eta");
  c.P1 = j.contains("P1") ? mat_from_json(j["P1"], "P1") : c.P;
  c.P2 = j.contains("P2") ? mat_from_json(j["P2"], "P2") : c.P;
  if (j.contains("transform") && !j["transform"].is_null()) c.transform = mat_from_json(j["transform"], "transform");
  c.validate();
  return c;
}

inline DiossCertificate load_certificate(const std::string& path) { return certificate_from_json(load_json(path)); }

inline void save_certificate(const DiossCertificate& c, const std::string& path) {
  write_file(path, to_json(c).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Scenario

inline const char* to_string(WarmStart w) {
  switch (w) {
    case WarmStart::none: return "none";
    case WarmStart::previous_shifted: return "previous_shifted";
    case WarmStart::true_sequence: return "true_sequence";
  }
  return "none";
}

inline WarmStart warm_start_from_string(const std::string& s) {
  if (s == "none") return WarmStart::none;
  if (s == "previous_shifted") return WarmStart::previous_shifted;
  if (s == "true_sequence") return WarmStart::true_sequence;
  throw UsageError("unknown warm_start '" + s + "'");
}

inline json to_json(const SolverConfig& s) {
  return {{"max_iterations", s.max_iterations}, {"gradient_tol", s.gradient_tol},
          {"step_tol", s.step_tol},             {"levenberg_lambda0", s.levenberg_lambda0},
          {"penalty_weight", s.penalty_weight}, {"prior_tolerance", s.prior_tolerance},
          {"warm_start", to_string(s.warm_start)}};
}

inline SolverConfig solver_config_from_json(const json& j) {
  SolverConfig s;
  s.max_iterations = j.value("max_iterations", s.max_iterations);
  s.gradient_tol = j.value("gradient_tol", s.gradient_tol);
  s.step_tol = j.value("step_tol", s.step_tol);
  s.levenberg_lambda0 = j.value("levenberg_lambda0", s.levenberg_lambda0);
  s.penalty_weight = j.value("penalty_weight", s.penalty_weight);
  s.prior_tolerance = j.value("prior_tolerance", s.prior_tolerance);
  if (j.contains("warm_start")) s.warm_start = warm_start_from_string(j["warm_start"].get<std::string>());
  s.validate();
  return s;
}

inline json to_json(const MonitorFlags& m) {
  return {{"value_bound", m.value_bound}, {"mstep", m.mstep},         {"rges", m.rges},
          {"fie_lyapunov", m.fie_lyapunov}, {"alt_lyapunov", m.alt_lyapunov}, {"fie_error", m.fie_error}};
}

inline MonitorFlags monitor_flags_from_json(const json& j) {
  MonitorFlags m;
  m.value_bound = j.value("value_bound", m.value_bound);
  m.mstep = j.value("mstep", m.mstep);
  m.rges = j.value("rges", m.rges);
  m.fie_lyapunov = j.value("fie_lyapunov", m.fie_lyapunov);
  m.alt_lyapunov = j.value("alt_lyapunov", m.alt_lyapunov);
  m.fie_error = j.value("fie_error", m.fie_error);
  return m;
}

inline json to_json(const ScenarioConfig& c) {
  return {{"model", to_json(c.model)},
          {"certificate", to_json(c.cert)},
          {"estimator", c.estimator == EstimatorKind::fie ? "fie" : "mhe"},
          {"horizon", c.horizon},
          {"solver", to_json(c.solver)},
          {"x0_true", to_json(c.x0_true)},
          {"x0_hat", to_json(c.x0_hat)},
          {"T", c.T},
          {"seed", c.seed},
          {"disturbance", c.disturbance == DisturbanceKind::zero ? "zero" : "uniform_box"},
          {"monitors", to_json(c.monitors)},
          {"candidate", c.candidate}};
}

/// Model and certificate may be inline objects or paths relative to base_dir.
inline ScenarioConfig scenario_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  detail::require(j.is_object(), "scenario: expected an object");
  auto resolve = [&](const json& v) -> json {
    if (v.is_string()) {
      std::filesystem::path p(v.get<std::string>());
      if (p.is_relative()) p = base_dir / p;
      return load_json(p.string());
    }
    return v;
  };
  ScenarioConfig c = ScenarioConfig::reactor_default();
  if (j.contains("model")) c.model = model_config_from_json(resolve(j["model"]));
  if (j.contains("certificate")) c.cert = certificate_from_json(resolve(j["certificate"]));
  if (j.contains("estimator")) {
    const auto e = j["estimator"].get<std::string>();
    detail::require(e == "mhe" || e == "fie", "scenario: estimator must be mhe or fie");
    c.estimator = e == "fie" ? EstimatorKind::fie : EstimatorKind::mhe;
  }
  c.horizon = j.value("horizon", c.horizon);
  if (j.contains("solver")) c.solver = solver_config_from_json(j["solver"]);
  if (j.contains("x0_true")) c.x0_true = vec_from_json(j["x0_true"], "x0_true");
  if (j.contains("x0_hat")) c.x0_hat = vec_from_json(j["x0_hat"], "x0_hat");
  c.T = j.value("T", c.T);
  if (j.contains("seed")) {
    const auto& s = j["seed"];
    if (s.is_string()) c.seed = std::stoull(s.get<std::string>());
    else {
      detail::require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0),
                      "scenario: seed must be a nonnegative integer");
      c.seed = s.get<std::uint64_t>();
    }
  }
  if (j.contains("disturbance")) {
    const auto d = j["disturbance"].get<std::string>();
    detail::require(d == "uniform_box" || d == "zero", "scenario: disturbance must be uniform_box or zero");
    c.disturbance = d == "zero" ? DisturbanceKind::zero : DisturbanceKind::uniform_box;
  }
  if (j.contains("monitors")) c.monitors = monitor_flags_from_json(j["monitors"]);
  c.candidate = j.value("candidate", c.candidate);
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  try {
    return scenario_from_json(load_json(path), std::filesystem::path(path).parent_path());
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Simulation log

inline json opt_number(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }

inline std::optional<double> opt_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return to_number(j, "log value");
}

inline json to_json(const std::optional<MonitorValue>& m) {
  if (!m) return nullptr;
  return {{"value", number(m->value)}, {"bound", number(m->bound)}};
}

inline std::optional<MonitorValue> monitor_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return MonitorValue{to_number(j.at("value"), "monitor value"), to_number(j.at("bound"), "monitor bound")};
}

inline json to_json(const MonitorSummary& s) {
  return {{"checked", s.checked},
          {"violations", s.violations},
          {"max_residual", number(s.max_residual)},
          {"max_relative", number(s.max_relative)}};
}

inline MonitorSummary monitor_summary_from_json(const json& j) {
  return {j.at("checked").get<std::size_t>(), j.at("violations").get<std::size_t>(),
          to_number(j.at("max_residual"), "max_residual"), to_number(j.at("max_relative"), "max_relative")};
}

inline json to_json(const SimulationLog& log) {
  json recs = json::array();
  for (const auto& r : log.records) {
    recs.push_back({{"t", r.t},
                    {"x", to_json(r.x)},
                    {"xhat", to_json(r.xhat)},
                    {"err", to_json(r.err)},
                    {"err_norm", number(r.err_norm)},
                    {"W_delta", number(r.W_delta)},
                    {"cost", opt_number(r.cost)},
                    {"candidate_cost", opt_number(r.candidate_cost)},
                    {"converged", r.converged},
                    {"used_candidate", r.used_candidate},
                    {"iterations", r.iterations},
                    {"constraint_violation", number(r.constraint_violation)},
                    {"value_bound", to_json(r.value_bound)},
                    {"mstep", to_json(r.mstep)},
                    {"rges", to_json(r.rges)},
                    {"fie_lyapunov", to_json(r.fie_lyapunov)},
                    {"alt_lyapunov", to_json(r.alt_lyapunov)},
                    {"fie_error", to_json(r.fie_error)}});
  }
  const auto& s = log.summary;
  json sum = {{"value_bound", to_json(s.value_bound)},
              {"mstep", to_json(s.mstep)},
              {"rges", to_json(s.rges)},
              {"fie_lyapunov", to_json(s.fie_lyapunov)},
              {"alt_lyapunov", to_json(s.alt_lyapunov)},
              {"fie_error", to_json(s.fie_error)},
              {"final_error", number(s.final_error)},
              {"wall_time", number(s.wall_time)},
              {"nonconverged", s.nonconverged},
              {"horizon_condition", s.horizon_condition},
              {"rho_M", number(s.rho_M)},
              {"aborted", s.aborted},
              {"diagnostic", s.diagnostic}};
  return {{"records", recs}, {"summary", sum}};
}

inline SimulationLog log_from_json(const json& j) {
  SimulationLog log;
  try {
    for (const auto& r : j.at("records")) {
      StepRecord rec;
      rec.t = r.at("t").get<long>();
      rec.x = vec_from_json(r.at("x"), "x");
      rec.xhat = vec_from_json(r.at("xhat"), "xhat");
      rec.err = vec_from_json(r.at("err"), "err");
      rec.err_norm = to_number(r.at("err_norm"), "err_norm");
      rec.W_delta = to_number(r.at("W_delta"), "W_delta");
      rec.cost = opt_from_json(r.at("cost"));
      rec.candidate_cost = opt_from_json(r.at("candidate_cost"));
      rec.converged = r.at("converged").get<bool>();
      rec.used_candidate = r.at("used_candidate").get<bool>();
      rec.iterations = r.at("iterations").get<int>();
      rec.constraint_violation = to_number(r.at("constraint_violation"), "constraint_violation");
      rec.value_bound = monitor_from_json(r.at("value_bound"));
      rec.mstep = monitor_from_json(r.at("mstep"));
      rec.rges = monitor_from_json(r.at("rges"));
      rec.fie_lyapunov = monitor_from_json(r.at("fie_lyapunov"));
      rec.alt_lyapunov = monitor_from_json(r.at("alt_lyapunov"));
      rec.fie_error = monitor_from_json(r.at("fie_error"));
      log.records.push_back(std::move(rec));
    }
    const auto& s = j.at("summary");
    auto& sum = log.summary;
    sum.value_bound = monitor_summary_from_json(s.at("value_bound"));
    sum.mstep = monitor_summary_from_json(s.at("mstep"));
    sum.rges = monitor_summary_from_json(s.at("rges"));
    sum.fie_lyapunov = monitor_summary_from_json(s.at("fie_lyapunov"));
    sum.alt_lyapunov = monitor_summary_from_json(s.at("alt_lyapunov"));
    sum.fie_error = monitor_summary_from_json(s.at("fie_error"));
    sum.final_error = to_number(s.at("final_error"), "final_error");
    sum.wall_time = to_number(s.at("wall_time"), "wall_time");
    sum.nonconverged = s.at("nonconverged").get<std::size_t>();
    sum.horizon_condition = s.at("horizon_condition").get<bool>();
    sum.rho_M = to_number(s.at("rho_M"), "rho_M");
    sum.aborted = s.at("aborted").get<bool>();
    sum.diagnostic = s.at("diagnostic").get<std::string>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("log: ") + e.what());
  }
  return log;
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Plot-ready CSV. The state columns generalize to x1..xn, xhat1..xhatn.
inline std::string log_to_csv(const SimulationLog& log, Eigen::Index n = 2) {
  if (!log.records.empty()) n = log.records.front().x.size();
  std::ostringstream out;
  out << "t";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x" << i;
  for (Eigen::Index i = 1; i <= n; ++i) out << ",xhat" << i;
  out << ",err_norm,W_delta,cost,res_eq11,res_eq12,res_eq15\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); };
  auto res = [](const std::optional<MonitorValue>& m) { return m ? fmt17(m->residual()) : std::string(); };
  for (const auto& r : log.records) {
    out << r.t;
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt17(r.x[i]);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt17(r.xhat[i]);
    out << ',' << fmt17(r.err_norm) << ',' << fmt17(r.W_delta) << ',' << opt(r.cost) << ',' << res(r.value_bound)
        << ',' << res(r.mstep) << ',' << res(r.rges) << '\n';
  }
  return out.str();
}

enum class LogFormat { csv, json };

inline void export_log(const SimulationLog& log, const std::string& path, LogFormat fmt) {
  write_file(path, fmt == LogFormat::csv ? log_to_csv(log) : to_json(log).dump(1) + "\n");
}

inline SimulationLog import_log(const std::string& path) { return log_from_json(load_json(path)); }

}  // namespace mhecert::io

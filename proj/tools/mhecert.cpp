// mhecert command-line front end.
//
// Exit codes: 0 success, 1 analytical failure, 2 usage or I/O error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mhecert/mhecert.hpp"

using namespace mhecert;

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string vec_str(const Vec& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + ")";
}

std::vector<double> parse_eta_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--eta-grid: '" + item + "' is not a number");
    }
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3) throw UsageError("--eta-grid expects a:b:step");
  const double a = parts[0], b = parts[1], step = parts[2];
  if (!(step > 0.0) || b < a) throw UsageError("--eta-grid: need a <= b and step > 0");
  std::vector<double> grid;
  for (long i = 0;; ++i) {
    const double v = a + static_cast<double>(i) * step;
    if (v > b + 1e-9 * step) break;
    grid.push_back(v);
    if (i > 1000000) throw UsageError("--eta-grid: too many points");
  }
  return grid;
}

std::vector<int> parse_counts(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--grid: '" + item + "' is not a positive integer");
    }
  }
  if (out.empty()) throw UsageError("--grid: no counts given");
  return out;
}

// Grid counts apply to the detected scheduled coordinates, to the state
// coordinates, or to every stacked (x, u, w) coordinate, depending on how many are given.
SamplingPlan make_plan(const SystemModel& sys, const std::string& grid) {
  SamplingPlan plan;
  plan.scheduled = detect_scheduled_dims(sys);
  if (grid.empty()) return plan;
  const auto counts = parse_counts(grid);
  const auto stacked = static_cast<std::size_t>(sys.n + sys.m + sys.q);
  plan.mode = PlanMode::grid;
  if (counts.size() == plan.scheduled.size()) {
    plan.grid_counts = counts;
  } else if (counts.size() == static_cast<std::size_t>(sys.n) || counts.size() == stacked) {
    plan.scheduled.clear();
    for (std::size_t i = 0; i < counts.size(); ++i) plan.scheduled.push_back(static_cast<int>(i));
    plan.grid_counts = counts;
  } else {
    throw UsageError("--grid: expected " + std::to_string(plan.scheduled.size()) + ", " + std::to_string(sys.n) +
                     " or " + std::to_string(stacked) + " counts");
  }
  return plan;
}

void apply_eta(DiossCertificate& cert, const std::optional<double>& eta) {
  if (!eta) return;
  cert.eta = *eta;
  cert.validate();
}

int cmd_verify(const std::string& model_path, const std::string& cert_path, const std::string& grid, double tol,
               const std::optional<double>& eta) {
  const SystemModel sys = io::load_model_config(model_path).build();
  auto cert = io::load_certificate(cert_path);
  apply_eta(cert, eta);
  const auto plan = make_plan(sys, grid);
  const auto rep = verify_certificate(sys, cert, plan, tol);
  std::cout << "model:            " << sys.name << "\n"
            << "samples:          " << rep.num_samples << "\n"
            << "worst eigenvalue: " << fmt(rep.worst_eigenvalue, "%.9e") << "\n"
            << "worst point:      x=" << vec_str(rep.worst_point.x) << " w=" << vec_str(rep.worst_point.w) << "\n"
            << "bounds P1<=P<=P2: " << (rep.bounds_ok ? "yes" : "no") << "\n"
            << "affine in plan:   " << (rep.affine ? "yes" : "no") << "\n"
            << "soundness:        " << to_string(rep.soundness) << "\n"
            << "result:           " << (rep.pass ? "PASS" : "FAIL") << " (tol " << fmt(tol, "%g") << ")\n";
  return rep.pass ? kOk : kFail;
}

int cmd_synthesize(const std::string& model_path, const std::string& eta_grid, bool diag_qr,
                   const std::string& objective, const std::string& grid, const std::string& out) {
  const SystemModel sys = io::load_model_config(model_path).build();
  const auto etas = parse_eta_grid(eta_grid);
  const auto plan = make_plan(sys, grid);
  SynthesisOptions opt;
  opt.diagonal_qr = diag_qr;
  SynthesisObjective obj = SynthesisObjective::minimize_eta;
  if (objective == "max-margin") obj = SynthesisObjective::maximize_margin;
  else if (objective != "min-eta") throw UsageError("--objective must be min-eta or max-margin");
  try {
    const auto res = synthesize_certificate(sys, plan, etas, obj, opt);
    const std::string text = io::to_json(res.certificate).dump(2) + "\n";
    if (out.empty()) std::cout << text;
    else io::write_file(out, text);
    std::cerr << "eta " << fmt(res.certificate.eta) << ", margin " << fmt(res.margin, "%.3e") << ", "
              << res.tried.size() << " grid points tried\n";
    return kOk;
  } catch (const CertificationFailure& e) {
    std::cerr << "synthesis failed: " << e.what() << "\n";
    return kFail;
  }
}

int cmd_horizon(const std::string& cert_path, const std::optional<double>& eta, const std::optional<int>& horizon) {
  auto cert = io::load_certificate(cert_path);
  apply_eta(cert, eta);
  std::printf("%-16s %14s %14s %12s\n", "method", "C", "mu", "M_min");
  for (const auto& s : table1_specs(cert)) {
    const long m = min_horizon(s);
    std::printf("%-16s %14.6g %14.10g %11s%ld\n", to_string(s.method), s.C, s.mu, s.is_lower_bound ? ">" : "", m);
  }
  if (horizon) {
    const auto h = horizon_condition(cert, *horizon);
    std::printf("M=%d: 4 eta^M lambda = %.6g -> %s", *horizon, h.rho_M, h.satisfied ? "satisfied" : "not satisfied");
    if (*horizon >= 1) std::printf(", rho = %.6g", h.rho);
    std::printf("\n");
  }
  return kOk;
}

int cmd_compare(const std::string& cert_path, const std::string& out, const std::optional<double>& eta) {
  auto cert = io::load_certificate(cert_path);
  apply_eta(cert, eta);
  std::ostringstream csv;
  csv << "method,C,mu,M_min,is_lower_bound\n";
  for (const auto& s : table1_specs(cert))
    csv << to_string(s.method) << ',' << io::fmt17(s.C) << ',' << io::fmt17(s.mu) << ',' << min_horizon(s) << ','
        << (s.is_lower_bound ? "true" : "false") << '\n';
  io::write_file(out, csv.str());
  std::cout << csv.str();
  return kOk;
}

void print_monitor(const char* name, const MonitorSummary& m) {
  if (m.checked == 0) return;
  std::printf("  %-14s checked %4zu  violations %zu  max residual %.3e\n", name, m.checked, m.violations,
              m.max_residual);
}

int cmd_simulate(const std::string& scenario_path, const std::string& out, const std::string& format,
                 const std::optional<double>& eta, const std::optional<int>& horizon) {
  if (format != "csv" && format != "json") throw UsageError("--format must be csv or json");
  auto cfg = io::load_scenario(scenario_path);
  if (const char* env = std::getenv("MHECERT_SEED")) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("MHECERT_SEED: '") + env + "' is not an unsigned integer");
    }
  }
  apply_eta(cfg.cert, eta);
  if (horizon) cfg.horizon = *horizon;

  const SystemModel sys = cfg.model.build();
  cfg.validate(sys);
  SamplingPlan plan;
  plan.scheduled = detect_scheduled_dims(sys);
  const auto rep = verify_certificate(sys, cfg.cert, plan, 1e-6);
  if (!rep.pass)
    std::cerr << "warning: certificate does not verify on the model (worst eigenvalue "
              << fmt(rep.worst_eigenvalue, "%.3e") << ")\n";

  const auto log = run_scenario(cfg);
  io::export_log(log, out, format == "csv" ? io::LogFormat::csv : io::LogFormat::json);

  const auto& s = log.summary;
  std::printf("steps %zu  final error %.6e  nonconverged %zu  time %.2fs\n", log.records.size(), s.final_error,
              s.nonconverged, s.wall_time);
  if (cfg.estimator == EstimatorKind::mhe)
    std::printf("horizon M=%d: 4 eta^M lambda = %.6g (%s)\n", cfg.horizon, s.rho_M,
                s.horizon_condition ? "M-step decrease guaranteed" : "M-step decrease not guaranteed, informational");
  print_monitor("value_bound", s.value_bound);
  print_monitor("mstep", s.mstep);
  print_monitor("rges", s.rges);
  print_monitor("alt_lyapunov", s.alt_lyapunov);
  print_monitor("fie_lyapunov", s.fie_lyapunov);
  print_monitor("fie_error", s.fie_error);
  if (s.aborted) {
    std::printf("aborted: %s\n", s.diagnostic.c_str());
    return kFail;
  }
  return s.monitors_ok() ? kOk : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified moving horizon estimation toolkit"};
  app.require_subcommand(1);
  app.footer("Flag overrides (--eta, --horizon) take precedence over values read from files.\n"
             "MHECERT_SEED overrides the scenario seed.\n"
             "Exit codes: 0 success, 1 analytical failure, 2 usage or I/O error.");

  std::string model, cert, grid, eta_grid, scenario, out, format = "csv", objective = "min-eta";
  double tol = 1e-6;
  bool diag_qr = false;
  std::optional<double> eta;
  std::optional<int> horizon;

  auto* verify = app.add_subcommand("verify", "Check a certificate's LMI on a sampling plan");
  verify->add_option("--model", model, "Model config (JSON)")->required()->check(CLI::ExistingFile);
  verify->add_option("--cert", cert, "Certificate (JSON)")->required()->check(CLI::ExistingFile);
  verify->add_option("--grid", grid, "Grid counts n1,n2,... (vertex plan if omitted)");
  verify->add_option("--tol", tol, "Eigenvalue tolerance")->capture_default_str();
  verify->add_option("--eta", eta, "Override the certificate's eta");

  auto* synth = app.add_subcommand("synthesize", "Search an eta grid for a certificate");
  synth->add_option("--model", model, "Model config (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--eta-grid", eta_grid, "a:b:step")->required();
  synth->add_flag("--diag-qr", diag_qr, "Restrict Q and R to diagonal matrices");
  synth->add_option("--objective", objective, "min-eta or max-margin")->capture_default_str();
  synth->add_option("--grid", grid, "Grid counts n1,n2,... (vertex plan if omitted)");
  synth->add_option("--out", out, "Write the certificate here instead of stdout");

  auto* hor = app.add_subcommand("horizon", "Minimal horizons of the contraction conditions");
  hor->add_option("--cert", cert, "Certificate (JSON)")->required()->check(CLI::ExistingFile);
  hor->add_option("--eta", eta, "Override the certificate's eta");
  hor->add_option("--horizon", horizon, "Also evaluate the horizon condition at this M");

  auto* sim = app.add_subcommand("simulate", "Run a closed-loop scenario and export the log");
  sim->add_option("--scenario", scenario, "Scenario (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out, "Log output path")->required();
  sim->add_option("--format", format, "csv or json")->capture_default_str();
  sim->add_option("--eta", eta, "Override the certificate's eta");
  sim->add_option("--horizon", horizon, "Override the MHE horizon");

  auto* cmp = app.add_subcommand("compare", "Write the method comparison table as CSV");
  cmp->add_option("--cert", cert, "Certificate (JSON)")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out, "CSV output path")->required();
  cmp->add_option("--eta", eta, "Override the certificate's eta");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*verify) return cmd_verify(model, cert, grid, tol, eta);
    if (*synth) return cmd_synthesize(model, eta_grid, diag_qr, objective, grid, out);
    if (*hor) return cmd_horizon(cert, eta, horizon);
    if (*sim) return cmd_simulate(scenario, out, format, eta, horizon);
    if (*cmp) return cmd_compare(cert, out, eta);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

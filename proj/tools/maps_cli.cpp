// maps_cli: identification, gain synthesis, certification and closed-loop
// simulation of the friction-scheduled motor controller.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "maps/maps.hpp"

namespace {

using namespace maps;
namespace h = maps::harness;

enum ExitCode { kOk = 0, kBadConfig = 1, kNumerical = 2, kNotCertified = 3 };

KeyValueConfig load_or_empty(const std::string& path) {
  return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  return f;
}

/// MAPS_SEED wins over the seed in the config file.
void apply_seed_override(KeyValueConfig& kv) {
  if (const char* env = std::getenv("MAPS_SEED"); env != nullptr && *env != '\0') {
    kv.set("seed", env);
  }
}

/// Forward Euler at the default sample time puts the electrical pole far
/// outside the unit circle; the resulting filters and gains do not control
/// the continuous plant. Say so instead of silently producing garbage.
h::Design design_with_warning(const MotorConfig& motor, const LqrWeights<3>& w) {
  auto d = h::make_design(motor, w);
  double worst = 0.0;
  for (const auto& phi : d.vertices.phi) worst = std::max(worst, linalg::spectral_radius(phi));
  if (worst > 1.0) {
    fmt::print(stderr,
               "warning: {} design matrices have an open-loop pole of modulus {:.4g} > 1; "
               "closed-loop runs on the continuous plant are expected to diverge "
               "(use discretization = zoh)\n",
               to_string(motor.discretization), worst);
  }
  return d;
}

std::string fmt_row(const Eigen::MatrixXd& m) {
  std::string s;
  for (Eigen::Index i = 0; i < m.size(); ++i) s += fmt::format("{}{:.9g}", i ? "  " : "", m(i));
  return s;
}

int cmd_ident(const std::string& csv, const std::string& config, bool weighted, bool intercept) {
  auto kv = load_or_empty(config);
  const MotorConfig motor = read_motor_config(kv);
  kv.reject_unknown();
  const auto samples = ident::load_samples_csv(csv);
  const auto weighting = weighted ? ident::Weighting::kInverseVariance : ident::Weighting::kNone;
  const auto r = ident::identify(motor.params, samples, weighting);
  fmt::print("samples       {}\n", samples.size());
  fmt::print("mu            {:.9g}\n", r.slope);
  fmt::print("mu_minus_ke   {:.9g}\n", r.slope - motor.params.ke);
  fmt::print("b             {:.9g}\n", r.viscous_coeff);
  fmt::print("residual_rms  {:.9g}\n", r.residual_rms);
  if (intercept) {
    const auto fit = ident::regress_slope(samples, ident::FitMode::kWithIntercept, weighting);
    fmt::print("intercept_fit slope={:.9g} intercept={:.9g} residual_rms={:.9g}\n", fit.slope,
               fit.intercept, fit.residual_rms);
  }
  if (r.non_positive_b) fmt::print(std::cerr, "warning: identified b is not positive\n");
  return kOk;
}

int cmd_gains(const std::string& config, const std::string& json_out, const std::string& csv_out) {
  auto kv = load_or_empty(config);
  const MotorConfig motor = read_motor_config(kv);
  kv.reject_unknown();
  const auto d = design_with_warning(motor, default_motor_lqr_weights());
  const auto loops = closed_loops(d.vertices);
  fmt::print("discretization {}\n", to_string(motor.discretization));
  for (std::size_t i = 0; i < d.vertices.size(); ++i) {
    const auto mod = h::eigenvalue_moduli(loops[i]);
    fmt::print("vertex {} rho={:.6g}\n  K = [{}]\n  |eig(Phi - Gamma K)| = {:.9g} {:.9g} {:.9g}\n", i,
               d.vertices.rho[i], fmt_row(d.vertices.gains[i]), mod[0], mod[1], mod[2]);
  }
  fmt::print("nominal rho={:.6g}\n  K = [{}]\n", motor.params.b_m, fmt_row(d.nominal_gain));
  if (!json_out.empty()) open_out(json_out) << h::design_json(d).dump(2) << '\n';
  if (!csv_out.empty()) {
    auto f = open_out(csv_out);
    h::write_gains_csv(f, d);
  }
  return kOk;
}

int cmd_certify(const std::string& config, double epsilon, double delta, std::size_t samples,
                std::uint64_t seed) {
  auto kv = load_or_empty(config);
  const MotorConfig motor = read_motor_config(kv);
  kv.reject_unknown();
  const auto d = design_with_warning(motor, default_motor_lqr_weights());
  LyapunovSearchOptions opt;
  opt.n_samples = samples;
  opt.seed = seed;
  const auto c = certify(d.vertices, MismatchAssumptions{epsilon, delta}, opt);
  fmt::print("P =\n");
  for (int i = 0; i < 3; ++i) fmt::print("  [{}]\n", fmt_row(c.P_lyap.row(i)));
  fmt::print("alpha             {:.9g}\n", c.alpha);
  for (std::size_t i = 0; i < c.vertex_margins.size(); ++i) {
    fmt::print("vertex_margin[{}]  {:.9g}\n", i, c.vertex_margins[i]);
  }
  fmt::print("sampled_min       {:.9g} ({} samples, seed {})\n", c.sampled_margins_min, samples,
             seed);
  fmt::print("sampled_rho_max   {:.9g}\n", c.sampled_spectral_radius_max);
  fmt::print("L_phi             {:.9g}\nL_k               {:.9g}\nL                 {:.9g}\n",
             c.lipschitz.L_phi, c.lipschitz.L_k, c.lipschitz.L);
  fmt::print("eps_star          {:.9g}\nC                 {:.9g}\n", c.bound.eps_star, c.bound.C);
  fmt::print("lambda            {:.9g} (at epsilon = {:.3g})\n", c.bound.lambda, epsilon);
  fmt::print("lambda_literal    {:.9g}\n", c.bound.lambda_literal);
  fmt::print("certified         {}\n", c.certified ? "yes" : "no");
  return c.certified ? kOk : kNotCertified;
}

struct RunOutputs {
  std::string csv, metrics, plot, trace;
  std::size_t stride = 1;
};

h::RunConfig load_run_config(const std::string& path) {
  auto kv = KeyValueConfig::load(path);
  apply_seed_override(kv);
  return h::read_run_config(kv);
}

int cmd_run(const std::string& config, const RunOutputs& out) {
  const auto rc = load_run_config(config);
  const auto d = design_with_warning(rc.motor, rc.weights);
  const auto rec = h::run_scenario(rc.scenario, d);
  if (out.csv.empty()) {
    h::write_run_csv(std::cout, rec);
  } else {
    auto f = open_out(out.csv);
    h::write_run_csv(f, rec);
  }
  const auto mj = h::metrics_json(rec);
  if (!out.metrics.empty()) open_out(out.metrics) << mj.dump(2) << '\n';
  if (!out.plot.empty()) {
    auto f = open_out(out.plot);
    h::write_plot_csv(f, rec, out.stride);
  }
  if (!out.trace.empty()) {
    auto f = open_out(out.trace);
    h::write_filter_trace_csv(f, rec);
  }
  if (!out.csv.empty()) {
    const auto& t = rec.metrics.tracking;
    fmt::print(stderr, "{}: {} ticks, tracking rmse={:.6g} mae={:.6g} iae={:.6g}\n", rec.name,
               rec.size(), t.rmse, t.mae, t.iae);
  }
  return kOk;
}

/// "<estimator>/<controller>" where estimator is kf, kf@<vertex> or imm and
/// controller is fixed, fixed@<vertex> or maps.
h::ScenarioSpec make_variant(const h::ScenarioSpec& base, const std::string& token,
                             std::size_t n_vertices) {
  const auto slash = token.find('/');
  if (slash == std::string::npos) throw ConfigError("variant '" + token + "': expected est/ctl");
  auto split_at = [&](const std::string& part, std::string& head) -> h::DesignPoint {
    const auto at = part.find('@');
    head = part.substr(0, at);
    if (at == std::string::npos) return std::nullopt;
    const std::string idx = part.substr(at + 1);
    try {
      const auto i = std::stoul(idx);
      if (i < n_vertices) return i;
    } catch (const std::exception&) {
    }
    throw ConfigError("variant '" + token + "': bad vertex index '" + idx + "'");
  };
  h::ScenarioSpec s = base;
  s.name = token;
  std::string est, ctl;
  const auto est_point = split_at(token.substr(0, slash), est);
  const auto ctl_point = split_at(token.substr(slash + 1), ctl);
  if (est == "kf") {
    s.estimator = h::EstimatorKind::kKf;
    s.kf_point = est_point;
  } else if (est == "imm" && !est_point) {
    s.estimator = h::EstimatorKind::kImm;
  } else {
    throw ConfigError("variant '" + token + "': unknown estimator");
  }
  if (ctl == "fixed") {
    s.controller = h::ControllerKind::kFixed;
    s.controller_point = ctl_point;
  } else if (ctl == "maps" && !ctl_point) {
    s.controller = h::ControllerKind::kMaps;
  } else {
    throw ConfigError("variant '" + token + "': unknown controller");
  }
  return s;
}

int cmd_compare(const std::string& config, const std::vector<std::string>& variants,
                const std::string& csv_out, bool serial) {
  const auto rc = load_run_config(config);
  const auto d = design_with_warning(rc.motor, rc.weights);
  std::vector<h::ScenarioSpec> specs;
  for (const auto& v : variants) specs.push_back(make_variant(rc.scenario, v, d.vertices.size()));
  const auto runs = h::run_variants(specs, d, !serial);
  const auto table = h::compare_runs(runs);
  fmt::print("scenario {} ({} s, seed {}, {})\n", rc.scenario.name, rc.scenario.duration,
             rc.scenario.seed, to_string(rc.motor.discretization));
  h::write_comparison_text(std::cout, table);
  if (!csv_out.empty()) {
    auto f = open_out(csv_out);
    h::write_comparison_csv(f, table);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mode-probability scheduled LQR for a friction-varying DC motor"};
  app.require_subcommand(1);

  std::string config;
  std::string csv;
  bool weighted = false;
  bool intercept = false;
  auto* ident = app.add_subcommand("ident", "Identify the viscous coefficient from steady-state data");
  ident->add_option("csv", csv, "CSV with voltage,velocity[,velocity_std]")->required();
  ident->add_option("-c,--config", config, "Motor parameter file");
  ident->add_flag("--weighted", weighted, "Inverse-variance weighting (needs 3rd column)");
  ident->add_flag("--intercept", intercept, "Also report a fit with intercept");

  std::string json_out;
  std::string csv_out;
  auto* gains = app.add_subcommand("gains", "Synthesize and print the vertex LQR gains");
  gains->add_option("-c,--config", config, "Motor parameter file");
  gains->add_option("--json", json_out, "Write models, gains and Riccati solutions as JSON");
  gains->add_option("--csv", csv_out, "Write gains as CSV");

  double epsilon = 0.0;
  double delta = 0.0;
  std::size_t samples = 1000;
  std::uint64_t seed = 42;
  auto* cert = app.add_subcommand("certify", "Common Lyapunov certificate and mismatch bound");
  cert->add_option("-c,--config", config, "Motor parameter file");
  cert->add_option("--epsilon", epsilon, "Scheduling mismatch bound");
  cert->add_option("--delta", delta, "Per-tick variation bound (reported only)");
  cert->add_option("--samples", samples, "Convex combinations to sample");
  cert->add_option("--seed", seed, "Sampling seed");

  RunOutputs out;
  auto* run = app.add_subcommand("run", "Simulate one closed-loop scenario");
  run->add_option("config", config, "Scenario config file")->required();
  run->add_option("-o,--output", out.csv, "Per-tick CSV (default: stdout)");
  run->add_option("--metrics", out.metrics, "Metrics JSON");
  run->add_option("--plot", out.plot, "Plot-data CSV");
  run->add_option("--trace", out.trace, "Filter trace CSV");
  run->add_option("--stride", out.stride, "Plot-data decimation");

  std::vector<std::string> variants{"kf/fixed", "imm/maps"};
  bool serial = false;
  auto* compare = app.add_subcommand("compare", "Run estimator/controller variants side by side");
  compare->add_option("config", config, "Scenario config file")->required();
  compare->add_option("-v,--variants", variants, "Variants as est/ctl, e.g. kf/fixed imm/maps");
  compare->add_option("--csv", csv_out, "Comparison CSV");
  compare->add_flag("--serial", serial, "Run variants one after another");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }

  try {
    if (*ident) return cmd_ident(csv, config, weighted, intercept);
    if (*gains) return cmd_gains(config, json_out, csv_out);
    if (*cert) return cmd_certify(config, epsilon, delta, samples, seed);
    if (*run) return cmd_run(config, out);
    if (*compare) return cmd_compare(config, variants, csv_out, serial);
  } catch (const ConfigError& e) {
    fmt::print(std::cerr, "config error: {}\n", e.what());
    return kBadConfig;
  } catch (const ParameterError& e) {
    fmt::print(std::cerr, "parameter error: {}\n", e.what());
    return kBadConfig;
  } catch (const NumericalError& e) {
    fmt::print(std::cerr, "numerical failure: {}\n", e.what());
    return kNumerical;
  }
  return kOk;
}

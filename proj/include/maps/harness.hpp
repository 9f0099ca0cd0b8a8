#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <future>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "maps/config.hpp"
#include "maps/control.hpp"
#include "maps/core.hpp"
#include "maps/estimation.hpp"
#include "maps/motor_model.hpp"

namespace maps::harness {

// ---------------------------------------------------------------------------
// Scenario description
// ---------------------------------------------------------------------------

struct FrictionSegment {
  double start = 0.0;    // s
  double b = 0.0;        // N·m·s/rad
  bool dry = false;      // static + Coulomb friction enabled
};

enum class FrictionInterp { kStep, kRamp };

/// Piecewise truth friction. With kRamp, b moves linearly from the previous
/// segment's value over `ramp_time` after each segment start.
struct FrictionSchedule {
  std::vector<FrictionSegment> segments{{0.0, 0.0, false}};
  FrictionInterp interp = FrictionInterp::kStep;
  double ramp_time = 0.0;

  void validate(double b_max) const {
    if (segments.empty()) throw ConfigError("friction schedule has no segments");
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (i > 0 && !(segments[i].start > segments[i - 1].start)) {
        throw ConfigError("friction segments must be strictly time-sorted");
      }
      if (!(segments[i].b >= 0.0) || segments[i].b > 10.0 * b_max) {
        throw ConfigError("friction segment b outside [0, 10*b_max]");
      }
    }
    if (interp == FrictionInterp::kRamp && !(ramp_time > 0.0)) {
      throw ConfigError("ramp interpolation needs a positive ramp_time");
    }
  }

  /// Active segment index at time t (first segment before its start).
  std::size_t index_at(double t) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (t >= segments[i].start) idx = i;
    }
    return idx;
  }

  double b_at(double t) const {
    const std::size_t i = index_at(t);
    const auto& seg = segments[i];
    if (interp == FrictionInterp::kStep || i == 0 || t >= seg.start + ramp_time) return seg.b;
    const double frac = (t - seg.start) / ramp_time;
    return segments[i - 1].b + frac * (seg.b - segments[i - 1].b);
  }

  bool dry_at(double t) const { return segments[index_at(t)].dry; }

  /// Largest change of b between consecutive samples of period dt.
  double max_rate(double dt, double duration) const {
    double worst = 0.0;
    double prev = b_at(0.0);
    for (double t = dt; t < duration; t += dt) {
      const double b = b_at(t);
      worst = std::max(worst, std::abs(b - prev));
      prev = b;
    }
    return worst;
  }
};

enum class ReferenceKind { kStep, kSine, kZero };

/// θ_ref(t) with its analytic derivative; the current reference is zero.
struct ReferenceSpec {
  ReferenceKind kind = ReferenceKind::kStep;
  double amplitude = 2.0;   // rad
  double period = 10.0;     // s, square wave
  double frequency = 0.5;   // Hz, sine

  Vector3 at(double t) const {
    switch (kind) {
      case ReferenceKind::kZero:
        return Vector3::Zero();
      case ReferenceKind::kStep: {
        const double phase = std::fmod(t, period);
        return Vector3(phase < 0.5 * period ? amplitude : -amplitude, 0.0, 0.0);
      }
      case ReferenceKind::kSine: {
        const double w = 2.0 * std::numbers::pi * frequency;
        return Vector3(amplitude * std::sin(w * t), amplitude * w * std::cos(w * t), 0.0);
      }
    }
    return Vector3::Zero();
  }
};

enum class EstimatorKind { kKf, kImm };
enum class ControllerKind { kFixed, kMaps };

/// A design point is either the nominal b_m model or one vertex.
using DesignPoint = std::optional<std::size_t>;

struct ScenarioSpec {
  std::string name = "custom";
  ReferenceSpec reference;
  double duration = 30.0;     // s
  double sample_rate = 500.0; // Hz
  FrictionSchedule friction;
  std::uint64_t seed = 1;
  ControllerKind controller = ControllerKind::kMaps;
  DesignPoint controller_point;  // fixed controller: nullopt = nominal b_m
  EstimatorKind estimator = EstimatorKind::kImm;
  DesignPoint kf_point;          // KF model: nullopt = nominal b_m
  double v_limit = 4.0;          // V
  int substeps = 0;              // 0: inner step <= 10 µs
  double process_torque_std = 0.0;   // N·m, truth-plant disturbance
  bool measurement_noise = true;
  Vector3 initial_state = Vector3::Zero();
  double transition_stay = 0.9;
  NoiseConfig<3, 1> noise = default_motor_noise();
  CovarianceForm covariance_form = CovarianceForm::kShort;

  std::size_t ticks() const { return std::size_t(std::llround(duration * sample_rate)); }
  double dt() const { return 1.0 / sample_rate; }

  void validate(const MotorConfig& motor) const {
    if (!(duration > 0.0)) throw ConfigError("duration must be positive");
    if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
    if (std::abs(dt() - motor.sample_time) > 1e-9 * motor.sample_time) {
      throw ConfigError("sample_rate disagrees with the motor sample_time");
    }
    if (!(v_limit > 0.0)) throw ConfigError("v_limit must be positive");
    if (!std::isfinite(reference.amplitude)) {
      throw ConfigError("reference amplitude must be finite");
    }
    if (reference.kind == ReferenceKind::kStep && !(reference.period > 0.0)) {
      throw ConfigError("step period must be positive");
    }
    if (reference.kind == ReferenceKind::kSine && !(reference.frequency > 0.0)) {
      throw ConfigError("sine frequency must be positive");
    }
    if (substeps < 0) throw ConfigError("substeps must be >= 0");
    if (!(process_torque_std >= 0.0)) throw ConfigError("process_torque_std must be >= 0");
    friction.validate(motor.b_max);
  }
};

// ---------------------------------------------------------------------------
// Offline design: vertex models, nominal model and gains
// ---------------------------------------------------------------------------

struct Design {
  MotorConfig motor;
  LqrWeights<3> weights;
  MotorVertexSet vertices;          // gains filled
  MotorDiscreteModel nominal_model; // at b_m
  RowVector3 nominal_gain = RowVector3::Zero();
  std::vector<RiccatiSolution<3>> vertex_solutions;
  RiccatiSolution<3> nominal_solution;

  MotorDiscreteModel model_at(const DesignPoint& p) const {
    return p ? vertices.model(*p) : nominal_model;
  }
  RowVector3 gain_at(const DesignPoint& p) const {
    return p ? vertices.gains.at(*p) : nominal_gain;
  }
  double rho_at(const DesignPoint& p) const {
    return p ? vertices.rho.at(*p) : motor.params.b_m;
  }
};

inline Design make_design(const MotorConfig& motor,
                          const LqrWeights<3>& weights = default_motor_lqr_weights()) {
  motor.validate();
  Design d;
  d.motor = motor;
  d.weights = weights;
  d.vertices = build_vertex_set(motor.params, motor.rho_values(), motor.sample_time,
                                motor.discretization);
  d.vertex_solutions = synthesize_vertex_gains(d.vertices, weights);
  d.nominal_model = discretize(build_continuous_model(motor.params, motor.params.b_m),
                               motor.sample_time, motor.discretization);
  d.nominal_solution = solve_dare(d.nominal_model.Phi, d.vertices.gamma, weights);
  d.nominal_gain = d.nominal_solution.K;
  return d;
}

// ---------------------------------------------------------------------------
// Truth plant
// ---------------------------------------------------------------------------

/// Inner steps so the integration step stays at or below 10 µs.
inline int default_substeps(double dt) { return std::max(1, int(std::ceil(dt / 1e-5 - 1e-9))); }

namespace detail {
inline Vector3 plant_derivative(const MotorParams& p, const Vector3& x, double v,
                                const FrictionModel& f, double disturbance) {
  const double tm = p.kt * x[2];
  return Vector3(x[1], (tm - friction_torque(x[1], tm, f) + disturbance) / p.jeq(),
                 (-p.rm * x[2] - p.ke * x[1] + v) / p.lm);
}
}  // namespace detail

/// Integrates the nonlinear motor over dt with fixed-step RK4. Dry friction
/// is discontinuous at ω = 0, so stick-slip is handled outside the stages:
/// while the motor torque is below breakaway, a rotor that friction would stop
/// within the next inner step, or whose speed changes sign, is put at rest.
inline Vector3 plant_step(const MotorParams& p, const Vector3& state, double v,
                          const FrictionModel& f, double dt, int substeps,
                          double disturbance = 0.0) {
  if (substeps < 1) throw ConfigError("substeps must be >= 1");
  const double h = dt / double(substeps);
  auto below_breakaway = [&](const Vector3& x) {
    return f.static_torque > 0.0 && std::abs(p.kt * x[2] + disturbance) < f.static_torque;
  };
  Vector3 x = state;
  for (int s = 0; s < substeps; ++s) {
    if (x[1] != 0.0 && below_breakaway(x)) {
      const double dir = x[1] > 0.0 ? 1.0 : -1.0;
      const double decel = f.coulomb_torque + f.viscous_coeff * std::abs(x[1]) -
                           dir * (p.kt * x[2] + disturbance);
      if (decel > 0.0 && std::abs(x[1]) * p.jeq() <= h * decel) x[1] = 0.0;
    }
    const Vector3 k1 = detail::plant_derivative(p, x, v, f, disturbance);
    const Vector3 k2 = detail::plant_derivative(p, x + 0.5 * h * k1, v, f, disturbance);
    const Vector3 k3 = detail::plant_derivative(p, x + 0.5 * h * k2, v, f, disturbance);
    const Vector3 k4 = detail::plant_derivative(p, x + h * k3, v, f, disturbance);
    const double omega_before = x[1];
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (omega_before * x[1] < 0.0 && below_breakaway(x)) x[1] = 0.0;
  }
  if (!x.allFinite()) {
    throw NumericalError(fmt::format("truth plant state became non-finite (v = {})", v));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Closed-loop run
// ---------------------------------------------------------------------------

struct ErrorMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double iae = 0.0;
};

struct MetricsReport {
  ErrorMetrics tracking;              // θ_ref − θ
  std::array<ErrorMetrics, 3> estimation;  // x̂ − x per state
  double duration = 0.0;
  std::size_t saturation_count = 0;
};

struct RunRecord {
  std::string name;
  std::size_t modes = 0;
  double dt = 0.0;
  std::vector<double> time;
  std::vector<Vector3> truth;
  std::vector<double> z;
  std::vector<Vector3> estimate;
  std::vector<Eigen::VectorXd> mu;
  std::vector<double> rho_hat;
  std::vector<double> rho_true;
  std::vector<RowVector3> gain;
  std::vector<double> u;
  std::vector<bool> saturated;
  std::vector<Vector3> reference;
  MetricsReport metrics;

  std::size_t size() const { return time.size(); }
};

/// RMSE, MAE and the Riemann-sum IAE of a uniformly sampled error signal.
inline ErrorMetrics error_metrics(std::span<const double> e, double dt) {
  if (e.empty()) throw ConfigError("metrics need a non-empty series");
  ErrorMetrics m;
  double sq = 0.0;
  double abs_sum = 0.0;
  for (double v : e) {
    sq += v * v;
    abs_sum += std::abs(v);
  }
  const double n = double(e.size());
  m.rmse = std::sqrt(sq / n);
  m.mae = abs_sum / n;
  m.iae = abs_sum * dt;
  return m;
}

inline MetricsReport compute_metrics(const RunRecord& r) {
  if (r.size() == 0) throw ConfigError("metrics need a non-empty run");
  MetricsReport rep;
  std::vector<double> e(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) e[k] = r.reference[k][0] - r.truth[k][0];
  rep.tracking = error_metrics(e, r.dt);
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < r.size(); ++k) e[k] = r.estimate[k][s] - r.truth[k][s];
    rep.estimation[std::size_t(s)] = error_metrics(e, r.dt);
  }
  rep.duration = double(r.size()) * r.dt;
  for (bool s : r.saturated) rep.saturation_count += s ? 1 : 0;
  return rep;
}

/// Runs one closed-loop scenario. Per tick: measure, estimate using the
/// previous input, schedule the gain, compute the saturated input, advance
/// the truth plant.
inline RunRecord run_scenario(const ScenarioSpec& spec, const Design& design) {
  spec.validate(design.motor);
  const auto& motor = design.motor;
  const auto& vs = design.vertices;
  const std::size_t n_ticks = spec.ticks();
  const double dt = spec.dt();
  const int substeps = spec.substeps > 0 ? spec.substeps : default_substeps(dt);

  std::mt19937_64 meas_rng(spec.seed);
  std::mt19937_64 proc_rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double meas_std = std::sqrt(spec.noise.R(0, 0));

  RunRecord rec;
  rec.name = spec.name;
  rec.modes = vs.size();
  rec.dt = dt;
  for (auto* v : {&rec.time, &rec.z, &rec.rho_hat, &rec.rho_true, &rec.u}) v->reserve(n_ticks);
  rec.truth.reserve(n_ticks);
  rec.estimate.reserve(n_ticks);
  rec.mu.reserve(n_ticks);
  rec.gain.reserve(n_ticks);
  rec.reference.reserve(n_ticks);
  rec.saturated.reserve(n_ticks);

  auto imm = make_motor_imm(vs, spec.transition_stay);
  GaussianBelief<3> kf = default_motor_prior();
  const MotorDiscreteModel kf_model = design.model_at(spec.kf_point);
  const double kf_rho = design.rho_at(spec.kf_point);
  const Eigen::VectorXd kf_mu = barycentric_weights(vs, kf_rho).xi;
  const RowVector3 fixed_gain = design.gain_at(spec.controller_point);

  Vector3 x = spec.initial_state;
  double u_prev = 0.0;
  for (std::size_t k = 0; k < n_ticks; ++k) {
    const double t = double(k) * dt;
    const double b_true = spec.friction.b_at(t);
    const FrictionModel friction = spec.friction.dry_at(t) ? motor.dry_friction(b_true)
                                                           : FrictionModel{0.0, 0.0, b_true};
    const double z = x[0] + (spec.measurement_noise ? meas_std * normal(meas_rng) : 0.0);

    Vector3 x_hat;
    Eigen::VectorXd mu;
    double rho_hat = 0.0;
    if (spec.estimator == EstimatorKind::kImm) {
      auto step = imm_step(imm, u_prev, z, spec.noise, spec.covariance_form);
      imm = std::move(step.state);
      x_hat = step.output.fused.mean;
      mu = step.output.mu;
      rho_hat = step.output.rho_hat;
    } else {
      const auto pred = kf_predict(kf, kf_model, u_prev, spec.noise.Q);
      kf = kf_update(pred, kf_model, z, spec.noise.R, spec.covariance_form).belief;
      x_hat = kf.mean;
      mu = kf_mu;
      rho_hat = kf_rho;
    }

    const Vector3 x_ref = spec.reference.at(t);
    const RowVector3 gain = spec.controller == ControllerKind::kMaps ? maps_gain(mu, vs)
                                                                     : fixed_gain;
    const ControlCommand cmd = control_input<3>(gain, x_ref, x_hat, spec.v_limit);

    rec.time.push_back(t);
    rec.truth.push_back(x);
    rec.z.push_back(z);
    rec.estimate.push_back(x_hat);
    rec.mu.push_back(mu);
    rec.rho_hat.push_back(rho_hat);
    rec.rho_true.push_back(b_true);
    rec.gain.push_back(gain);
    rec.u.push_back(cmd.u);
    rec.saturated.push_back(cmd.saturated);
    rec.reference.push_back(x_ref);

    const double disturbance =
        spec.process_torque_std > 0.0 ? spec.process_torque_std * normal(proc_rng) : 0.0;
    x = plant_step(motor.params, x, cmd.u, friction, dt, substeps, disturbance);
    u_prev = cmd.u;
  }
  rec.metrics = compute_metrics(rec);
  return rec;
}

/// Moving average of μ_mode over the trailing `window` ticks.
inline std::vector<double> smoothed_probability(const RunRecord& r, std::size_t mode,
                                                std::size_t window) {
  if (mode >= r.modes) throw ConfigError("mode index out of range");
  window = std::max<std::size_t>(window, 1);
  std::vector<double> out(r.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    acc += r.mu[k][Eigen::Index(mode)];
    if (k >= window) acc -= r.mu[k - window][Eigen::Index(mode)];
    out[k] = acc / double(std::min(k + 1, window));
  }
  return out;
}

/// Delay from `event_time` until `mode` becomes the dominant smoothed mode and
/// stays dominant for `hold` seconds. Empty if that never happens.
inline std::optional<double> detection_latency(const RunRecord& r, std::size_t mode,
                                               double event_time, std::size_t window = 25,
                                               double hold = 0.1) {
  std::vector<std::vector<double>> sm;
  for (std::size_t j = 0; j < r.modes; ++j) sm.push_back(smoothed_probability(r, j, window));
  auto dominant = [&](std::size_t k) {
    for (std::size_t j = 0; j < r.modes; ++j) {
      if (j != mode && sm[j][k] >= sm[mode][k]) return false;
    }
    return true;
  };
  const auto hold_ticks = std::size_t(std::llround(hold / r.dt));
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (r.time[k] < event_time || !dominant(k)) continue;
    bool held = k + hold_ticks < r.size();
    for (std::size_t q = k; held && q <= k + hold_ticks; ++q) held = dominant(q);
    if (held) return r.time[k] - event_time;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Preset scenarios
// ---------------------------------------------------------------------------

/// b alternating b_min → b_max at `first` and every `period` after that.
inline FrictionSchedule switching_friction(const MotorConfig& m, double first, double period,
                                           double duration) {
  FrictionSchedule s;
  s.segments = {{0.0, m.b_min, false}};
  bool high = true;
  for (double t = first; t < duration; t += period) {
    s.segments.push_back({t, high ? m.b_max : m.b_min, false});
    high = !high;
  }
  return s;
}

/// External load window: b_max plus dry friction inside [start, end).
inline FrictionSchedule load_window_friction(const MotorConfig& m, double start, double end) {
  FrictionSchedule s;
  s.segments = {{0.0, m.b_min, false}, {start, m.b_max, true}, {end, m.b_min, false}};
  return s;
}

inline FrictionSchedule constant_friction(double b, bool dry = false) {
  FrictionSchedule s;
  s.segments = {{0.0, b, dry}};
  return s;
}

inline std::vector<std::string> preset_names() {
  return {"friction-switch", "step-no-load", "step-load", "sine-no-load", "sine-load"};
}

/// Named scenarios. The estimation comparison excites the plant with a small
/// square wave; the controller comparisons track ±2 rad references.
inline ScenarioSpec preset(const std::string& name, const MotorConfig& m) {
  ScenarioSpec s;
  s.name = name;
  s.sample_rate = 1.0 / m.sample_time;
  s.duration = 30.0;
  if (name == "friction-switch") {
    s.reference = {ReferenceKind::kStep, 0.25, 10.0, 0.5};
    s.friction = switching_friction(m, 0.3, 5.0, s.duration);
    s.controller = ControllerKind::kFixed;
    s.estimator = EstimatorKind::kImm;
  } else if (name == "step-no-load" || name == "step-load") {
    s.reference = {ReferenceKind::kStep, 2.0, 10.0, 0.5};
    s.friction = name == "step-load" ? load_window_friction(m, 10.0, 20.0)
                                     : constant_friction(m.b_min);
  } else if (name == "sine-no-load" || name == "sine-load") {
    s.reference = {ReferenceKind::kSine, 2.0, 10.0, 0.5};
    s.friction = name == "sine-load" ? load_window_friction(m, 10.0, 20.0)
                                     : constant_friction(m.b_min);
  } else {
    throw ConfigError("unknown scenario preset '" + name + "'");
  }
  return s;
}

/// Baseline pairing for the controller comparison: standard KF on the
/// nominal model with the nominal fixed gain.
inline ScenarioSpec as_fixed_baseline(ScenarioSpec s) {
  s.name += "/fixed";
  s.controller = ControllerKind::kFixed;
  s.controller_point.reset();
  s.estimator = EstimatorKind::kKf;
  s.kf_point.reset();
  return s;
}

/// MAPS pairing: IMM bank with probability-scheduled gains.
inline ScenarioSpec as_maps(ScenarioSpec s) {
  s.name += "/maps";
  s.controller = ControllerKind::kMaps;
  s.estimator = EstimatorKind::kImm;
  return s;
}

// ---------------------------------------------------------------------------
// Scenario config files
// ---------------------------------------------------------------------------

namespace detail {
inline DesignPoint parse_design_point(const std::string& key, const std::string& v,
                                      std::size_t n_vertices) {
  if (v == "nominal") return std::nullopt;
  try {
    std::size_t used = 0;
    const long idx = std::stol(v, &used);
    if (used == v.size() && idx >= 0 && std::size_t(idx) < n_vertices) return std::size_t(idx);
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected 'nominal' or a vertex index, got '" + v + "'");
}

inline FrictionSchedule parse_segments(const std::string& text) {
  FrictionSchedule s;
  s.segments.clear();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = KeyValueConfig::trim(item);
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream is(item);
    std::string part;
    while (std::getline(is, part, ':')) parts.push_back(KeyValueConfig::trim(part));
    if (parts.size() < 2 || parts.size() > 3) {
      throw ConfigError("friction segment '" + item + "': expected start:b[:dry]");
    }
    FrictionSegment seg;
    seg.start = KeyValueConfig::to_double("friction", parts[0]);
    seg.b = KeyValueConfig::to_double("friction", parts[1]);
    seg.dry = parts.size() == 3 && (parts[2] == "1" || parts[2] == "true" || parts[2] == "dry");
    s.segments.push_back(seg);
  }
  return s;
}
}  // namespace detail

/// Motor and scenario from one key/value file. `preset` selects a starting
/// point that the remaining keys override.
struct RunConfig {
  MotorConfig motor;
  LqrWeights<3> weights = default_motor_lqr_weights();
  ScenarioSpec scenario;
};

inline RunConfig read_run_config(const KeyValueConfig& kv) {
  RunConfig rc;
  rc.motor = read_motor_config(kv);
  const auto& m = rc.motor;
  ScenarioSpec s = preset(kv.get_string("preset", "step-no-load"), m);
  s.name = kv.get_string("name", s.name);

  if (const auto ref = kv.get("reference")) {
    if (*ref == "step") s.reference.kind = ReferenceKind::kStep;
    else if (*ref == "sine") s.reference.kind = ReferenceKind::kSine;
    else if (*ref == "zero") s.reference.kind = ReferenceKind::kZero;
    else throw ConfigError("reference must be step, sine or zero");
  }
  s.reference.amplitude = kv.get_double("amplitude", s.reference.amplitude);
  s.reference.period = kv.get_double("period", s.reference.period);
  s.reference.frequency = kv.get_double("frequency", s.reference.frequency);
  s.duration = kv.get_double("duration", s.duration);
  s.sample_rate = kv.get_double("sample_rate", 1.0 / m.sample_time);
  s.seed = std::uint64_t(kv.get_int("seed", (long long)s.seed));
  s.v_limit = kv.get_double("v_limit", s.v_limit);
  s.substeps = int(kv.get_int("substeps", s.substeps));
  s.process_torque_std = kv.get_double("process_torque_std", s.process_torque_std);
  s.measurement_noise = kv.get_bool("measurement_noise", s.measurement_noise);
  s.transition_stay = kv.get_double("transition_stay", s.transition_stay);
  const auto x0 = kv.get_doubles("initial_state", {s.initial_state[0], s.initial_state[1],
                                                   s.initial_state[2]});
  if (x0.size() != 3) throw ConfigError("initial_state needs 3 values");
  s.initial_state = Vector3(x0[0], x0[1], x0[2]);

  const auto qkf = kv.get_doubles("q_kf", {s.noise.Q(0, 0), s.noise.Q(1, 1), s.noise.Q(2, 2)});
  if (qkf.size() != 3) throw ConfigError("q_kf needs 3 diagonal values");
  s.noise.Q = Vector3(qkf[0], qkf[1], qkf[2]).asDiagonal();
  s.noise.R(0, 0) = kv.get_double("r_kf", s.noise.R(0, 0));
  if (!(s.noise.R(0, 0) > 0.0) || (s.noise.Q.diagonal().array() < 0.0).any()) {
    throw ConfigError("filter noise covariances must be Q >= 0, R > 0");
  }
  s.covariance_form = kv.get_bool("joseph", false) ? CovarianceForm::kJoseph
                                                   : CovarianceForm::kShort;

  const auto ql = kv.get_doubles("q_lqr", {rc.weights.Q(0, 0), rc.weights.Q(1, 1),
                                           rc.weights.Q(2, 2)});
  if (ql.size() != 3) throw ConfigError("q_lqr needs 3 diagonal values");
  rc.weights.Q = Vector3(ql[0], ql[1], ql[2]).asDiagonal();
  rc.weights.R = kv.get_double("r_lqr", rc.weights.R);
  rc.weights.validate();

  if (const auto e = kv.get("estimator")) {
    if (*e == "kf") s.estimator = EstimatorKind::kKf;
    else if (*e == "imm") s.estimator = EstimatorKind::kImm;
    else throw ConfigError("estimator must be kf or imm");
  }
  if (const auto c = kv.get("controller")) {
    if (*c == "fixed") s.controller = ControllerKind::kFixed;
    else if (*c == "maps") s.controller = ControllerKind::kMaps;
    else throw ConfigError("controller must be fixed or maps");
  }
  const std::size_t nv = m.rho_values().size();
  if (const auto v = kv.get("kf_model")) s.kf_point = detail::parse_design_point("kf_model", *v, nv);
  if (const auto v = kv.get("controller_vertex")) {
    s.controller_point = detail::parse_design_point("controller_vertex", *v, nv);
  }

  if (const auto f = kv.get("friction")) {
    if (*f == "switch") {
      s.friction = switching_friction(m, kv.get_double("switch_first", 0.3),
                                      kv.get_double("switch_period", 5.0), s.duration);
    } else if (*f == "load") {
      s.friction = load_window_friction(m, kv.get_double("load_start", 10.0),
                                        kv.get_double("load_end", 20.0));
    } else if (*f == "min") {
      s.friction = constant_friction(m.b_min);
    } else if (*f == "max") {
      s.friction = constant_friction(m.b_max);
    } else if (*f == "nominal") {
      s.friction = constant_friction(m.params.b_m);
    } else {
      s.friction = detail::parse_segments(*f);
    }
  }
  if (const auto interp = kv.get("friction_interp")) {
    if (*interp == "step") s.friction.interp = FrictionInterp::kStep;
    else if (*interp == "ramp") s.friction.interp = FrictionInterp::kRamp;
    else throw ConfigError("friction_interp must be step or ramp");
  }
  s.friction.ramp_time = kv.get_double("ramp_time", s.friction.ramp_time);

  kv.reject_unknown();
  s.validate(m);
  rc.scenario = s;
  return rc;
}

// ---------------------------------------------------------------------------
// Comparison of variants
// ---------------------------------------------------------------------------

struct ComparisonRow {
  std::string metric;
  std::vector<double> values;  // one per variant
  std::vector<double> delta_pct;  // relative to the first variant
};

struct ComparisonTable {
  std::vector<std::string> variants;
  std::vector<ComparisonRow> rows;

  const ComparisonRow& row(const std::string& metric) const {
    for (const auto& r : rows) {
      if (r.metric == metric) return r;
    }
    throw ConfigError("no metric '" + metric + "' in comparison");
  }
};

inline double percent_delta(double base, double value) {
  if (base == 0.0) return value == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return 100.0 * (value - base) / base;
}

inline ComparisonTable compare_runs(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw ConfigError("nothing to compare");
  for (const auto& r : runs) {
    if (r.size() != runs.front().size() || r.dt != runs.front().dt) {
      throw ConfigError("compared runs have mismatched durations");
    }
  }
  ComparisonTable t;
  for (const auto& r : runs) t.variants.push_back(r.name);
  auto add = [&](const std::string& metric, auto getter) {
    ComparisonRow row;
    row.metric = metric;
    for (const auto& r : runs) row.values.push_back(getter(r.metrics));
    for (double v : row.values) row.delta_pct.push_back(percent_delta(row.values.front(), v));
    t.rows.push_back(std::move(row));
  };
  add("tracking_rmse", [](const MetricsReport& m) { return m.tracking.rmse; });
  add("tracking_mae", [](const MetricsReport& m) { return m.tracking.mae; });
  add("tracking_iae", [](const MetricsReport& m) { return m.tracking.iae; });
  const char* names[3] = {"theta", "omega", "current"};
  for (int s = 0; s < 3; ++s) {
    add(std::string("est_rmse_") + names[s],
        [s](const MetricsReport& m) { return m.estimation[std::size_t(s)].rmse; });
  }
  return t;
}

/// Runs several scenario variants concurrently; each worker owns its state.
inline std::vector<RunRecord> run_variants(const std::vector<ScenarioSpec>& specs,
                                           const Design& design, bool parallel = true) {
  std::vector<RunRecord> out;
  if (!parallel) {
    for (const auto& s : specs) out.push_back(run_scenario(s, design));
    return out;
  }
  std::vector<std::future<RunRecord>> jobs;
  for (const auto& s : specs) {
    jobs.push_back(std::async(std::launch::async, [&design, s] { return run_scenario(s, design); }));
  }
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string fmt_num(double v) { return fmt::format("{:.12g}", v); }

/// Per-tick CSV. Columns: t, theta, omega, current, z, theta_hat, omega_hat,
/// current_hat, mu_0..mu_{n-1}, rho_hat, rho_true, k_theta, k_omega,
/// k_current, u, saturated, theta_ref, omega_ref, current_ref.
inline void write_run_csv(std::ostream& out, const RunRecord& r) {
  out << "t,theta,omega,current,z,theta_hat,omega_hat,current_hat";
  for (std::size_t j = 0; j < r.modes; ++j) out << ",mu_" << j;
  out << ",rho_hat,rho_true,k_theta,k_omega,k_current,u,saturated,theta_ref,omega_ref,current_ref\n";
  for (std::size_t k = 0; k < r.size(); ++k) {
    std::string line = fmt_num(r.time[k]);
    auto put = [&line](double v) {
      line += ',';
      line += fmt_num(v);
    };
    for (int s = 0; s < 3; ++s) put(r.truth[k][s]);
    put(r.z[k]);
    for (int s = 0; s < 3; ++s) put(r.estimate[k][s]);
    for (Eigen::Index j = 0; j < r.mu[k].size(); ++j) put(r.mu[k][j]);
    put(r.rho_hat[k]);
    put(r.rho_true[k]);
    for (int s = 0; s < 3; ++s) put(r.gain[k][s]);
    put(r.u[k]);
    line += r.saturated[k] ? ",1" : ",0";
    for (int s = 0; s < 3; ++s) put(r.reference[k][s]);
    line += '\n';
    out << line;
  }
}

/// Filter trace: t, z, mu_0.., theta_hat, omega_hat, current_hat, rho_hat.
inline void write_filter_trace_csv(std::ostream& out, const RunRecord& r) {
  out << "t,z";
  for (std::size_t j = 0; j < r.modes; ++j) out << ",mu_" << j;
  out << ",theta_hat,omega_hat,current_hat,rho_hat\n";
  for (std::size_t k = 0; k < r.size(); ++k) {
    out << fmt_num(r.time[k]) << ',' << fmt_num(r.z[k]);
    for (Eigen::Index j = 0; j < r.mu[k].size(); ++j) out << ',' << fmt_num(r.mu[k][j]);
    for (int s = 0; s < 3; ++s) out << ',' << fmt_num(r.estimate[k][s]);
    out << ',' << fmt_num(r.rho_hat[k]) << '\n';
  }
}

/// Plot data: references, truth, errors and scheduling, every `stride` ticks.
inline void write_plot_csv(std::ostream& out, const RunRecord& r, std::size_t stride = 1) {
  stride = std::max<std::size_t>(stride, 1);
  out << "t,theta_ref,theta,tracking_error,err_theta,err_omega,err_current";
  for (std::size_t j = 0; j < r.modes; ++j) out << ",mu_" << j;
  out << ",rho_hat,rho_true,u\n";
  for (std::size_t k = 0; k < r.size(); k += stride) {
    out << fmt_num(r.time[k]) << ',' << fmt_num(r.reference[k][0]) << ','
        << fmt_num(r.truth[k][0]) << ',' << fmt_num(r.reference[k][0] - r.truth[k][0]);
    for (int s = 0; s < 3; ++s) out << ',' << fmt_num(r.estimate[k][s] - r.truth[k][s]);
    for (Eigen::Index j = 0; j < r.mu[k].size(); ++j) out << ',' << fmt_num(r.mu[k][j]);
    out << ',' << fmt_num(r.rho_hat[k]) << ',' << fmt_num(r.rho_true[k]) << ','
        << fmt_num(r.u[k]) << '\n';
  }
}

inline nlohmann::json to_json(const ErrorMetrics& m) {
  return {{"rmse", m.rmse}, {"mae", m.mae}, {"iae", m.iae}};
}

inline nlohmann::json metrics_json(const RunRecord& r) {
  const auto& m = r.metrics;
  return {{"name", r.name},
          {"duration", m.duration},
          {"ticks", r.size()},
          {"saturation_count", m.saturation_count},
          {"tracking", to_json(m.tracking)},
          {"estimation",
           {{"theta", to_json(m.estimation[0])},
            {"omega", to_json(m.estimation[1])},
            {"current", to_json(m.estimation[2])}}}};
}

inline void write_comparison_csv(std::ostream& out, const ComparisonTable& t) {
  out << "metric";
  for (const auto& v : t.variants) out << ',' << v;
  for (std::size_t i = 1; i < t.variants.size(); ++i) out << ",delta_pct_" << t.variants[i];
  out << '\n';
  for (const auto& row : t.rows) {
    out << row.metric;
    for (double v : row.values) out << ',' << fmt_num(v);
    for (std::size_t i = 1; i < row.delta_pct.size(); ++i) out << ',' << fmt_num(row.delta_pct[i]);
    out << '\n';
  }
}

inline void write_comparison_text(std::ostream& out, const ComparisonTable& t) {
  std::size_t width = 14;
  for (const auto& v : t.variants) width = std::max(width, v.size() + 2);
  out << fmt::format("{:<18}", "metric");
  for (const auto& v : t.variants) out << fmt::format("{:>{}}", v, width);
  for (std::size_t i = 1; i < t.variants.size(); ++i) out << fmt::format("{:>12}", "delta%");
  out << '\n';
  for (const auto& row : t.rows) {
    out << fmt::format("{:<18}", row.metric);
    for (double v : row.values) out << fmt::format("{:>{}.6g}", v, width);
    for (std::size_t i = 1; i < row.delta_pct.size(); ++i) {
      out << fmt::format("{:>+12.2f}", row.delta_pct[i]);
    }
    out << '\n';
  }
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

/// Moduli of the closed-loop eigenvalues, sorted descending.
inline std::vector<double> eigenvalue_moduli(const Matrix3& a) {
  Eigen::EigenSolver<Matrix3> es(a, false);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < 3; ++i) out.push_back(std::abs(es.eigenvalues()[i]));
  std::sort(out.rbegin(), out.rend());
  return out;
}

/// Vertex models, gains and Riccati solutions.
inline nlohmann::json design_json(const Design& d) {
  nlohmann::json j;
  j["discretization"] = to_string(d.motor.discretization);
  j["sample_time"] = d.motor.sample_time;
  j["gamma"] = matrix_json(d.vertices.gamma);
  j["lqr"] = {{"Q", matrix_json(d.weights.Q)}, {"R", d.weights.R}};
  const auto loops = closed_loops(d.vertices);
  for (std::size_t i = 0; i < d.vertices.size(); ++i) {
    const auto& sol = d.vertex_solutions.at(i);
    j["vertices"].push_back({{"rho", d.vertices.rho[i]},
                             {"phi", matrix_json(d.vertices.phi[i])},
                             {"K", matrix_json(sol.K)},
                             {"P", matrix_json(sol.P)},
                             {"iterations", sol.iterations},
                             {"residual", sol.residual},
                             {"closed_loop_moduli", eigenvalue_moduli(loops[i])}});
  }
  j["nominal"] = {{"rho", d.motor.params.b_m},
                  {"K", matrix_json(d.nominal_gain)},
                  {"P", matrix_json(d.nominal_solution.P)},
                  {"residual", d.nominal_solution.residual}};
  return j;
}

/// One row per design point: name, rho, k_theta, k_omega, k_current,
/// rho_cl (closed-loop spectral radius), residual.
inline void write_gains_csv(std::ostream& out, const Design& d) {
  out << "point,rho,k_theta,k_omega,k_current,rho_cl,residual\n";
  auto row = [&out](const std::string& name, double rho, const RiccatiSolution<3>& s) {
    out << name << ',' << fmt_num(rho);
    for (int i = 0; i < 3; ++i) out << ',' << fmt_num(s.K[i]);
    out << ',' << fmt_num(s.closed_loop_spectral_radius) << ',' << fmt_num(s.residual) << '\n';
  };
  for (std::size_t i = 0; i < d.vertices.size(); ++i) {
    row("vertex" + std::to_string(i), d.vertices.rho[i], d.vertex_solutions.at(i));
  }
  row("nominal", d.motor.params.b_m, d.nominal_solution);
}

}  // namespace maps::harness

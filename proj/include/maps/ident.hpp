#pragma once

#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "maps/core.hpp"
#include "maps/motor_model.hpp"

namespace maps::ident {

/// One steady-state operating point: applied voltage and settled speed.
struct SteadyStateSample {
  double voltage = 0.0;   // V
  double velocity = 0.0;  // rad/s
  double velocity_std = 0.0;  // optional measurement spread, rad/s
};

struct SlopeFit {
  double slope = 0.0;         // V·s/rad
  double intercept = 0.0;     // V, zero unless fitted with an intercept
  double residual_rms = 0.0;  // V
};

struct IdentResult {
  double slope = 0.0;
  double viscous_coeff = 0.0;
  double residual_rms = 0.0;
  bool non_positive_b = false;  // the regression implies b <= 0
};

enum class FitMode {
  kThroughOrigin,
  kWithIntercept,  // diagnostics only, never used for b
};

enum class Weighting {
  kNone,
  kInverseVariance,  // weight 1/σ² from SteadyStateSample::velocity_std
};

namespace detail {
inline double sample_weight(const SteadyStateSample& s, Weighting w) {
  if (w == Weighting::kNone) return 1.0;
  if (!(s.velocity_std > 0.0)) {
    throw ConfigError("inverse-variance weighting requires positive velocity_std");
  }
  return 1.0 / (s.velocity_std * s.velocity_std);
}
}  // namespace detail

/// Least-squares slope of V against ω. The default model V = μω has no
/// intercept, so μ = ΣVω / Σω².
inline SlopeFit regress_slope(std::span<const SteadyStateSample> samples,
                              FitMode mode = FitMode::kThroughOrigin,
                              Weighting weighting = Weighting::kNone) {
  if (samples.size() < 2) throw ConfigError("regression needs at least 2 samples");
  bool all_zero = true;
  for (const auto& s : samples) {
    if (s.velocity != 0.0) all_zero = false;
  }
  if (all_zero) throw NumericalError("degenerate regression: all velocities are zero");

  SlopeFit fit;
  if (mode == FitMode::kThroughOrigin) {
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& s : samples) {
      const double w = detail::sample_weight(s, weighting);
      sxy += w * s.voltage * s.velocity;
      sxx += w * s.velocity * s.velocity;
    }
    fit.slope = sxy / sxx;
  } else {
    double sw = 0.0, mx = 0.0, my = 0.0;
    for (const auto& s : samples) {
      const double w = detail::sample_weight(s, weighting);
      sw += w;
      mx += w * s.velocity;
      my += w * s.voltage;
    }
    mx /= sw;
    my /= sw;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& s : samples) {
      const double w = detail::sample_weight(s, weighting);
      sxx += w * (s.velocity - mx) * (s.velocity - mx);
      sxy += w * (s.velocity - mx) * (s.voltage - my);
    }
    if (sxx == 0.0) throw NumericalError("degenerate regression: velocities are all equal");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
  }

  double ss = 0.0;
  for (const auto& s : samples) {
    const double e = s.voltage - (fit.slope * s.velocity + fit.intercept);
    ss += e * e;
  }
  fit.residual_rms = std::sqrt(ss / double(samples.size()));
  return fit;
}

/// b = (Kt/Rm)(μ − Ke). May come out negative; the caller decides.
inline double viscous_from_slope(const MotorParams& p, double slope) {
  return (p.kt / p.rm) * (slope - p.ke);
}

/// Steady-state voltage for a given speed and viscous coefficient.
inline double steady_state_voltage(const MotorParams& p, double b, double omega) {
  return omega * (p.rm * b / p.kt + p.ke);
}

inline IdentResult identify(const MotorParams& p,
                            std::span<const SteadyStateSample> samples,
                            Weighting weighting = Weighting::kNone) {
  const SlopeFit fit = regress_slope(samples, FitMode::kThroughOrigin, weighting);
  IdentResult r;
  r.slope = fit.slope;
  r.residual_rms = fit.residual_rms;
  r.viscous_coeff = viscous_from_slope(p, fit.slope);
  r.non_positive_b = !(r.viscous_coeff > 0.0);
  return r;
}

/// Reads "voltage,velocity[,velocity_std]" rows. A non-numeric first row is
/// taken as a header; '#' starts a comment line.
inline std::vector<SteadyStateSample> parse_samples_csv(std::istream& in) {
  std::vector<SteadyStateSample> out;
  std::string line;
  std::size_t line_no = 0;
  bool first_data_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;

    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);

    std::vector<double> values;
    bool numeric = cols.size() >= 2;
    for (const auto& c : cols) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(c, &used));
        if (c.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first_data_line) {
        first_data_line = false;
        continue;
      }
      throw ConfigError("malformed sample row at line " + std::to_string(line_no));
    }
    first_data_line = false;
    SteadyStateSample s{values[0], values[1], values.size() > 2 ? values[2] : 0.0};
    if (s.velocity != 0.0 && s.voltage * s.velocity < 0.0) {
      throw ConfigError("sample at line " + std::to_string(line_no) +
                        ": voltage and velocity have opposite signs");
    }
    out.push_back(s);
  }
  return out;
}

inline std::vector<SteadyStateSample> load_samples_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open sample file: " + path);
  return parse_samples_csv(f);
}

}  // namespace maps::ident

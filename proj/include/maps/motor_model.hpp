#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "maps/core.hpp"

namespace maps {

/// Physical constants of the QUBE-Servo 2 motor. The equivalent inertia is
/// always derived from its three components.
struct MotorParams {
  double kt = 0.042;    // torque constant, N·m/A
  double ke = 0.042;    // back-emf constant, V·s/rad
  double jr = 4.0e-6;   // rotor inertia, kg·m²
  double jh = 0.6e-6;   // hub inertia, kg·m²
  double jd = 1.6e-5;   // disc inertia, kg·m²
  double lm = 1.16e-3;  // inductance, H
  double rm = 8.4;      // resistance, Ω
  double b_m = 1.0e-5;  // nominal viscous coefficient, N·m·s/rad

  double jeq() const { return jr + jh + jd; }

  void validate() const {
    const std::pair<const char*, double> fields[] = {
        {"kt", kt}, {"ke", ke}, {"jr", jr}, {"jh", jh},
        {"jd", jd}, {"lm", lm}, {"rm", rm}, {"b_m", b_m}};
    for (const auto& [name, value] : fields) {
      if (!(value > 0.0) || !std::isfinite(value)) {
        throw ParameterError(std::string("motor parameter '") + name +
                             "' must be strictly positive");
      }
    }
  }
};

/// ẋ = A x + B u, y = C x with x = [θ, ω, i].
struct ContinuousModel {
  Matrix3 A = Matrix3::Zero();
  Vector3 B = Vector3::Zero();
  RowVector3 C = RowVector3::Zero();
  double viscous_coeff = 0.0;
};

/// x⁺ = Φ x + Γ u, z = H x. Single input; D measured channels.
template <int N, int D = 1>
struct DiscreteModel {
  Mat<N, N> Phi = Mat<N, N>::Identity();
  Vec<N> Gamma = Vec<N>::Zero();
  Mat<D, N> H = Mat<D, N>::Zero();
  double sample_time = 0.0;

  static constexpr int state_dim = N;
  static constexpr int meas_dim = D;
};

using MotorDiscreteModel = DiscreteModel<3, 1>;

enum class Discretization { kForwardEuler, kExactZoh };

inline const char* to_string(Discretization d) {
  return d == Discretization::kForwardEuler ? "euler" : "zoh";
}

/// Dry and viscous friction acting on the rotor.
struct FrictionModel {
  double static_torque = 0.0;   // τs, N·m
  double coulomb_torque = 0.0;  // τc, N·m
  double viscous_coeff = 0.0;   // b, N·m·s/rad

  void validate() const {
    if (!(coulomb_torque >= 0.0) || !(static_torque >= coulomb_torque) ||
        !(viscous_coeff >= 0.0)) {
      throw ParameterError("friction model requires tau_s >= tau_c >= 0, b >= 0");
    }
  }
};

/// Below this speed the rotor counts as being at rest for stiction.
inline constexpr double kRestVelocity = 1e-6;

/// Friction torque opposing the motion. At rest a sub-threshold applied torque
/// is cancelled exactly; otherwise Coulomb plus viscous friction.
inline double friction_torque(double omega, double applied_torque,
                              const FrictionModel& f) {
  if (std::abs(omega) < kRestVelocity) {
    if (std::abs(applied_torque) < f.static_torque) return applied_torque;
    return 0.0;
  }
  const double sign = omega > 0.0 ? 1.0 : -1.0;
  return f.coulomb_torque * sign + f.viscous_coeff * omega;
}

inline ContinuousModel build_continuous_model(const MotorParams& p, double b) {
  if (!(p.lm > 0.0)) throw ParameterError("inductance must be positive");
  if (!(p.jeq() > 0.0)) throw ParameterError("equivalent inertia must be positive");
  if (!(b >= 0.0)) throw ParameterError("viscous coefficient must be non-negative");

  const double jeq = p.jeq();
  ContinuousModel m;
  m.viscous_coeff = b;
  m.A << 0.0, 1.0, 0.0,                //
      0.0, -b / jeq, p.kt / jeq,       //
      0.0, -p.ke / p.lm, -p.rm / p.lm;
  m.B << 0.0, 0.0, 1.0 / p.lm;
  m.C << 1.0, 0.0, 0.0;
  return m;
}

inline MotorDiscreteModel discretize_forward_euler(const ContinuousModel& m,
                                                   double sample_time) {
  if (!(sample_time > 0.0)) throw ParameterError("sample time must be positive");
  MotorDiscreteModel d;
  d.Phi = Matrix3::Identity() + sample_time * m.A;
  d.Gamma = sample_time * m.B;
  d.H = m.C;
  d.sample_time = sample_time;
  return d;
}

/// Zero-order-hold discretization of a general (A, B) pair via the
/// exponential of the augmented matrix [[A, B], [0, 0]]·T.
template <int N>
std::pair<Mat<N, N>, Vec<N>> zoh_pair(const Mat<N, N>& a, const Vec<N>& b,
                                      double sample_time) {
  if (!(sample_time > 0.0)) throw ParameterError("sample time must be positive");
  constexpr int M = N + 1;
  Mat<M, M> aug = Mat<M, M>::Zero();
  aug.template topLeftCorner<N, N>() = a * sample_time;
  aug.template topRightCorner<N, 1>() = b * sample_time;
  const Mat<M, M> e = aug.exp();
  return {e.template topLeftCorner<N, N>(), e.template topRightCorner<N, 1>()};
}

inline MotorDiscreteModel discretize_exact_zoh(const ContinuousModel& m,
                                               double sample_time) {
  auto [phi, gamma] = zoh_pair<3>(m.A, m.B, sample_time);
  MotorDiscreteModel d;
  d.Phi = phi;
  d.Gamma = gamma;
  d.H = m.C;
  d.sample_time = sample_time;
  return d;
}

inline MotorDiscreteModel discretize(const ContinuousModel& m, double sample_time,
                                     Discretization mode) {
  return mode == Discretization::kForwardEuler
             ? discretize_forward_euler(m, sample_time)
             : discretize_exact_zoh(m, sample_time);
}

/// Polytopic vertex models Φ^[i] = Φ(0) + ρ^[i]·Φ̂ with their LQR gains.
template <int N>
struct VertexSet {
  std::vector<double> rho;
  std::vector<Mat<N, N>> phi;
  std::vector<Vec<N>> gammas;  // per-vertex input matrix (equal under Euler)
  Vec<N> gamma = Vec<N>::Zero();  // common Γ used for synthesis and analysis
  RowVec<N> h = RowVec<N>::Zero();
  double sample_time = 0.0;
  Mat<N, N> phi0 = Mat<N, N>::Zero();
  Mat<N, N> phi_hat = Mat<N, N>::Zero();
  std::vector<RowVec<N>> gains;  // filled by synthesize_vertex_gains

  std::size_t size() const { return rho.size(); }

  DiscreteModel<N, 1> model(std::size_t i) const {
    DiscreteModel<N, 1> m;
    m.Phi = phi.at(i);
    m.Gamma = gammas.empty() ? gamma : gammas.at(i);
    m.H = h;
    m.sample_time = sample_time;
    return m;
  }

  /// Affine-model matrix at an arbitrary scheduling value.
  Mat<N, N> phi_at(double r) const { return phi0 + r * phi_hat; }

  void validate() const {
    if (rho.size() < 2) throw ConfigError("vertex set needs at least 2 vertices");
    for (std::size_t i = 1; i < rho.size(); ++i) {
      if (!(rho[i] > rho[i - 1])) {
        throw ConfigError("vertex scheduling values must be strictly increasing");
      }
    }
    if (phi.size() != rho.size()) throw ConfigError("vertex matrix count mismatch");
    if (!gains.empty() && gains.size() != rho.size()) {
      throw ConfigError("vertex gain count mismatch");
    }
  }
};

using MotorVertexSet = VertexSet<3>;

/// Least-squares affine fit Φ(ρ) ≈ Φ0 + ρ·Φ̂ over the supplied vertices.
template <int N>
void fit_affine_decomposition(VertexSet<N>& vs) {
  const std::size_t n = vs.rho.size();
  double mean_rho = 0.0;
  Mat<N, N> mean_phi = Mat<N, N>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mean_rho += vs.rho[i];
    mean_phi += vs.phi[i];
  }
  mean_rho /= double(n);
  mean_phi /= double(n);
  double sxx = 0.0;
  Mat<N, N> sxy = Mat<N, N>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = vs.rho[i] - mean_rho;
    sxx += dx * dx;
    sxy += dx * (vs.phi[i] - mean_phi);
  }
  vs.phi_hat = sxy / sxx;
  vs.phi0 = mean_phi - mean_rho * vs.phi_hat;
}

/// Builds the vertex models for the given scheduling values. Under forward
/// Euler Φ(0) and Φ̂ are the exact analytic decomposition; under ZOH each
/// vertex is discretized independently and the decomposition is fitted.
inline MotorVertexSet build_vertex_set(const MotorParams& p,
                                       const std::vector<double>& rho_values,
                                       double sample_time, Discretization mode) {
  MotorVertexSet vs;
  vs.rho = rho_values;
  if (vs.rho.size() < 2) throw ConfigError("vertex set needs at least 2 vertices");
  for (std::size_t i = 1; i < vs.rho.size(); ++i) {
    if (!(vs.rho[i] > vs.rho[i - 1])) {
      throw ConfigError("vertex scheduling values must be strictly increasing");
    }
  }
  vs.sample_time = sample_time;
  vs.h << 1.0, 0.0, 0.0;

  if (mode == Discretization::kForwardEuler) {
    const auto base = discretize_forward_euler(build_continuous_model(p, 0.0), sample_time);
    vs.phi0 = base.Phi;
    vs.phi_hat = Matrix3::Zero();
    vs.phi_hat(1, 1) = -sample_time / p.jeq();
    vs.gamma = base.Gamma;
    for (double r : vs.rho) {
      vs.phi.push_back(vs.phi0 + r * vs.phi_hat);
      vs.gammas.push_back(base.Gamma);
    }
  } else {
    for (double r : vs.rho) {
      const auto d = discretize_exact_zoh(build_continuous_model(p, r), sample_time);
      vs.phi.push_back(d.Phi);
      vs.gammas.push_back(d.Gamma);
    }
    vs.gamma = discretize_exact_zoh(build_continuous_model(p, p.b_m), sample_time).Gamma;
    fit_affine_decomposition(vs);
  }
  return vs;
}

}  // namespace maps

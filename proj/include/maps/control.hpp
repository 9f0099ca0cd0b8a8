#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/LU>

#include "maps/core.hpp"
#include "maps/motor_model.hpp"

namespace maps {

template <int N>
struct LqrWeights {
  Mat<N, N> Q = Mat<N, N>::Identity();
  double R = 1.0;

  void validate() const {
    if (!(R > 0.0)) throw ConfigError("LQR input weight must be positive");
    if (!Q.isApprox(Q.transpose(), 1e-12) ||
        linalg::min_eigenvalue_symmetric(Q) < -1e-12) {
      throw ConfigError("LQR state weight must be symmetric positive semidefinite");
    }
  }
};

/// Position-heavy weighting used for the motor.
inline LqrWeights<3> default_motor_lqr_weights() {
  LqrWeights<3> w;
  w.Q = Vector3(100.0, 1.0, 1.0).asDiagonal();
  w.R = 10.0;
  return w;
}

template <int N>
struct RiccatiSolution {
  Mat<N, N> P = Mat<N, N>::Zero();
  RowVec<N> K = RowVec<N>::Zero();
  int iterations = 0;
  double residual = 0.0;
  double closed_loop_spectral_radius = 0.0;
};

struct DareOptions {
  // Stop once ‖Ric(P) − P‖∞ <= max(tolerance, relative_tolerance·‖P‖∞).
  double tolerance = 1e-10;
  double relative_tolerance = 1e-15;
  int max_iterations = 100000;
};

namespace detail {

template <int N>
Mat<N, N> riccati_map(const Mat<N, N>& phi, const Vec<N>& gamma, const Mat<N, N>& q,
                      double r, const Mat<N, N>& p) {
  const Vec<N> pg = p * gamma;
  const double denom = r + gamma.dot(pg);
  const RowVec<N> gpphi = pg.transpose() * phi;
  return phi.transpose() * p * phi - gpphi.transpose() * gpphi / denom + q;
}

}  // namespace detail

/// DARE residual ‖ΦᵀPΦ − ΦᵀPΓ(R+ΓᵀPΓ)⁻¹ΓᵀPΦ + Q − P‖∞.
template <int N>
double dare_residual(const Mat<N, N>& phi, const Vec<N>& gamma, const LqrWeights<N>& w,
                     const Mat<N, N>& p) {
  return linalg::inf_norm(detail::riccati_map<N>(phi, gamma, w.Q, w.R, p) - p);
}

/// Fixed-point Riccati iteration from P₀ = Q. The returned K is the regulator
/// gain for u = −Kx; the closed loop is Φ − ΓK.
template <int N>
RiccatiSolution<N> solve_dare(const Mat<N, N>& phi, const Vec<N>& gamma,
                              const LqrWeights<N>& w, const DareOptions& opt = {}) {
  w.validate();
  RiccatiSolution<N> sol;
  Mat<N, N> p = w.Q;
  bool converged = false;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    const Mat<N, N> next = linalg::symmetrize(detail::riccati_map<N>(phi, gamma, w.Q, w.R, p));
    if (!next.allFinite()) break;
    const double step = linalg::inf_norm(next - p);
    p = next;
    if (step <= std::max(opt.tolerance, opt.relative_tolerance * linalg::inf_norm(p))) {
      converged = true;
      ++it;
      break;
    }
  }
  sol.P = p;
  sol.iterations = it;
  sol.residual = p.allFinite() ? dare_residual<N>(phi, gamma, w, p)
                               : std::numeric_limits<double>::infinity();
  if (!converged) {
    throw SolverError("Riccati iteration did not converge", sol.residual);
  }
  const Vec<N> pg = p * gamma;
  sol.K = (pg.transpose() * phi) / (w.R + gamma.dot(pg));
  sol.closed_loop_spectral_radius = linalg::spectral_radius(Mat<N, N>(phi - gamma * sol.K));
  if (!(sol.closed_loop_spectral_radius < 1.0)) {
    throw StabilizabilityError("LQR closed loop is not Schur stable",
                               sol.closed_loop_spectral_radius);
  }
  return sol;
}

template <int N, int D>
RiccatiSolution<N> solve_dare(const DiscreteModel<N, D>& model, const LqrWeights<N>& w,
                              const DareOptions& opt = {}) {
  return solve_dare<N>(model.Phi, model.Gamma, w, opt);
}

/// Fills vs.gains with the vertex LQR gains K^[i] computed on (Φ^[i], Γ).
template <int N>
std::vector<RiccatiSolution<N>> synthesize_vertex_gains(VertexSet<N>& vs,
                                                        const Vec<N>& gamma,
                                                        const LqrWeights<N>& w,
                                                        const DareOptions& opt = {}) {
  if (vs.phi.empty()) throw ConfigError("vertex set has no vertex matrices");
  std::vector<RiccatiSolution<N>> sols;
  vs.gains.clear();
  for (const auto& phi : vs.phi) {
    sols.push_back(solve_dare<N>(phi, gamma, w, opt));
    vs.gains.push_back(sols.back().K);
  }
  return sols;
}

template <int N>
std::vector<RiccatiSolution<N>> synthesize_vertex_gains(VertexSet<N>& vs,
                                                        const LqrWeights<N>& w,
                                                        const DareOptions& opt = {}) {
  return synthesize_vertex_gains<N>(vs, vs.gamma, w, opt);
}

template <int N>
std::vector<Mat<N, N>> closed_loops(const VertexSet<N>& vs) {
  if (vs.gains.size() != vs.phi.size()) throw ConfigError("vertex gains not synthesized");
  std::vector<Mat<N, N>> out;
  for (std::size_t i = 0; i < vs.size(); ++i) out.push_back(vs.phi[i] - vs.gamma * vs.gains[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Scheduling
// ---------------------------------------------------------------------------

struct ScheduleWeights {
  Eigen::VectorXd xi;
  bool clamped = false;  // rho fell outside the polytope and was clamped
};

/// Solves Vξ = [ρ; 1] for a 2 × 2 vertex matrix V whose first row holds the
/// scheduling values and second row ones, so ξ_i weights column i. ρ is
/// clamped to the vertex range.
inline ScheduleWeights barycentric_weights(const Eigen::MatrixXd& V, double rho) {
  if (V.rows() != 2 || V.cols() != 2) {
    throw ConfigError("barycentric weights need a 2x2 vertex matrix for scalar scheduling");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
  if (!lu.isInvertible() || V(0, 0) == V(0, 1)) {
    throw ConfigError("vertex matrix is singular");
  }
  ScheduleWeights w;
  const double lo = V.row(0).minCoeff();
  const double hi = V.row(0).maxCoeff();
  double r = rho;
  if (r < lo || r > hi) {
    r = std::clamp(r, lo, hi);
    w.clamped = true;
  }
  w.xi = lu.solve(Eigen::Vector2d(r, 1.0));
  return w;
}

/// Vertex matrix with columns in vertex order, so ξ_i weights vertex i.
template <int N>
Eigen::MatrixXd vertex_matrix(const VertexSet<N>& vs) {
  Eigen::MatrixXd v(2, Eigen::Index(vs.size()));
  for (std::size_t i = 0; i < vs.size(); ++i) {
    v(0, Eigen::Index(i)) = vs.rho[i];
    v(1, Eigen::Index(i)) = 1.0;
  }
  return v;
}

template <int N>
ScheduleWeights barycentric_weights(const VertexSet<N>& vs, double rho) {
  return barycentric_weights(vertex_matrix(vs), rho);
}

/// K(μ) = Σ μ_i K^[i].
template <int N>
RowVec<N> maps_gain(const Eigen::VectorXd& mu, const VertexSet<N>& vs) {
  if (vs.gains.size() != std::size_t(mu.size())) {
    throw ConfigError("mode probability length does not match vertex gain count");
  }
  RowVec<N> k = RowVec<N>::Zero();
  for (std::size_t i = 0; i < vs.gains.size(); ++i) k += mu[Eigen::Index(i)] * vs.gains[i];
  return k;
}

/// ρ̂ = Σ μ_i ρ^[i].
inline double scheduled_rho(const Eigen::VectorXd& mu, const std::vector<double>& rho) {
  if (rho.size() != std::size_t(mu.size())) throw ConfigError("rho length mismatch");
  double r = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) r += mu[Eigen::Index(i)] * rho[i];
  return r;
}

struct ControlCommand {
  double u = 0.0;
  bool saturated = false;
};

/// u = K·(x_ref − x̂), clamped to ±v_limit.
template <int N>
ControlCommand control_input(const RowVec<N>& K, const Vec<N>& x_ref, const Vec<N>& x_hat,
                             double v_limit) {
  ControlCommand c;
  const double raw = K.dot(x_ref - x_hat);
  c.u = std::clamp(raw, -v_limit, v_limit);
  c.saturated = c.u != raw;
  return c;
}

}  // namespace maps

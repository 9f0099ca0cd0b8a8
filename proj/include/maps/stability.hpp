#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "maps/control.hpp"
#include "maps/core.hpp"
#include "maps/motor_model.hpp"

namespace maps {

/// Solves AᵀPA − P = −Q by summing P = Σ (Aᵀ)ᵏ Q Aᵏ with repeated squaring.
template <int N>
Mat<N, N> solve_discrete_lyapunov(const Mat<N, N>& a, const Mat<N, N>& q) {
  if (!(linalg::spectral_radius(a) < 1.0)) {
    throw NumericalError("discrete Lyapunov equation needs a Schur-stable matrix");
  }
  Mat<N, N> p = q;
  Mat<N, N> ak = a;
  for (int i = 0; i < 200; ++i) {
    const Mat<N, N> inc = ak.transpose() * p * ak;
    p += inc;
    ak = (ak * ak).eval();
    if (linalg::max_abs(inc) <= 1e-16 * linalg::max_abs(p)) break;
  }
  return linalg::symmetrize(p);
}

/// −λ_max(AᵀPA − P); positive when V(x) = xᵀPx strictly decreases along A.
template <int N>
double lyapunov_margin(const Mat<N, N>& a, const Mat<N, N>& p) {
  return -linalg::max_eigenvalue_symmetric(Mat<N, N>(a.transpose() * p * a - p));
}

template <int N>
Mat<N, N> convex_combination(const std::vector<Mat<N, N>>& loops, const Eigen::VectorXd& mu) {
  Mat<N, N> a = Mat<N, N>::Zero();
  for (std::size_t i = 0; i < loops.size(); ++i) a += mu[Eigen::Index(i)] * loops[i];
  return a;
}

struct ConvexCheck {
  double min_margin = std::numeric_limits<double>::infinity();
  double max_spectral_radius = 0.0;
  std::size_t samples = 0;
};

/// Draws uniform points on the probability simplex (flat Dirichlet).
inline Eigen::VectorXd sample_simplex(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = -std::log(1.0 - unif(rng));
  return w / w.sum();
}

/// Evaluates the Lyapunov margin of P at random convex combinations of the
/// closed loops. Deterministic for a given seed.
template <int N>
ConvexCheck verify_convex_stability(const Mat<N, N>& p, const std::vector<Mat<N, N>>& loops,
                                    std::size_t n_samples, std::uint64_t seed = 42) {
  if (linalg::min_eigenvalue_symmetric(p) <= 0.0) {
    throw NumericalError("Lyapunov matrix must be positive definite");
  }
  std::mt19937_64 rng(seed);
  ConvexCheck c;
  c.samples = n_samples;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Mat<N, N> a = convex_combination(loops, sample_simplex(loops.size(), rng));
    c.min_margin = std::min(c.min_margin, lyapunov_margin<N>(a, p));
    c.max_spectral_radius = std::max(c.max_spectral_radius, linalg::spectral_radius(a));
  }
  return c;
}

template <int N>
struct CommonLyapunovResult {
  bool certified = false;
  Mat<N, N> P = Mat<N, N>::Zero();
  std::vector<double> vertex_margins;
  double alpha = 0.0;  // min vertex margin
  int rounds = 0;
  ConvexCheck sampled;
};

struct LyapunovSearchOptions {
  int max_rounds = 500;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 42;
};

/// Heuristic search for a common quadratic Lyapunov function: start from the
/// first vertex's Lyapunov solution and average in the solutions of violated
/// vertices. Failure means "not certified", not "unstable".
template <int N>
CommonLyapunovResult<N> find_common_lyapunov(const std::vector<Mat<N, N>>& loops,
                                             const LyapunovSearchOptions& opt = {}) {
  if (loops.empty()) throw ConfigError("no closed loops supplied");
  const Mat<N, N> eye = Mat<N, N>::Identity();
  std::vector<Mat<N, N>> own;
  for (const auto& a : loops) own.push_back(solve_discrete_lyapunov<N>(a, eye));

  CommonLyapunovResult<N> r;
  Mat<N, N> p = own.front();
  auto margins_of = [&](const Mat<N, N>& pp) {
    std::vector<double> m;
    for (const auto& a : loops) m.push_back(lyapunov_margin<N>(a, pp));
    return m;
  };

  for (r.rounds = 0; r.rounds < opt.max_rounds; ++r.rounds) {
    r.vertex_margins = margins_of(p);
    bool all_ok = true;
    for (std::size_t i = 0; i < loops.size(); ++i) {
      if (!(r.vertex_margins[i] > 0.0)) {
        all_ok = false;
        p = linalg::symmetrize(0.5 * (p + own[i]));
      }
    }
    if (all_ok) break;
  }
  r.P = p;
  r.vertex_margins = margins_of(p);
  r.alpha = *std::min_element(r.vertex_margins.begin(), r.vertex_margins.end());
  if (r.alpha > 0.0) {
    r.sampled = verify_convex_stability<N>(p, loops, opt.n_samples, opt.seed);
    r.certified = r.sampled.min_margin > 0.0 && r.sampled.max_spectral_radius < 1.0;
  }
  return r;
}

struct LipschitzConstants {
  double L_phi = 0.0;
  double L_k = 0.0;
  double L = 0.0;
};

/// Slopes of Φ(ρ) and K(ρ) between vertices (max pairwise slope for Nv > 2);
/// L = L_Φ + ‖Γ‖·L_K.
template <int N>
LipschitzConstants lipschitz_constants(const VertexSet<N>& vs, const Vec<N>& gamma) {
  if (vs.size() < 2) throw ConfigError("Lipschitz constants need at least 2 vertices");
  if (vs.gains.size() != vs.size()) throw ConfigError("vertex gains not synthesized");
  LipschitzConstants c;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      const double dr = std::abs(vs.rho[j] - vs.rho[i]);
      if (dr == 0.0) throw ConfigError("coincident vertices");
      c.L_phi = std::max(c.L_phi, linalg::spectral_norm(vs.phi[j] - vs.phi[i]) / dr);
      c.L_k = std::max(c.L_k, linalg::spectral_norm(vs.gains[j] - vs.gains[i]) / dr);
    }
  }
  c.L = c.L_phi + linalg::spectral_norm(gamma) * c.L_k;
  return c;
}

struct MismatchAssumptions {
  double epsilon = 0.0;  // bound on |ρ̂ − ρ|
  double delta = 0.0;    // bound on |ρ_{k+1} − ρ_k|; reported, not used in any bound

  void validate() const {
    if (!(epsilon >= 0.0) || !(delta >= 0.0)) {
      throw ConfigError("mismatch bounds must be non-negative");
    }
  }
};

struct ExponentialBound {
  double eps_star = 0.0;
  double C = 0.0;
  double alpha_tilde = 0.0;  // α − λ_max(P)L²ε²
  double lambda = 0.0;       // sqrt(1 − α̃/λ_max(P))
  double lambda_literal = 0.0;  // sqrt(1 − α̃), clamped at 0
};

/// ε* = sqrt(α / (2 λ_max(P) L²)), C = sqrt(λ_max/λ_min) and the decay rate
/// at the supplied ε.
template <int N>
ExponentialBound epsilon_star(const Mat<N, N>& p, double alpha, double L, double epsilon = 0.0) {
  const double lmin = linalg::min_eigenvalue_symmetric(p);
  const double lmax = linalg::max_eigenvalue_symmetric(p);
  if (!(lmin > 0.0)) throw NumericalError("Lyapunov matrix must be positive definite");
  if (!(alpha > 0.0)) throw ParameterError("decay margin alpha must be positive");
  if (!(L >= 0.0)) throw ParameterError("Lipschitz constant must be non-negative");
  ExponentialBound b;
  b.eps_star = L == 0.0 ? std::numeric_limits<double>::infinity()
                        : std::sqrt(alpha / (2.0 * lmax * L * L));
  b.C = std::sqrt(lmax / lmin);
  b.alpha_tilde = alpha - lmax * L * L * epsilon * epsilon;
  b.lambda = std::sqrt(std::max(0.0, 1.0 - b.alpha_tilde / lmax));
  b.lambda_literal = std::sqrt(std::max(0.0, 1.0 - b.alpha_tilde));
  return b;
}

template <int N>
struct StabilityCert {
  bool certified = false;
  Mat<N, N> P_lyap = Mat<N, N>::Zero();
  double alpha = 0.0;
  std::vector<double> vertex_margins;
  double sampled_margins_min = 0.0;
  double sampled_spectral_radius_max = 0.0;
  LipschitzConstants lipschitz;
  ExponentialBound bound;
  MismatchAssumptions assumptions;
  int rounds = 0;
};

/// Full certification of a vertex set with synthesized gains.
template <int N>
StabilityCert<N> certify(const VertexSet<N>& vs, const MismatchAssumptions& assumptions = {},
                         const LyapunovSearchOptions& opt = {}) {
  assumptions.validate();
  const auto loops = closed_loops(vs);
  const auto lyap = find_common_lyapunov<N>(loops, opt);
  StabilityCert<N> c;
  c.certified = lyap.certified;
  c.P_lyap = lyap.P;
  c.alpha = lyap.alpha;
  c.vertex_margins = lyap.vertex_margins;
  c.sampled_margins_min = lyap.sampled.min_margin;
  c.sampled_spectral_radius_max = lyap.sampled.max_spectral_radius;
  c.rounds = lyap.rounds;
  c.assumptions = assumptions;
  c.lipschitz = lipschitz_constants<N>(vs, vs.gamma);
  if (c.alpha > 0.0) c.bound = epsilon_star<N>(lyap.P, c.alpha, c.lipschitz.L, assumptions.epsilon);
  return c;
}

}  // namespace maps

#pragma once

#include <cstddef>
#include <numbers>
#include <type_traits>
#include <vector>

#include <Eigen/Cholesky>

#include "maps/core.hpp"
#include "maps/motor_model.hpp"

namespace maps {

template <int N>
struct GaussianBelief {
  Vec<N> mean = Vec<N>::Zero();
  Mat<N, N> cov = Mat<N, N>::Zero();
};

template <int N, int D = 1>
struct NoiseConfig {
  Mat<N, N> Q = Mat<N, N>::Zero();
  Mat<D, D> R = Mat<D, D>::Identity();
};

/// Filter-design defaults for the motor.
inline NoiseConfig<3, 1> default_motor_noise() {
  NoiseConfig<3, 1> n;
  n.Q = Matrix3::Identity() * 1e-6;
  n.R(0, 0) = 1e-5;
  return n;
}

inline GaussianBelief<3> default_motor_prior() {
  GaussianBelief<3> b;
  b.cov = Vector3(1e-3, 1e-1, 1e-2).asDiagonal();
  return b;
}

template <int N, int D>
struct KfUpdateResult {
  GaussianBelief<N> belief;
  Vec<D> residual;
  Mat<D, D> innovation_cov;
};

enum class CovarianceForm { kShort, kJoseph };

template <int N, int D>
GaussianBelief<N> kf_predict(const GaussianBelief<N>& belief,
                             const DiscreteModel<N, D>& model, double u,
                             const std::type_identity_t<Mat<N, N>>& Q) {
  GaussianBelief<N> out;
  out.mean = model.Phi * belief.mean + model.Gamma * u;
  out.cov = linalg::symmetrize(model.Phi * belief.cov * model.Phi.transpose() + Q);
  return out;
}

template <int N, int D>
KfUpdateResult<N, D> kf_update(const GaussianBelief<N>& prior,
                               const DiscreteModel<N, D>& model,
                               const std::type_identity_t<Vec<D>>& z,
                               const std::type_identity_t<Mat<D, D>>& R,
                               CovarianceForm form = CovarianceForm::kShort) {
  const auto& H = model.H;
  KfUpdateResult<N, D> out;
  out.residual = z - H * prior.mean;
  out.innovation_cov = linalg::symmetrize(H * prior.cov * H.transpose() + R);

  Eigen::LLT<Mat<D, D>> llt(out.innovation_cov);
  if (llt.info() != Eigen::Success || !out.innovation_cov.allFinite()) {
    throw NumericalError("innovation covariance is not positive definite");
  }
  // K = P̄Hᵀ S⁻¹, computed as (S⁻¹ H P̄)ᵀ.
  const Mat<N, D> gain = llt.solve(H * prior.cov).transpose();

  out.belief.mean = prior.mean + gain * out.residual;
  const Mat<N, N> ikh = Mat<N, N>::Identity() - gain * H;
  if (form == CovarianceForm::kJoseph) {
    out.belief.cov = ikh * prior.cov * ikh.transpose() + gain * R * gain.transpose();
  } else {
    out.belief.cov = ikh * prior.cov;
  }
  out.belief.cov = linalg::symmetrize(out.belief.cov);
  return out;
}

template <int N, int D>
KfUpdateResult<N, D> kf_update(const GaussianBelief<N>& prior,
                               const DiscreteModel<N, D>& model, double z,
                               const std::type_identity_t<Mat<D, D>>& R,
                               CovarianceForm form = CovarianceForm::kShort)
  requires(D == 1)
{
  Vec<1> zv;
  zv << z;
  return kf_update(prior, model, zv, R, form);
}

// ---------------------------------------------------------------------------
// Interacting multiple model filter
// ---------------------------------------------------------------------------

/// Probabilities and likelihoods never drop below this value.
inline constexpr double kProbabilityFloor = 1e-300;

template <int N, int D = 1>
struct ImmState {
  std::vector<GaussianBelief<N>> modes;
  Eigen::VectorXd mu;
  Eigen::MatrixXd Pi;  // Pi(i, j): probability of moving from mode i to j
  std::vector<DiscreteModel<N, D>> models;
  std::vector<double> rho;  // scheduling value represented by each mode

  std::size_t size() const { return modes.size(); }

  void validate() const {
    const auto n = Eigen::Index(modes.size());
    if (n < 1) throw ConfigError("IMM needs at least one mode");
    if (mu.size() != n || Pi.rows() != n || Pi.cols() != n ||
        Eigen::Index(models.size()) != n) {
      throw ConfigError("IMM state dimensions disagree");
    }
    if (!rho.empty() && Eigen::Index(rho.size()) != n) {
      throw ConfigError("IMM rho count mismatch");
    }
    if ((mu.array() < 0.0).any() || std::abs(mu.sum() - 1.0) > 1e-12) {
      throw ConfigError("mode probabilities must lie on the simplex");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((Pi.row(i).array() < 0.0).any() || std::abs(Pi.row(i).sum() - 1.0) > 1e-12) {
        throw ConfigError("transition matrix rows must be probability vectors");
      }
    }
  }
};

template <int N>
struct ImmOutput {
  GaussianBelief<N> fused;
  Eigen::VectorXd mu;
  Eigen::VectorXd likelihoods;
  double rho_hat = 0.0;
};

template <int N>
struct MixResult {
  std::vector<GaussianBelief<N>> mixed;
  Eigen::VectorXd mu_pred;
};

/// Transition matrix with `stay` on the diagonal, the remainder spread evenly
/// over the other modes.
inline Eigen::MatrixXd uniform_transition_matrix(std::size_t n, double stay) {
  if (n == 1) return Eigen::MatrixXd::Ones(1, 1);
  if (!(stay >= 0.0 && stay <= 1.0)) throw ConfigError("stay probability outside [0,1]");
  const double off = (1.0 - stay) / double(n - 1);
  Eigen::MatrixXd pi = Eigen::MatrixXd::Constant(Eigen::Index(n), Eigen::Index(n), off);
  pi.diagonal().setConstant(stay);
  return pi;
}

template <int N, int D>
MixResult<N> imm_mix(const ImmState<N, D>& s) {
  const auto n = Eigen::Index(s.size());
  MixResult<N> out;
  out.mu_pred = s.Pi.transpose() * s.mu;
  out.mixed.resize(s.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd w(n);
    if (out.mu_pred[j] < kProbabilityFloor) {
      // No mass flows into this mode; seed it from the current mixture.
      out.mu_pred[j] = kProbabilityFloor;
      w = s.mu;
    } else {
      for (Eigen::Index i = 0; i < n; ++i) w[i] = s.Pi(i, j) * s.mu[i] / out.mu_pred[j];
    }
    auto& m = out.mixed[std::size_t(j)];
    m.mean.setZero();
    for (Eigen::Index i = 0; i < n; ++i) m.mean += w[i] * s.modes[std::size_t(i)].mean;
    m.cov.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec<N> dx = s.modes[std::size_t(i)].mean - m.mean;
      m.cov += w[i] * (s.modes[std::size_t(i)].cov + dx * dx.transpose());
    }
    m.cov = linalg::symmetrize(m.cov);
  }
  return out;
}

/// Log of the Gaussian innovation density.
template <int D>
double imm_log_likelihood(const Vec<D>& r, const Mat<D, D>& S) {
  Eigen::LLT<Mat<D, D>> llt(S);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("innovation covariance is not positive definite");
  }
  const auto& L = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < S.rows(); ++i) log_det += 2.0 * std::log(L(i, i));
  const double mahalanobis = r.dot(llt.solve(r));
  const double d = double(S.rows());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det + mahalanobis);
}

template <int D>
double imm_likelihood(const Vec<D>& r, const Mat<D, D>& S) {
  return std::max(std::exp(imm_log_likelihood(r, S)), kProbabilityFloor);
}

inline double imm_likelihood(double r, double S) {
  Vec<1> rv;
  rv << r;
  Mat<1, 1> Sm;
  Sm << S;
  if (!(S > 0.0)) throw NumericalError("innovation variance must be positive");
  return imm_likelihood<1>(rv, Sm);
}

/// Bayes update of the mode probabilities. Falls back to the prediction when
/// the evidence carries no usable mass.
inline Eigen::VectorXd imm_update_probabilities(const Eigen::VectorXd& likelihoods,
                                                const Eigen::VectorXd& mu_pred) {
  if (likelihoods.size() != mu_pred.size()) {
    throw ConfigError("likelihood and probability vectors differ in length");
  }
  const Eigen::VectorXd joint = likelihoods.cwiseProduct(mu_pred);
  const double denom = joint.sum();
  if (!(denom >= std::numeric_limits<double>::min()) || !std::isfinite(denom)) {
    return mu_pred / mu_pred.sum();
  }
  return joint / denom;
}

template <int N>
GaussianBelief<N> imm_combine(const std::vector<GaussianBelief<N>>& modes,
                              const Eigen::VectorXd& mu) {
  if (Eigen::Index(modes.size()) != mu.size()) {
    throw ConfigError("mode count and probability length differ");
  }
  GaussianBelief<N> out;
  for (std::size_t j = 0; j < modes.size(); ++j) out.mean += mu[Eigen::Index(j)] * modes[j].mean;
  for (std::size_t j = 0; j < modes.size(); ++j) {
    const Vec<N> dx = modes[j].mean - out.mean;
    out.cov += mu[Eigen::Index(j)] * (modes[j].cov + dx * dx.transpose());
  }
  out.cov = linalg::symmetrize(out.cov);
  return out;
}

template <int N, int D>
struct ImmStepResult {
  ImmState<N, D> state;
  ImmOutput<N> output;
};

/// One full IMM cycle: mix, mode-matched predict/update, likelihoods,
/// probability update, combination.
template <int N, int D>
ImmStepResult<N, D> imm_step(const ImmState<N, D>& s, double u, const Vec<D>& z,
                             const NoiseConfig<N, D>& noise,
                             CovarianceForm form = CovarianceForm::kShort) {
  const auto n = s.size();
  const MixResult<N> mix = imm_mix(s);

  ImmStepResult<N, D> out;
  out.state = s;
  Eigen::VectorXd lik(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto pred = kf_predict(mix.mixed[j], s.models[j], u, noise.Q);
    const auto upd = kf_update(pred, s.models[j], z, noise.R, form);
    out.state.modes[j] = upd.belief;
    lik[Eigen::Index(j)] = imm_likelihood<D>(upd.residual, upd.innovation_cov);
  }
  out.state.mu = imm_update_probabilities(lik, mix.mu_pred);

  out.output.fused = imm_combine(out.state.modes, out.state.mu);
  out.output.mu = out.state.mu;
  out.output.likelihoods = lik;
  if (!s.rho.empty()) {
    for (std::size_t j = 0; j < n; ++j) {
      out.output.rho_hat += out.state.mu[Eigen::Index(j)] * s.rho[j];
    }
  }
  return out;
}

template <int N, int D>
ImmStepResult<N, D> imm_step(const ImmState<N, D>& s, double u, double z,
                             const NoiseConfig<N, D>& noise,
                             CovarianceForm form = CovarianceForm::kShort)
  requires(D == 1)
{
  Vec<1> zv;
  zv << z;
  return imm_step(s, u, zv, noise, form);
}

/// IMM bank over the vertex models, uniform μ₀, common prior.
inline ImmState<3, 1> make_motor_imm(const MotorVertexSet& vs, double stay_probability,
                                     const GaussianBelief<3>& prior = default_motor_prior()) {
  ImmState<3, 1> s;
  const auto n = vs.size();
  for (std::size_t i = 0; i < n; ++i) {
    s.modes.push_back(prior);
    s.models.push_back(vs.model(i));
  }
  s.mu = Eigen::VectorXd::Constant(Eigen::Index(n), 1.0 / double(n));
  s.Pi = uniform_transition_matrix(n, stay_probability);
  s.rho = vs.rho;
  return s;
}

}  // namespace maps

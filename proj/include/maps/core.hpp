#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

namespace maps {

template <int Rows, int Cols>
using Mat = Eigen::Matrix<double, Rows, Cols>;
template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int N>
using RowVec = Eigen::Matrix<double, 1, N>;

using Matrix3 = Mat<3, 3>;
using Vector3 = Vec<3>;
using RowVector3 = RowVec<3>;

// Error hierarchy. The CLI maps these onto process exit codes.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid physical parameters or model inputs.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration (files, vertex sets, scenarios).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical operation produced an unusable result (non-PD innovation
/// covariance, non-finite state, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Riccati iteration did not converge.
class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// The closed loop produced by a Riccati solution is not Schur stable.
class StabilizabilityError : public NumericalError {
 public:
  StabilizabilityError(const std::string& what, double spectral_radius)
      : NumericalError(what), spectral_radius_(spectral_radius) {}
  double spectral_radius() const { return spectral_radius_; }

 private:
  double spectral_radius_;
};

namespace linalg {

template <typename Derived>
auto symmetrize(const Eigen::MatrixBase<Derived>& m) {
  return (0.5 * (m + m.transpose())).eval();
}

/// Largest |eigenvalue| of a square matrix.
template <typename Derived>
double spectral_radius(const Eigen::MatrixBase<Derived>& m) {
  using Plain = typename Derived::PlainObject;
  Eigen::EigenSolver<Plain> es(m.eval(), /*computeEigenvectors=*/false);
  double r = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    r = std::max(r, std::abs(es.eigenvalues()[i]));
  }
  return r;
}

template <typename Derived>
double max_eigenvalue_symmetric(const Eigen::MatrixBase<Derived>& m) {
  using Plain = typename Derived::PlainObject;
  Eigen::SelfAdjointEigenSolver<Plain> es(symmetrize(m),
                                          Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

template <typename Derived>
double min_eigenvalue_symmetric(const Eigen::MatrixBase<Derived>& m) {
  using Plain = typename Derived::PlainObject;
  Eigen::SelfAdjointEigenSolver<Plain> es(symmetrize(m),
                                          Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Largest singular value by power iteration on MᵀM.
template <typename Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& m,
                     double tolerance = 1e-12, int max_iterations = 10000) {
  const Eigen::MatrixXd a = m.template cast<double>();
  if (a.size() == 0 || a.isZero(0.0)) return 0.0;
  const Eigen::MatrixXd gram = a.transpose() * a;
  // Start away from any particular eigenvector: all-ones plus a ramp.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(gram.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 0.1 * double(i);
  v.normalize();
  double sigma_sq = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd w = gram * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(gram * w);
    const bool converged =
        std::abs(next - sigma_sq) <= tolerance * std::max(1.0, next);
    sigma_sq = next;
    v = w;
    if (converged) break;
  }
  return std::sqrt(std::max(sigma_sq, 0.0));
}

/// Entrywise max-abs norm.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().maxCoeff();
}

/// Induced infinity norm (largest absolute row sum).
template <typename Derived>
double inf_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace linalg
}  // namespace maps

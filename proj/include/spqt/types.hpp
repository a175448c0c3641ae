#pragma once

#include <Eigen/Dense>
#include <complex>

namespace spqt {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr Complex imag_unit{0.0, 1.0};

inline Matrix dagger(const Matrix& m) { return m.adjoint(); }

/// Frobenius norm of the anti-Hermitian residual m - m^dag.
inline double hermiticity_residual(const Matrix& m) {
  return (m - m.adjoint()).norm();
}

/// Replaces m by its Hermitian part (m + m^dag)/2.
inline void hermitize(Matrix& m) {
  m = (0.5 * (m + m.adjoint())).eval();
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace spqt

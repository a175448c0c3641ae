#include "spqt/oracles.hpp"

#include <cmath>

#include "spqt/quadrature.hpp"

namespace spqt {

namespace {

void check_spec(const TwoLevelAtomSpec& spec) {
  if (!(spec.gamma > 0.0)) throw std::invalid_argument("TwoLevelAtomSpec: gamma must be > 0");
  if (!spec.profile.amplitude) throw std::invalid_argument("TwoLevelAtomSpec: missing profile");
}

/// int_0^t xi_s e^{gamma s / 2} ds.
Complex driven_integral(const TwoLevelAtomSpec& spec, double t) {
  if (spec.profile.name == "matched_exponential" && spec.profile.params.size() == 1) {
    const double gp = spec.profile.params[0];
    const double half_diff = 0.5 * (spec.gamma - gp);
    if (std::abs(half_diff) < 1e-14) {
      return Complex{std::sqrt(gp) * t, 0.0};
    }
    return Complex{std::sqrt(gp) * (std::exp(half_diff * t) - 1.0) / half_diff, 0.0};
  }
  const double g = spec.gamma;
  return adaptive_simpson_complex(
      [&](double s) { return spec.profile.amplitude(s) * std::exp(0.5 * g * s); }, 0.0, t, 1e-12);
}

}  // namespace

SystemModel tla_model(const TwoLevelAtomSpec& spec) {
  check_spec(spec);
  Matrix h = Matrix::Zero(2, 2);
  Matrix l = Matrix::Zero(2, 2);
  l(0, 1) = std::sqrt(spec.gamma);  // sqrt(gamma) sigma-
  Vector psi = Vector::Zero(2);
  psi(0) = 1.0;
  return SystemModel::pure(h, l, psi);
}

double tla_excitation_probability(const TwoLevelAtomSpec& spec, double t) {
  check_spec(spec);
  if (t < 0.0) throw std::invalid_argument("tla_excitation_probability: t must be >= 0");
  if (t == 0.0) return 0.0;
  const Complex inner = driven_integral(spec, t);
  return spec.gamma * std::exp(-spec.gamma * t) * std::norm(inner);
}

double tla_no_count_probability(const TwoLevelAtomSpec& spec, double t) {
  check_spec(spec);
  if (t < 0.0) throw std::invalid_argument("tla_no_count_probability: t must be >= 0");
  return spec.profile.tail(t) + tla_excitation_probability(spec, t);
}

Matrix tla_apriori_state(const TwoLevelAtomSpec& spec, double t) {
  const double p = tla_excitation_probability(spec, t);
  Matrix rho = Matrix::Zero(2, 2);
  rho(0, 0) = 1.0 - p;
  rho(1, 1) = p;
  return rho;
}

}  // namespace spqt

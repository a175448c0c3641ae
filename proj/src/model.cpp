#include "spqt/model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <utility>

#include "spqt/errors.hpp"
#include "spqt/quadrature.hpp"

namespace spqt {

namespace {

void check_operator_pair(const Matrix& h, const Matrix& l) {
  if (h.rows() == 0 || h.rows() != h.cols()) {
    throw std::invalid_argument("SystemModel: hamiltonian must be square and non-empty");
  }
  if (l.rows() != h.rows() || l.cols() != h.cols()) {
    throw std::invalid_argument("SystemModel: coupling must match the hamiltonian dimension");
  }
  const double herm = hermiticity_residual(h);
  if (herm > 1e-12 * (1.0 + h.norm())) {
    std::ostringstream msg;
    msg << "SystemModel: hamiltonian is not Hermitian (residual " << herm << ")";
    throw ValidationError(msg.str());
  }
}

}  // namespace

SystemModel SystemModel::pure(Matrix hamiltonian, Matrix coupling, Vector psi) {
  check_operator_pair(hamiltonian, coupling);
  if (psi.size() != hamiltonian.rows()) {
    throw std::invalid_argument("SystemModel: initial vector has wrong dimension");
  }
  if (std::abs(psi.norm() - 1.0) > 1e-10) {
    std::ostringstream msg;
    msg << "SystemModel: initial vector norm " << psi.norm() << " is not 1";
    throw ValidationError(msg.str());
  }
  SystemModel m;
  m.h_ = std::move(hamiltonian);
  m.l_ = std::move(coupling);
  m.rho0_ = psi * psi.adjoint();
  m.psi_ = std::move(psi);
  return m;
}

SystemModel SystemModel::mixed(Matrix hamiltonian, Matrix coupling, Matrix rho0) {
  check_operator_pair(hamiltonian, coupling);
  if (rho0.rows() != hamiltonian.rows() || rho0.cols() != hamiltonian.cols()) {
    throw std::invalid_argument("SystemModel: initial density has wrong dimension");
  }
  if (hermiticity_residual(rho0) > 1e-10 * (1.0 + rho0.norm())) {
    throw ValidationError("SystemModel: initial density is not Hermitian");
  }
  if (std::abs(rho0.trace().real() - 1.0) > 1e-10 || std::abs(rho0.trace().imag()) > 1e-10) {
    throw ValidationError("SystemModel: initial density trace is not 1");
  }
  if (min_eigenvalue(rho0) < -1e-12) {
    throw ValidationError("SystemModel: initial density is not positive semidefinite");
  }
  SystemModel m;
  m.h_ = std::move(hamiltonian);
  m.l_ = std::move(coupling);
  m.rho0_ = std::move(rho0);
  return m;
}

const Vector& SystemModel::psi() const {
  if (!psi_) throw std::invalid_argument("SystemModel: mixed-state model has no pure vector");
  return *psi_;
}

PhotonProfile matched_exponential_profile(double gamma_p) {
  if (!(gamma_p > 0.0)) throw std::invalid_argument("matched_exponential_profile: gamma_p must be > 0");
  PhotonProfile p;
  const double g = gamma_p;
  p.amplitude = [g](double t) -> Complex {
    return t < 0.0 ? Complex{0.0, 0.0} : Complex{std::sqrt(g) * std::exp(-0.5 * g * t), 0.0};
  };
  p.tail = [g](double t) { return t < 0.0 ? 1.0 : std::exp(-g * t); };
  p.support_hint = 40.0 / g;
  p.name = "matched_exponential";
  p.params = {g};
  return p;
}

PhotonProfile constant_window_profile(double t0, double t1) {
  if (!(t1 > t0) || t0 < 0.0) throw std::invalid_argument("constant_window_profile: need 0 <= t0 < t1");
  PhotonProfile p;
  const double amp = 1.0 / std::sqrt(t1 - t0);
  p.amplitude = [t0, t1, amp](double t) -> Complex {
    return (t >= t0 && t < t1) ? Complex{amp, 0.0} : Complex{0.0, 0.0};
  };
  p.tail = [t0, t1](double t) {
    if (t <= t0) return 1.0;
    if (t >= t1) return 0.0;
    return (t1 - t) / (t1 - t0);
  };
  p.support_hint = t1;
  p.name = "constant_window";
  p.params = {t0, t1};
  return p;
}

PhotonProfile gaussian_profile(double t0, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_profile: sigma must be > 0");
  PhotonProfile p;
  const double norm = std::pow(M_PI * sigma * sigma, -0.25);
  p.amplitude = [t0, sigma, norm](double t) -> Complex {
    const double x = (t - t0) / sigma;
    return Complex{norm * std::exp(-0.5 * x * x), 0.0};
  };
  p.tail = [t0, sigma](double t) {
    return 0.5 * std::erfc((t - t0) / sigma);
  };
  p.support_hint = t0 + 8.0 * sigma;
  p.name = "gaussian";
  p.params = {t0, sigma};
  return p;
}

PhotonProfile vacuum_profile() {
  // A photon that never arrives: xi == 0 within any finite window, all of
  // the packet mass in the infinite future. This embeds the standard vacuum
  // filter in the conditional-pair machinery with w_j == 1.
  PhotonProfile p;
  p.amplitude = [](double) { return Complex{0.0, 0.0}; };
  p.tail = [](double) { return 1.0; };
  p.support_hint = std::numeric_limits<double>::infinity();
  p.name = "vacuum";
  return p;
}

PhotonProfile numeric_profile(std::function<Complex(double)> amplitude, double support,
                              std::string name) {
  if (!(support > 0.0)) throw std::invalid_argument("numeric_profile: support must be > 0");
  PhotonProfile p;
  p.amplitude = amplitude;
  p.tail = [amplitude, support](double t) {
    if (t >= support) return 0.0;
    if (t < 0.0) t = 0.0;
    return adaptive_simpson([&](double s) { return std::norm(amplitude(s)); }, t, support, 1e-12);
  };
  p.support_hint = support;
  p.name = std::move(name);
  return p;
}

void validate_profile(const PhotonProfile& profile, double eps) {
  const double w0 = profile.tail(0.0);
  if (std::abs(w0 - 1.0) > eps) {
    std::ostringstream msg;
    msg << "PhotonProfile: tail(0) = " << w0 << " is not 1 within " << eps;
    throw ValidationError(msg.str());
  }
  const double horizon =
      (profile.support_hint > 0.0 && std::isfinite(profile.support_hint)) ? profile.support_hint
                                                                          : 1.0;
  double prev = w0;
  for (int i = 1; i <= 64; ++i) {
    const double t = horizon * i / 64.0;
    const double w = profile.tail(t);
    if (w < -1e-12) throw ValidationError("PhotonProfile: tail went negative");
    if (w > prev + 1e-9) throw ValidationError("PhotonProfile: tail is not non-increasing");
    prev = w;
  }
}

DiscretizedProfile discretize_profile(const PhotonProfile& profile, double tau, double horizon,
                                      const DiscretizeOptions& opts) {
  if (!(tau > 0.0)) throw std::invalid_argument("discretize_profile: tau must be > 0");
  if (!(horizon >= tau)) throw std::invalid_argument("discretize_profile: horizon must be >= tau");
  const long k_max = static_cast<long>(std::ceil(horizon / tau - 1e-12));
  DiscretizedProfile d;
  d.tau = tau;
  d.values.resize(static_cast<size_t>(k_max));
  for (long k = 0; k < k_max; ++k) {
    d.values[static_cast<size_t>(k)] = profile.amplitude(k * tau);
  }
  const double remainder = profile.tail(k_max * tau);

  // w_0 by compensated summation, then the exact forward recursion.
  double sum = 0.0, comp = 0.0;
  for (long k = 0; k < k_max; ++k) {
    const double term = tau * std::norm(d.values[static_cast<size_t>(k)]);
    const double y = term - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  const double w0 = sum + remainder;
  if (!opts.allow_unnormalized && std::abs(w0 - 1.0) > opts.epsilon) {
    std::ostringstream msg;
    msg << "discretize_profile: w_0 = " << w0 << " outside [1 - " << opts.epsilon << ", 1 + "
        << opts.epsilon << "]; refine tau/horizon or allow unnormalized input";
    throw ValidationError(msg.str());
  }
  d.tail_weights.resize(static_cast<size_t>(k_max) + 1);
  d.tail_weights[0] = w0;
  for (long j = 0; j < k_max; ++j) {
    d.tail_weights[static_cast<size_t>(j) + 1] =
        d.tail_weights[static_cast<size_t>(j)] - tau * std::norm(d.values[static_cast<size_t>(j)]);
  }
  return d;
}

DiscretizedProfile discretized_from_samples(std::vector<Complex> values, double tau,
                                            double remainder, bool normalize) {
  if (!(tau > 0.0)) throw std::invalid_argument("discretized_from_samples: tau must be > 0");
  if (values.empty()) throw std::invalid_argument("discretized_from_samples: no samples");
  if (remainder < 0.0) throw std::invalid_argument("discretized_from_samples: negative remainder");
  double sum = 0.0;
  for (const auto& v : values) sum += tau * std::norm(v);
  double w0 = sum + remainder;
  if (normalize) {
    if (!(w0 > 0.0)) throw ValidationError("discretized_from_samples: zero-mass profile");
    const double scale = 1.0 / std::sqrt(w0);
    for (auto& v : values) v *= scale;
    remainder /= w0;
    sum = 0.0;
    for (const auto& v : values) sum += tau * std::norm(v);
    w0 = sum + remainder;
  }
  DiscretizedProfile d;
  d.tau = tau;
  d.values = std::move(values);
  d.tail_weights.resize(d.values.size() + 1);
  d.tail_weights[0] = w0;
  for (size_t j = 0; j < d.values.size(); ++j) {
    d.tail_weights[j + 1] = d.tail_weights[j] - tau * std::norm(d.values[j]);
  }
  return d;
}

double block_unitarity_residual(const CollisionBlocks& blocks) {
  const long d = blocks.v00.rows();
  Matrix v(2 * d, 2 * d);
  v.topLeftCorner(d, d) = blocks.v00;
  v.topRightCorner(d, d) = blocks.v01;
  v.bottomLeftCorner(d, d) = blocks.v10;
  v.bottomRightCorner(d, d) = blocks.v11;
  return (v.adjoint() * v - Matrix::Identity(2 * d, 2 * d)).norm();
}

CollisionBlocks build_collision_exact(const SystemModel& model, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("build_collision_exact: tau must be > 0");
  const long d = model.dim();
  const Matrix& h = model.hamiltonian();
  const Matrix& l = model.coupling();
  const double rt = std::sqrt(tau);

  // -i tau H_k = [[-i tau H, -sqrt(tau) L^dag], [sqrt(tau) L, -i tau H]]
  Matrix a(2 * d, 2 * d);
  a.topLeftCorner(d, d) = -imag_unit * tau * h;
  a.topRightCorner(d, d) = -rt * l.adjoint();
  a.bottomLeftCorner(d, d) = rt * l;
  a.bottomRightCorner(d, d) = -imag_unit * tau * h;
  const Matrix e = a.exp();

  CollisionBlocks blocks;
  blocks.v00 = e.topLeftCorner(d, d);
  blocks.v01 = e.topRightCorner(d, d);
  blocks.v10 = e.bottomLeftCorner(d, d);
  blocks.v11 = e.bottomRightCorner(d, d);
  blocks.mode = BlockMode::exact;
  blocks.tau = tau;

  const double residual = block_unitarity_residual(blocks);
  if (!(residual < 1e-10)) {
    std::ostringstream msg;
    msg << "build_collision_exact: matrix exponential lost unitarity (residual " << residual << ")";
    throw NumericError(msg.str());
  }
  return blocks;
}

CollisionBlocks build_collision_first_order(const SystemModel& model, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("build_collision_first_order: tau must be > 0");
  const long d = model.dim();
  const Matrix& h = model.hamiltonian();
  const Matrix& l = model.coupling();

  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  const double spread = es.eigenvalues().maxCoeff() - es.eigenvalues().minCoeff();
  if (tau * spread > 0.1) {
    std::cerr << "warning: build_collision_first_order: tau * spectral spread = " << tau * spread
              << " is not small; expansion may be inaccurate\n";
  }

  CollisionBlocks blocks;
  blocks.v00 = Matrix::Identity(d, d) - imag_unit * tau * h - 0.5 * tau * (l.adjoint() * l);
  blocks.v10 = std::sqrt(tau) * l;
  blocks.v01 = -std::sqrt(tau) * l.adjoint();
  blocks.v11 = Matrix::Identity(d, d);
  blocks.mode = BlockMode::first_order;
  blocks.tau = tau;
  return blocks;
}

NonHermitianGenerator make_generator(const SystemModel& model) {
  NonHermitianGenerator gen;
  gen.g = model.hamiltonian() - 0.5 * imag_unit * (model.coupling().adjoint() * model.coupling());
  return gen;
}

Matrix propagator(const NonHermitianGenerator& gen, double t) {
  if (t < 0.0) throw std::invalid_argument("propagator: t must be >= 0");
  return (Complex{0.0, -t} * gen.g).exp();
}

Vector propagate(const NonHermitianGenerator& gen, double t, const Vector& v) {
  return propagator(gen, t) * v;
}

}  // namespace spqt

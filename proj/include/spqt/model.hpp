#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spqt/types.hpp"

namespace spqt {

/// System Hamiltonian H (Hermitian, units 1/time with hbar = 1), coupling
/// operator L (units 1/sqrt(time)), and the initial state: a unit-norm
/// vector or a density matrix. Immutable after construction; constructors
/// validate Hermiticity, normalization and positivity.
class SystemModel {
 public:
  static SystemModel pure(Matrix hamiltonian, Matrix coupling, Vector psi);
  static SystemModel mixed(Matrix hamiltonian, Matrix coupling, Matrix rho0);

  int dim() const { return static_cast<int>(h_.rows()); }
  const Matrix& hamiltonian() const { return h_; }
  const Matrix& coupling() const { return l_; }
  bool is_pure() const { return psi_.has_value(); }
  const Vector& psi() const;
  const Matrix& initial_density() const { return rho0_; }

 private:
  SystemModel() = default;
  Matrix h_, l_, rho0_;
  std::optional<Vector> psi_;
};

/// Continuous-mode photon wave packet xi_t (units 1/sqrt(time)) together
/// with its tail integral w(t) = int_t^inf |xi_s|^2 ds. tail(0) = 1 for a
/// normalized single-photon packet. `support_hint` is a time beyond which
/// the remaining packet mass is negligible.
struct PhotonProfile {
  std::function<Complex(double)> amplitude;
  std::function<double(double)> tail;
  double support_hint = 0.0;
  std::string name = "custom";
  std::vector<double> params;
};

/// xi_t = sqrt(g) exp(-g t / 2) for t >= 0; tail(t) = exp(-g t).
PhotonProfile matched_exponential_profile(double gamma_p);
/// Flat packet 1/sqrt(t1-t0) on [t0, t1), zero elsewhere.
PhotonProfile constant_window_profile(double t0, double t1);
/// Gaussian packet centered at t0 with width sigma; normalized on the whole
/// line, so t0 should be several sigma for the t >= 0 mass to be ~1.
PhotonProfile gaussian_profile(double t0, double sigma);
/// xi == 0. Not a single-photon state; discretize with allow_unnormalized.
PhotonProfile vacuum_profile();
/// Wraps an amplitude whose tail is computed by adaptive quadrature on
/// [t, support]; mass beyond `support` is treated as zero.
PhotonProfile numeric_profile(std::function<Complex(double)> amplitude, double support,
                              std::string name = "numeric");

/// Checks tail(0) = 1 within eps and spot-checks monotonicity/positivity of
/// the tail. Throws ValidationError on failure.
void validate_profile(const PhotonProfile& profile, double eps = 1e-6);

/// Sampled packet: values xi_k = xi(k tau) and tail weights
/// w_j = sum_{k>=j} tau |xi_k|^2 (+ remainder past the horizon). The weights
/// satisfy w_{j+1} = w_j - tau |xi_j|^2 exactly, by construction.
struct DiscretizedProfile {
  double tau = 0.0;
  std::vector<Complex> values;
  std::vector<double> tail_weights;

  long size() const { return static_cast<long>(values.size()); }
  /// xi_k; zero past the horizon (the chain continues in vacuum).
  Complex value(long k) const {
    return (k >= 0 && k < size()) ? values[static_cast<size_t>(k)] : Complex{0.0, 0.0};
  }
  /// w_j; frozen at the remainder past the horizon.
  double tail(long j) const {
    if (j < 0) j = 0;
    const long last = static_cast<long>(tail_weights.size()) - 1;
    return tail_weights[static_cast<size_t>(j > last ? last : j)];
  }
};

struct DiscretizeOptions {
  double epsilon = 1e-4;            // tolerance on w_0 around 1
  bool allow_unnormalized = false;  // skip the w_0 check
};

/// Samples xi at left endpoints xi_k = xi(k tau) for k tau < horizon and
/// takes the remainder from profile.tail(K tau).
DiscretizedProfile discretize_profile(const PhotonProfile& profile, double tau, double horizon,
                                      const DiscretizeOptions& opts = {});

/// Builds a discretized profile from explicit samples. With normalize set the
/// values and remainder are rescaled so that w_0 = 1 up to roundoff.
DiscretizedProfile discretized_from_samples(std::vector<Complex> values, double tau,
                                            double remainder = 0.0, bool normalize = false);

enum class BlockMode { exact, first_order };

/// The four system-operator blocks of one collision unitary
/// [[v00, v01], [v10, v11]] acting on (environment qubit) x (system).
struct CollisionBlocks {
  Matrix v00, v01, v10, v11;
  BlockMode mode = BlockMode::exact;
  double tau = 0.0;
};

/// ||V^dag V - 1||_F of the assembled 2d x 2d block matrix.
double block_unitarity_residual(const CollisionBlocks& blocks);

/// Blocks of exp(-i tau H_k), H_k = 1 (x) H + (i/sqrt(tau)) (sp (x) L - sm (x) L^dag),
/// via a dense matrix exponential of the 2d x 2d generator.
CollisionBlocks build_collision_exact(const SystemModel& model, double tau);

/// Leading-order blocks: v00 = 1 - i tau H - (tau/2) L^dag L, v10 = sqrt(tau) L,
/// v01 = -sqrt(tau) L^dag, v11 = 1. Warns to stderr when tau times the
/// spectral spread of H is not small.
CollisionBlocks build_collision_first_order(const SystemModel& model, double tau);

/// G = H - (i/2) L^dag L; generator of the no-count evolution.
struct NonHermitianGenerator {
  Matrix g;
};

NonHermitianGenerator make_generator(const SystemModel& model);

/// T_t = exp(-i G t) as a matrix.
Matrix propagator(const NonHermitianGenerator& gen, double t);

/// T_t v. Norm non-increasing in t; throws std::invalid_argument for t < 0.
Vector propagate(const NonHermitianGenerator& gen, double t, const Vector& v);

}  // namespace spqt

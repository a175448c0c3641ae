#pragma once

#include <cstdint>
#include <vector>

#include "spqt/model.hpp"
#include "spqt/types.hpp"

namespace spqt {

/// Coupled triple closing the single-photon conditional dynamics:
/// rho is the (normalized) a posteriori state, rho01 the alpha-beta sector,
/// rho00 the alpha-alpha sector. rho10 is implicitly rho01^dag.
struct Hierarchy {
  Matrix rho, rho01, rho00;
};

/// rho = rho00 = initial density, rho01 = 0.
Hierarchy initial_hierarchy(const SystemModel& model);

/// Right-hand side of the non-selective (a priori) evolution:
/// each sector carries the Lindblad dissipator; rho additionally couples to
/// rho01/rho10 through xi, rho01 couples to rho00 through xi^*.
Hierarchy master_derivative(const SystemModel& model, const Hierarchy& h, Complex xi);

struct MasterPath {
  std::vector<double> times;
  std::vector<Hierarchy> states;
};

/// Fixed-step classical RK4 on the coupled triple. Throws NumericError if the
/// trace of rho drifts from 1 by more than 1e-5 (step too large).
MasterPath integrate_master(const SystemModel& model, const PhotonProfile& profile, double t_end,
                            double dt, long record_stride = 1);

/// k_t = Tr(L^dag L rho + L rho10 xi^* + rho01 L^dag xi + rho00 |xi|^2).
/// Roundoff values in [-1e-10, 0) are clamped to 0; values below -1e-6 raise
/// a model-inconsistency error.
double jump_intensity(const SystemModel& model, const Hierarchy& h, Complex xi);

/// State replacement at a detection. The output rho has unit trace exactly.
/// Throws NumericError when the intensity is at or below `threshold`
/// (a jump must not have been scheduled there).
Hierarchy jump_update(const SystemModel& model, const Hierarchy& h, Complex xi,
                      double threshold = 1e-12);

/// First-order between-jump update including the -k_t dt compensator.
/// Requires k_t dt < 0.2. With renormalize set, all three sectors are divided
/// by Tr rho after the step, preserving their relative weights.
Hierarchy no_jump_step(const SystemModel& model, const Hierarchy& h, Complex xi, double dt,
                       bool renormalize = false);

/// r_t = Tr(L rho + rho L^dag + rho10 xi^* + rho01 xi).
double homodyne_rate(const SystemModel& model, const Hierarchy& h, Complex xi);

/// One Euler-Maruyama step of the diffusive unraveling with increment dw
/// (variance dt). Hermiticity of rho and rho00 is restored by symmetrization.
Hierarchy diffusive_step(const SystemModel& model, const Hierarchy& h, Complex xi, double dt,
                         double dw);

struct TrajectoryOptions {
  long record_stride = 1;
  bool renormalize = false;
  long stop_after_jumps = -1;  // end a jump trajectory early; -1 never
};

struct JumpPath {
  std::vector<double> times;
  std::vector<Hierarchy> states;
  std::vector<double> intensities;   // k_t at the recorded times
  std::vector<double> counts;        // cumulative n(t) at the recorded times
  std::vector<double> jump_times;    // every detection time
  double min_intensity = 0.0;        // smallest raw k_t seen along the path
  std::uint64_t seed = 0;
};

/// Per-step Bernoulli(k_t dt) jump decision, no_jump_step otherwise.
/// Deterministic for a fixed seed.
JumpPath simulate_jump_trajectory(const SystemModel& model, const PhotonProfile& profile,
                                  double t_end, double dt, std::uint64_t seed,
                                  const TrajectoryOptions& opts = {});

struct DiffusivePath {
  std::vector<double> times;
  std::vector<Hierarchy> states;
  std::vector<double> rates;         // r_t at the recorded times
  std::vector<double> wiener;        // cumulative w(t) at the recorded times
  double min_eigenvalue = 0.0;       // smallest eigenvalue of rho seen (diagnostic)
  std::uint64_t seed = 0;
};

DiffusivePath simulate_diffusive_trajectory(const SystemModel& model, const PhotonProfile& profile,
                                            double t_end, double dt, std::uint64_t seed,
                                            const TrajectoryOptions& opts = {});

enum class UnravelingKind { jump, diffusive };

struct RealTriple {
  RealMatrix rho, rho01, rho00;
};

struct AveragedPath {
  std::vector<double> times;
  std::vector<Hierarchy> mean;
  std::vector<RealTriple> stderr_real, stderr_imag;  // per-component standard errors
  long trajectories = 0;
  std::uint64_t base_seed = 0;
};

/// Mean and per-component standard error over n independent trajectories
/// (stream i derived from (base_seed, i)). Trajectories are summed in blocks
/// of fixed size and the block partials combined pairwise in index order, so
/// the result does not depend on the number of threads.
AveragedPath monte_carlo_average(UnravelingKind kind, const SystemModel& model,
                                 const PhotonProfile& profile, double t_end, double dt, long n,
                                 std::uint64_t base_seed, int threads = 1, long record_stride = 1,
                                 bool renormalize = false);

}  // namespace spqt

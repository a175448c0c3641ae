#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spqt/model.hpp"
#include "spqt/types.hpp"

namespace spqt {

/// Unnormalized conditional vectors after j collisions: alpha carries the
/// "photon still in the future" branch, beta the "photon already consumed"
/// branch. tail is w_j = sum_{k>=j} tau |xi_k|^2.
struct ConditionalPair {
  Vector alpha, beta;
  long step = 0;
  double tail = 1.0;
};

/// Pair at step 0: alpha = psi, beta = 0, tail = w_0.
ConditionalPair initial_pair(const Vector& psi, const DiscretizedProfile& profile);

enum class MeasurementKind { counting, homodyne };

/// One photodetection step: alpha' = V_{eta 0} alpha,
/// beta' = V_{eta 0} beta + sqrt(tau) xi_j V_{eta 1} alpha.
/// Zero-probability branches come back with zero trace; they are not errors.
ConditionalPair counting_step(const ConditionalPair& pair, const CollisionBlocks& blocks,
                              Complex xi_j, int eta);

/// One homodyne step with outcome q = +1 or -1:
/// alpha' = (v00 + q v10) alpha / sqrt(2),
/// beta'  = [(v00 + q v10) beta + sqrt(tau) xi_j (v01 + q v11) alpha] / sqrt(2).
ConditionalPair homodyne_step(const ConditionalPair& pair, const CollisionBlocks& blocks,
                              Complex xi_j, int q);

/// <alpha|alpha> w_j + <beta|beta>: the probability of the record so far.
double pair_trace(const ConditionalPair& pair);

/// Unnormalized a posteriori state alpha alpha^dag w_j + beta beta^dag.
Matrix posterior_density(const ConditionalPair& pair);

struct ScenarioProbabilities {
  double future_photon = 0.0;   // photon not yet met by the system
  double consumed_photon = 0.0; // photon absorbed or already detected
};

/// Normalized weights of the two branches. Throws NumericError on zero trace.
ScenarioProbabilities scenario_probabilities(const ConditionalPair& pair);

/// Conditional outcome probabilities for the next step.
/// counting: {p(eta=0), p(eta=1)}; homodyne: {p(q=+1), p(q=-1)}.
std::array<double, 2> outcome_distribution(const ConditionalPair& pair,
                                           const CollisionBlocks& blocks, Complex xi_j,
                                           MeasurementKind kind);

struct FirstOrderIntensities {
  double count_intensity = 0.0;  // k_j: p(count) = k_j tau + O(tau^2)
  double homodyne_rate = 0.0;    // r_j: p(q) = (1 + q r_j sqrt(tau))/2 + O(tau^2)
};

/// Small-tau intensities evaluated on the normalized pair.
FirstOrderIntensities first_order_intensities(const ConditionalPair& pair,
                                              const SystemModel& model, Complex xi_j);

/// Counting record: steps l_1 < ... < l_m (1-based) at which a detection
/// occurred, all other outcomes zero, up to step `horizon`.
struct CountRecordDiscrete {
  std::vector<long> count_steps;
  long horizon = 0;
};

/// Conditional pair for an arbitrary record, evaluated by the explicit
/// product/sum solution of the recurrences (one second-column insertion per
/// term, accumulated in time order; no inverse of v00 is ever formed).
ConditionalPair closed_form_pair(const CountRecordDiscrete& record, const CollisionBlocks& blocks,
                                 const DiscretizedProfile& profile, const Vector& psi);

struct DiscreteTrajectory {
  std::vector<int> outcomes;                     // 0/1 for counting, +1/-1 for homodyne
  std::vector<Matrix> states;                    // normalized posterior, size steps + 1
  std::vector<ScenarioProbabilities> scenarios;  // branch weights, size steps + 1
  std::vector<double> log_probability;           // cumulative log trajectory probability
  ConditionalPair final_pair;                    // normalized
};

/// Samples one trajectory of `steps` measurements from the exact conditional
/// distributions (exact collision blocks). Deterministic for a fixed seed.
DiscreteTrajectory sample_trajectory(const SystemModel& model, const DiscretizedProfile& profile,
                                     MeasurementKind kind, long steps, std::uint64_t seed);

/// Mixed-state filter state: rho is the unnormalized a posteriori matrix,
/// x and y generalize alpha alpha^dag and alpha beta^dag.
struct MixedPairState {
  Matrix rho, x, y;
  long step = 0;
  double tail = 1.0;
};

MixedPairState initial_mixed_state(const Matrix& rho0, const DiscretizedProfile& profile);

MixedPairState mixed_counting_step(const MixedPairState& state, const CollisionBlocks& blocks,
                                   Complex xi_j, int eta);

/// All records of `steps` outcomes with their probabilities. Strings are
/// chronological; counting uses '0'/'1', homodyne '+'/'-'.
std::vector<std::pair<std::string, double>> enumerate_trajectories(
    const Vector& psi, const CollisionBlocks& blocks, const DiscretizedProfile& profile,
    long steps, MeasurementKind kind);

}  // namespace spqt

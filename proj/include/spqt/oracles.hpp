#pragma once

#include "spqt/model.hpp"
#include "spqt/types.hpp"

namespace spqt {

/// Two-level atom with H = 0, L = sqrt(gamma) sigma-, initial ground state,
/// driven by one photon with the given profile. Closed-form ground truth for
/// the test suite; matched-exponential profiles take the analytic path,
/// everything else goes through adaptive quadrature.
struct TwoLevelAtomSpec {
  double gamma = 1.0;
  PhotonProfile profile;
};

/// The corresponding SystemModel (d = 2, ground start).
SystemModel tla_model(const TwoLevelAtomSpec& spec);

/// P_0^t(0) = tail(t) + gamma e^{-gamma t} |int_0^t xi_s e^{gamma s / 2} ds|^2.
double tla_no_count_probability(const TwoLevelAtomSpec& spec, double t);

/// p(t) = gamma e^{-gamma t} |int_0^t xi_s e^{gamma s / 2} ds|^2.
double tla_excitation_probability(const TwoLevelAtomSpec& spec, double t);

/// (1 - p(t)) |0><0| + p(t) |1><1|.
Matrix tla_apriori_state(const TwoLevelAtomSpec& spec, double t);

}  // namespace spqt

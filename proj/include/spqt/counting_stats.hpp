#pragma once

#include <vector>

#include "spqt/model.hpp"
#include "spqt/types.hpp"

namespace spqt {

/// Count times 0 < t_1 < ... < t_m < window_end.
struct CountRecord {
  std::vector<double> times;
  double window_end = 0.0;
};

/// Conditional vectors with the sqrt(dt') density factors stripped; they
/// carry units (1/time)^(m/2) relative to state vectors.
struct DensityPair {
  Vector alpha_bar, beta_bar;
};

struct QuadratureOptions {
  int points_one = 2048;  // intervals per dimension for m <= 1
  int points_two = 256;   // intervals per dimension for m = 2
  int threads = 1;        // used by the m = 2 simplex quadrature
};

/// Propagators T at i * (t_max / n), i = 0..n, built from the finest step by
/// repeated squaring/multiplication (one matrix exponential total).
class PropagatorGrid {
 public:
  PropagatorGrid(const NonHermitianGenerator& gen, double t_max, int n);
  const Matrix& operator[](int i) const { return grid_[static_cast<size_t>(i)]; }
  int nodes() const { return static_cast<int>(grid_.size()) - 1; }
  double step() const { return h_; }

 private:
  std::vector<Matrix> grid_;
  double h_ = 0.0;
};

/// alpha = T_t psi, beta = -int_0^t T_{t-s} xi_s L^dag T_s psi ds.
DensityPair no_count_pair(const SystemModel& model, const PhotonProfile& profile, double t,
                          const QuadratureOptions& opts = {});

/// Conditional vectors for one count at t1 and none elsewhere in (0, t].
DensityPair one_count_pair(const SystemModel& model, const PhotonProfile& profile, double t,
                           double t1, const QuadratureOptions& opts = {});

/// Conditional vectors for counts at t1 < t2 and none elsewhere in (0, t].
DensityPair two_count_pair(const SystemModel& model, const PhotonProfile& profile, double t,
                           double t1, double t2, const QuadratureOptions& opts = {});

/// Exclusive probability density ||alpha||^2 tail(t) + ||beta||^2 for the
/// record (a probability for m = 0). m <= 2 only.
double exclusive_density(const SystemModel& model, const PhotonProfile& profile,
                         const CountRecord& record, const QuadratureOptions& opts = {});

/// Probability of no counts up to t.
double prob_no_counts(const SystemModel& model, const PhotonProfile& profile, double t,
                      const QuadratureOptions& opts = {});

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;  // Richardson estimate from halving the grid
};

/// Probability of exactly m counts up to t, by nested composite Simpson over
/// the ordered simplex. m <= 2 only.
QuadratureResult prob_m_counts(const SystemModel& model, const PhotonProfile& profile, double t,
                               int m, const QuadratureOptions& opts = {});

}  // namespace spqt

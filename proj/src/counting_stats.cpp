#include "spqt/counting_stats.hpp"

#include <cmath>
#include <sstream>

#include "spqt/errors.hpp"
#include "spqt/parallel.hpp"
#include "spqt/quadrature.hpp"

namespace spqt {

PropagatorGrid::PropagatorGrid(const NonHermitianGenerator& gen, double t_max, int n) {
  const long d = gen.g.rows();
  if (t_max < 0.0) throw std::invalid_argument("PropagatorGrid: t_max must be >= 0");
  if (t_max == 0.0 || n < 1) {
    grid_.assign(1, Matrix::Identity(d, d));
    h_ = 0.0;
    return;
  }
  h_ = t_max / n;
  grid_.resize(static_cast<size_t>(n) + 1);
  grid_[0] = Matrix::Identity(d, d);
  grid_[1] = propagator(gen, h_);
  for (int i = 2; i <= n; ++i) {
    if (i % 2 == 0) {
      grid_[static_cast<size_t>(i)].noalias() =
          grid_[static_cast<size_t>(i / 2)] * grid_[static_cast<size_t>(i / 2)];
    } else {
      grid_[static_cast<size_t>(i)].noalias() = grid_[static_cast<size_t>(i - 1)] * grid_[1];
    }
  }
}

namespace {

int even_points(int n) {
  if (n < 2) n = 2;
  if (n % 2 != 0) ++n;
  return n;
}

void require_pure(const SystemModel& model, const char* what) {
  if (!model.is_pure()) {
    std::ostringstream msg;
    msg << what << ": requires a pure initial state";
    throw std::invalid_argument(msg.str());
  }
}

/// int_0^len T_{len-s} xi(s + offset) L^dag T_s v ds on the given grid.
Vector weighted_sandwich(const PropagatorGrid& grid, const PhotonProfile& profile, double offset,
                         const Matrix& ldag, const Vector& v) {
  const int n = grid.nodes();
  if (n < 1) return Vector::Zero(v.size());
  std::vector<Vector> values(static_cast<size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double s = i * grid.step();
    values[static_cast<size_t>(i)] =
        profile.amplitude(offset + s) * (grid[n - i] * (ldag * (grid[i] * v)));
  }
  return integrate_uniform(values, grid.step());
}

}  // namespace

DensityPair no_count_pair(const SystemModel& model, const PhotonProfile& profile, double t,
                          const QuadratureOptions& opts) {
  require_pure(model, "no_count_pair");
  if (t < 0.0) throw std::invalid_argument("no_count_pair: t must be >= 0");
  DensityPair pair;
  if (t == 0.0) {
    pair.alpha_bar = model.psi();
    pair.beta_bar = Vector::Zero(model.dim());
    return pair;
  }
  const NonHermitianGenerator gen = make_generator(model);
  const Matrix ldag = model.coupling().adjoint();
  const PropagatorGrid grid(gen, t, even_points(opts.points_one));
  pair.alpha_bar = grid[grid.nodes()] * model.psi();
  pair.beta_bar = -weighted_sandwich(grid, profile, 0.0, ldag, model.psi());
  return pair;
}

DensityPair one_count_pair(const SystemModel& model, const PhotonProfile& profile, double t,
                           double t1, const QuadratureOptions& opts) {
  require_pure(model, "one_count_pair");
  if (!(t > 0.0)) throw std::invalid_argument("one_count_pair: t must be > 0");
  if (t1 < 0.0 || t1 > t) throw std::invalid_argument("one_count_pair: need 0 <= t1 <= t");
  const NonHermitianGenerator gen = make_generator(model);
  const Matrix& l = model.coupling();
  const Matrix ldag = l.adjoint();
  const int n = even_points(opts.points_one);
  const PropagatorGrid ga(gen, t1, n);
  const PropagatorGrid gb(gen, t - t1, n);

  const Vector v1 = ga[ga.nodes()] * model.psi();  // T_{t1} psi
  const Vector lv1 = l * v1;

  DensityPair pair;
  pair.alpha_bar = gb[gb.nodes()] * lv1;

  const Vector absorbed_before = weighted_sandwich(ga, profile, 0.0, ldag, model.psi());
  const Vector absorbed_after = weighted_sandwich(gb, profile, t1, ldag, lv1);
  pair.beta_bar = profile.amplitude(t1) * (gb[gb.nodes()] * v1) -
                  gb[gb.nodes()] * (l * absorbed_before) - absorbed_after;
  return pair;
}

DensityPair two_count_pair(const SystemModel& model, const PhotonProfile& profile, double t,
                           double t1, double t2, const QuadratureOptions& opts) {
  require_pure(model, "two_count_pair");
  if (!(t > 0.0)) throw std::invalid_argument("two_count_pair: t must be > 0");
  if (t1 < 0.0 || t1 > t2 || t2 > t) {
    throw std::invalid_argument("two_count_pair: need 0 <= t1 <= t2 <= t");
  }
  const NonHermitianGenerator gen = make_generator(model);
  const Matrix& l = model.coupling();
  const Matrix ldag = l.adjoint();
  const int n = even_points(opts.points_two);
  const PropagatorGrid ga(gen, t1, n);
  const PropagatorGrid gb(gen, t2 - t1, n);
  const PropagatorGrid gc(gen, t - t2, n);

  const Vector v1 = ga[ga.nodes()] * model.psi();  // T_{t1} psi
  const Vector lv1 = l * v1;
  const Vector w2 = gb[gb.nodes()] * lv1;  // T_{t2-t1} L T_{t1} psi
  const Vector lw2 = l * w2;

  DensityPair pair;
  pair.alpha_bar = gc[gc.nodes()] * lw2;

  // photon detected directly at t1, emission at t2
  const Vector b1 = profile.amplitude(t1) * (gc[gc.nodes()] * (l * (gb[gb.nodes()] * v1)));
  // emission at t1, photon detected directly at t2
  const Vector b2 = profile.amplitude(t2) * (gc[gc.nodes()] * w2);
  // absorption in (0, t1), emissions at t1 and t2
  const Vector a = weighted_sandwich(ga, profile, 0.0, ldag, model.psi());
  const Vector b3 = gc[gc.nodes()] * (l * (gb[gb.nodes()] * (l * a)));
  // emission at t1, absorption in (t1, t2), emission at t2
  const Vector b = weighted_sandwich(gb, profile, t1, ldag, lv1);
  const Vector b4 = gc[gc.nodes()] * (l * b);
  // emissions at t1 and t2, absorption in (t2, t)
  const Vector b5 = weighted_sandwich(gc, profile, t2, ldag, lw2);

  pair.beta_bar = b1 + b2 - b3 - b4 - b5;
  return pair;
}

double exclusive_density(const SystemModel& model, const PhotonProfile& profile,
                         const CountRecord& record, const QuadratureOptions& opts) {
  const double t = record.window_end;
  const size_t m = record.times.size();
  if (m > 2) {
    throw std::invalid_argument(
        "exclusive_density: only m <= 2 is supported; use the discrete closed-form machinery "
        "for higher counts");
  }
  double prev = 0.0;
  for (double ti : record.times) {
    if (ti < prev || ti > t) {
      throw std::invalid_argument("exclusive_density: count times must be increasing in [0, t]");
    }
    prev = ti;
  }
  DensityPair pair;
  if (m == 0) {
    pair = no_count_pair(model, profile, t, opts);
  } else if (m == 1) {
    pair = one_count_pair(model, profile, t, record.times[0], opts);
  } else {
    pair = two_count_pair(model, profile, t, record.times[0], record.times[1], opts);
  }
  return pair.alpha_bar.squaredNorm() * profile.tail(t) + pair.beta_bar.squaredNorm();
}

double prob_no_counts(const SystemModel& model, const PhotonProfile& profile, double t,
                      const QuadratureOptions& opts) {
  if (t < 0.0) throw std::invalid_argument("prob_no_counts: t must be >= 0");
  return exclusive_density(model, profile, CountRecord{{}, t}, opts);
}

QuadratureResult prob_m_counts(const SystemModel& model, const PhotonProfile& profile, double t,
                               int m, const QuadratureOptions& opts) {
  if (m < 0 || m > 2) {
    throw std::invalid_argument("prob_m_counts: only m <= 2 is supported");
  }
  if (t < 0.0) throw std::invalid_argument("prob_m_counts: t must be >= 0");

  QuadratureResult result;
  if (m == 0) {
    result.value = prob_no_counts(model, profile, t, opts);
    QuadratureOptions half = opts;
    half.points_one = even_points(opts.points_one / 2);
    const double coarse = prob_no_counts(model, profile, t, half);
    result.error_estimate = std::abs(result.value - coarse) / 15.0;
    return result;
  }
  if (t == 0.0) return result;  // empty window: zero probability, zero error

  if (m == 1) {
    const int n = even_points(opts.points_one);
    const double h = t / n;
    std::vector<double> density(static_cast<size_t>(n) + 1);
    for (int j = 0; j <= n; ++j) {
      density[static_cast<size_t>(j)] =
          exclusive_density(model, profile, CountRecord{{j * h}, t}, opts);
    }
    result.value = integrate_uniform(density, h);
    std::vector<double> coarse;
    coarse.reserve(static_cast<size_t>(n / 2) + 1);
    for (int j = 0; j <= n; j += 2) coarse.push_back(density[static_cast<size_t>(j)]);
    const double coarse_value = integrate_uniform(coarse, 2.0 * h);
    result.error_estimate = std::abs(result.value - coarse_value) / 15.0;
    return result;
  }

  // m == 2: nested rule over the ordered simplex 0 <= t1 <= t2 <= t on one
  // shared uniform grid, outer nodes parallelized.
  const int n = even_points(opts.points_two);
  const double h = t / n;
  std::vector<std::vector<double>> density(static_cast<size_t>(n) + 1);
  parallel_blocks(n + 1, opts.threads, [&](long j) {
    auto& row = density[static_cast<size_t>(j)];
    row.resize(static_cast<size_t>(j) + 1);
    for (long i = 0; i <= j; ++i) {
      row[static_cast<size_t>(i)] =
          exclusive_density(model, profile, CountRecord{{i * h, j * h}, t}, opts);
    }
  });

  std::vector<double> inner(static_cast<size_t>(n) + 1, 0.0);
  for (int j = 1; j <= n; ++j) {
    inner[static_cast<size_t>(j)] = integrate_uniform(density[static_cast<size_t>(j)], h);
  }
  result.value = integrate_uniform(inner, h);

  std::vector<double> inner_coarse;
  inner_coarse.reserve(static_cast<size_t>(n / 2) + 1);
  inner_coarse.push_back(0.0);
  for (int j = 2; j <= n; j += 2) {
    std::vector<double> row;
    row.reserve(static_cast<size_t>(j / 2) + 1);
    for (int i = 0; i <= j; i += 2) row.push_back(density[static_cast<size_t>(j)][static_cast<size_t>(i)]);
    inner_coarse.push_back(integrate_uniform(row, 2.0 * h));
  }
  const double coarse_value = integrate_uniform(inner_coarse, 2.0 * h);
  result.error_estimate = std::abs(result.value - coarse_value) / 15.0;
  return result;
}

}  // namespace spqt

#include "spqt/discrete.hpp"

#include <cmath>
#include <sstream>

#include "spqt/errors.hpp"
#include "spqt/rng.hpp"

namespace spqt {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void check_step_inputs(const ConditionalPair& pair, const CollisionBlocks& blocks) {
  if (pair.alpha.size() != blocks.v00.rows()) {
    throw std::invalid_argument("conditional pair and collision blocks disagree on dimension");
  }
  if (pair.beta.size() != pair.alpha.size()) {
    throw std::invalid_argument("conditional pair has mismatched alpha/beta dimensions");
  }
}

double checked_real(Complex z, const char* what) {
  if (std::abs(z.imag()) > 1e-8 * (1.0 + std::abs(z.real()))) {
    std::ostringstream msg;
    msg << what << ": expected a real value, got imaginary part " << z.imag();
    throw NumericError(msg.str());
  }
  return z.real();
}

}  // namespace

ConditionalPair initial_pair(const Vector& psi, const DiscretizedProfile& profile) {
  ConditionalPair pair;
  pair.alpha = psi;
  pair.beta = Vector::Zero(psi.size());
  pair.step = 0;
  pair.tail = profile.tail(0);
  return pair;
}

ConditionalPair counting_step(const ConditionalPair& pair, const CollisionBlocks& blocks,
                              Complex xi_j, int eta) {
  check_step_inputs(pair, blocks);
  if (eta != 0 && eta != 1) throw std::invalid_argument("counting outcome must be 0 or 1");
  const Matrix& first = (eta == 0) ? blocks.v00 : blocks.v10;
  const Matrix& second = (eta == 0) ? blocks.v01 : blocks.v11;
  const double rt = std::sqrt(blocks.tau);

  ConditionalPair next;
  next.alpha = first * pair.alpha;
  next.beta = first * pair.beta + (rt * xi_j) * (second * pair.alpha);
  next.step = pair.step + 1;
  next.tail = pair.tail - blocks.tau * std::norm(xi_j);
  return next;
}

ConditionalPair homodyne_step(const ConditionalPair& pair, const CollisionBlocks& blocks,
                              Complex xi_j, int q) {
  check_step_inputs(pair, blocks);
  if (q != 1 && q != -1) throw std::invalid_argument("homodyne outcome must be +1 or -1");
  const double qd = static_cast<double>(q);
  const double rt = std::sqrt(blocks.tau);

  ConditionalPair next;
  next.alpha = kInvSqrt2 * (blocks.v00 * pair.alpha + qd * (blocks.v10 * pair.alpha));
  next.beta = kInvSqrt2 * (blocks.v00 * pair.beta + qd * (blocks.v10 * pair.beta) +
                           (rt * xi_j) * (blocks.v01 * pair.alpha + qd * (blocks.v11 * pair.alpha)));
  next.step = pair.step + 1;
  next.tail = pair.tail - blocks.tau * std::norm(xi_j);
  return next;
}

double pair_trace(const ConditionalPair& pair) {
  return pair.alpha.squaredNorm() * pair.tail + pair.beta.squaredNorm();
}

Matrix posterior_density(const ConditionalPair& pair) {
  return pair.tail * (pair.alpha * pair.alpha.adjoint()) + pair.beta * pair.beta.adjoint();
}

ScenarioProbabilities scenario_probabilities(const ConditionalPair& pair) {
  const double trace = pair_trace(pair);
  if (!(trace > 0.0)) {
    throw NumericError("scenario_probabilities: undefined state (zero trace)");
  }
  ScenarioProbabilities s;
  s.future_photon = pair.alpha.squaredNorm() * pair.tail / trace;
  s.consumed_photon = pair.beta.squaredNorm() / trace;
  return s;
}

std::array<double, 2> outcome_distribution(const ConditionalPair& pair,
                                           const CollisionBlocks& blocks, Complex xi_j,
                                           MeasurementKind kind) {
  const double trace = pair_trace(pair);
  if (!(trace > 0.0)) {
    throw NumericError("outcome_distribution: undefined state (zero trace)");
  }
  std::array<double, 2> p{};
  if (kind == MeasurementKind::counting) {
    p[0] = pair_trace(counting_step(pair, blocks, xi_j, 0)) / trace;
    p[1] = pair_trace(counting_step(pair, blocks, xi_j, 1)) / trace;
  } else {
    p[0] = pair_trace(homodyne_step(pair, blocks, xi_j, +1)) / trace;
    p[1] = pair_trace(homodyne_step(pair, blocks, xi_j, -1)) / trace;
  }
  return p;
}

FirstOrderIntensities first_order_intensities(const ConditionalPair& pair,
                                              const SystemModel& model, Complex xi_j) {
  const double trace = pair_trace(pair);
  if (!(trace > 0.0)) {
    throw NumericError("first_order_intensities: undefined state (zero trace)");
  }
  const Matrix& l = model.coupling();
  const Vector alpha_t = pair.alpha / std::sqrt(trace);
  const Vector beta_t = pair.beta / std::sqrt(trace);
  const Vector la = l * alpha_t;
  const Vector lb = l * beta_t;

  // k = Tr(L^dag L rho~) + xi^* <a~|L|b~> + xi <b~|L^dag|a~> + |xi|^2 <a~|a~>
  const Complex k = pair.tail * la.squaredNorm() + lb.squaredNorm() +
                    std::conj(xi_j) * alpha_t.dot(lb) + xi_j * lb.dot(alpha_t) +
                    std::norm(xi_j) * alpha_t.squaredNorm();
  // r = Tr(L rho~ + rho~ L^dag) + xi^* <a~|b~> + xi <b~|a~>
  const Complex tr_l_rho = pair.tail * alpha_t.dot(la) + beta_t.dot(lb);
  const Complex overlap = alpha_t.dot(beta_t);  // <a~|b~>
  const Complex r = tr_l_rho + std::conj(tr_l_rho) + std::conj(xi_j) * overlap +
                    xi_j * std::conj(overlap);

  FirstOrderIntensities out;
  out.count_intensity = checked_real(k, "first_order_intensities: k");
  out.homodyne_rate = checked_real(r, "first_order_intensities: r");
  return out;
}

ConditionalPair closed_form_pair(const CountRecordDiscrete& record, const CollisionBlocks& blocks,
                                 const DiscretizedProfile& profile, const Vector& psi) {
  const long j = record.horizon;
  if (j < 0) throw std::invalid_argument("closed_form_pair: negative horizon");
  long prev = 0;
  for (long l : record.count_steps) {
    if (l <= prev || l > j) {
      throw std::invalid_argument("closed_form_pair: count steps must be strictly increasing in [1, horizon]");
    }
    prev = l;
  }
  if (std::abs(profile.tau - blocks.tau) > 1e-12 * (1.0 + profile.tau)) {
    throw std::invalid_argument("closed_form_pair: blocks and profile disagree on tau");
  }
  const long d = psi.size();
  const double rt = std::sqrt(blocks.tau);

  // eta_l for l = 1..j
  std::vector<int> eta(static_cast<size_t>(j) + 1, 0);
  for (long l : record.count_steps) eta[static_cast<size_t>(l)] = 1;

  // Prefix vectors p_i = B_i ... B_1 psi with B_l = V_{eta_l 0}.
  std::vector<Vector> prefix(static_cast<size_t>(j) + 1);
  prefix[0] = psi;
  for (long i = 1; i <= j; ++i) {
    const Matrix& b = eta[static_cast<size_t>(i)] ? blocks.v10 : blocks.v00;
    prefix[static_cast<size_t>(i)] = b * prefix[static_cast<size_t>(i) - 1];
  }

  // Suffix operators S_i = B_j ... B_{i+1} (S_j = 1), accumulated in time order.
  std::vector<Matrix> suffix(static_cast<size_t>(j) + 1);
  suffix[static_cast<size_t>(j)] = Matrix::Identity(d, d);
  for (long i = j - 1; i >= 0; --i) {
    const Matrix& b = eta[static_cast<size_t>(i) + 1] ? blocks.v10 : blocks.v00;
    suffix[static_cast<size_t>(i)] = suffix[static_cast<size_t>(i) + 1] * b;
  }

  // beta = sqrt(tau) sum_i xi_{i-1} S_i V_{eta_i 1} p_{i-1}: the photon
  // amplitude enters through the second column exactly once per term.
  Vector beta = Vector::Zero(d);
  for (long i = 1; i <= j; ++i) {
    const Complex xi = profile.value(i - 1);
    if (xi == Complex{0.0, 0.0}) continue;
    const Matrix& c = eta[static_cast<size_t>(i)] ? blocks.v11 : blocks.v01;
    beta.noalias() += xi * (suffix[static_cast<size_t>(i)] * (c * prefix[static_cast<size_t>(i) - 1]));
  }

  ConditionalPair pair;
  pair.alpha = prefix[static_cast<size_t>(j)];
  pair.beta = rt * beta;
  pair.step = j;
  pair.tail = profile.tail(j);
  return pair;
}

DiscreteTrajectory sample_trajectory(const SystemModel& model, const DiscretizedProfile& profile,
                                     MeasurementKind kind, long steps, std::uint64_t seed) {
  if (!model.is_pure()) {
    throw std::invalid_argument("sample_trajectory: requires a pure initial state");
  }
  if (steps < 0 || steps > profile.size()) {
    throw std::invalid_argument("sample_trajectory: steps must be within the profile length");
  }
  const CollisionBlocks blocks = build_collision_exact(model, profile.tau);
  RandomStream rng(seed);

  DiscreteTrajectory traj;
  traj.outcomes.reserve(static_cast<size_t>(steps));
  traj.states.reserve(static_cast<size_t>(steps) + 1);
  traj.log_probability.reserve(static_cast<size_t>(steps) + 1);

  ConditionalPair pair = initial_pair(model.psi(), profile);
  double trace0 = pair_trace(pair);
  if (!(trace0 > 0.0)) throw NumericError("sample_trajectory: initial state has zero trace");
  double logp = std::log(trace0);
  // Normalize once so per-step traces are conditional probabilities.
  pair.alpha /= std::sqrt(trace0);
  pair.beta /= std::sqrt(trace0);
  traj.states.push_back(posterior_density(pair));
  traj.scenarios.push_back(scenario_probabilities(pair));
  traj.log_probability.push_back(logp);

  for (long m = 0; m < steps; ++m) {
    const Complex xi = profile.value(m);
    const auto dist = outcome_distribution(pair, blocks, xi, kind);
    const double u = rng.uniform();
    const bool first = u < dist[0];
    int outcome;
    ConditionalPair next;
    if (kind == MeasurementKind::counting) {
      outcome = first ? 0 : 1;
      next = counting_step(pair, blocks, xi, outcome);
    } else {
      outcome = first ? +1 : -1;
      next = homodyne_step(pair, blocks, xi, outcome);
    }
    const double trace = pair_trace(next);
    if (!(trace > 0.0)) throw NumericError("sample_trajectory: sampled a zero-probability branch");
    logp += std::log(trace);
    next.alpha /= std::sqrt(trace);
    next.beta /= std::sqrt(trace);
    pair = std::move(next);
    traj.outcomes.push_back(outcome);
    traj.states.push_back(posterior_density(pair));
    traj.scenarios.push_back(scenario_probabilities(pair));
    traj.log_probability.push_back(logp);
  }
  traj.final_pair = std::move(pair);
  return traj;
}

MixedPairState initial_mixed_state(const Matrix& rho0, const DiscretizedProfile& profile) {
  MixedPairState s;
  s.tail = profile.tail(0);
  s.rho = s.tail * rho0;
  s.x = rho0;
  s.y = Matrix::Zero(rho0.rows(), rho0.cols());
  s.step = 0;
  return s;
}

MixedPairState mixed_counting_step(const MixedPairState& state, const CollisionBlocks& blocks,
                                   Complex xi_j, int eta) {
  if (eta != 0 && eta != 1) throw std::invalid_argument("counting outcome must be 0 or 1");
  const Matrix& first = (eta == 0) ? blocks.v00 : blocks.v10;
  const Matrix& second = (eta == 0) ? blocks.v01 : blocks.v11;
  const double rt = std::sqrt(blocks.tau);
  const Complex xs = rt * xi_j;

  // rho' = F rho F^dag + sqrt(tau)(xi S Y F^dag + h.c.)
  //        + tau |xi|^2 (S X S^dag - F X F^dag), with F = V_{eta 0}, S = V_{eta 1}.
  MixedPairState next;
  const Matrix fy = first * state.y;
  const Matrix fx = first * state.x;
  const Matrix syf = second * state.y * first.adjoint();
  next.rho = first * state.rho * first.adjoint() + xs * syf + std::conj(xs) * syf.adjoint() +
             std::norm(xs) * (second * state.x * second.adjoint() - fx * first.adjoint());
  next.y = fy * first.adjoint() + std::conj(xs) * (fx * second.adjoint());
  next.x = fx * first.adjoint();
  next.step = state.step + 1;
  next.tail = state.tail - blocks.tau * std::norm(xi_j);
  return next;
}

std::vector<std::pair<std::string, double>> enumerate_trajectories(
    const Vector& psi, const CollisionBlocks& blocks, const DiscretizedProfile& profile,
    long steps, MeasurementKind kind) {
  if (steps < 0 || steps > 24) {
    throw std::invalid_argument("enumerate_trajectories: steps must be in [0, 24]");
  }
  std::vector<std::pair<std::string, double>> out;
  out.reserve(static_cast<size_t>(1) << steps);
  std::string label(static_cast<size_t>(steps), '?');

  const auto step_fn = [&](const ConditionalPair& pair, long m, int branch) {
    const Complex xi = profile.value(m);
    if (kind == MeasurementKind::counting) {
      return counting_step(pair, blocks, xi, branch);
    }
    return homodyne_step(pair, blocks, xi, branch == 0 ? +1 : -1);
  };
  const char sym0 = (kind == MeasurementKind::counting) ? '0' : '+';
  const char sym1 = (kind == MeasurementKind::counting) ? '1' : '-';

  const std::function<void(const ConditionalPair&, long)> walk =
      [&](const ConditionalPair& pair, long m) {
        if (m == steps) {
          out.emplace_back(label, pair_trace(pair));
          return;
        }
        label[static_cast<size_t>(m)] = sym0;
        walk(step_fn(pair, m, 0), m + 1);
        label[static_cast<size_t>(m)] = sym1;
        walk(step_fn(pair, m, 1), m + 1);
      };
  walk(initial_pair(psi, profile), 0);
  return out;
}

}  // namespace spqt

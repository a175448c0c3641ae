#include "spqt/continuous.hpp"

#include <cmath>
#include <sstream>

#include "spqt/errors.hpp"
#include "spqt/parallel.hpp"
#include "spqt/rng.hpp"

namespace spqt {

namespace {

/// Tr(A B) without forming the product.
Complex trace_product(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  return a.cwiseProduct(b.transpose()).sum();
}

double checked_real(Complex z, const char* what) {
  if (std::abs(z.imag()) > 1e-8 * (1.0 + std::abs(z.real()))) {
    std::ostringstream msg;
    msg << what << ": expected a real value, got imaginary part " << z.imag();
    throw NumericError(msg.str());
  }
  return z.real();
}

long whole_steps(double t_end, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (t_end < 0.0) throw std::invalid_argument("t_end must be >= 0");
  return static_cast<long>(std::ceil(t_end / dt * (1.0 - 1e-12)));
}

/// Precomputed operators plus scratch space; one instance per worker.
/// Stepping methods never alias their input and output.
class HierarchyDynamics {
 public:
  explicit HierarchyDynamics(const SystemModel& model)
      : h_(model.hamiltonian()),
        l_(model.coupling()),
        ld_(model.coupling().adjoint()),
        kk_(ld_ * l_) {
    const long d = model.dim();
    t1_.resize(d, d);
    t2_.resize(d, d);
    r10_.resize(d, d);
    deriv_.rho.resize(d, d);
    deriv_.rho01.resize(d, d);
    deriv_.rho00.resize(d, d);
  }

  // out = -i[H,x] - 1/2 {L^dag L, x} + L x L^dag
  void dissipator(const Matrix& x, Matrix& out) const {
    t1_.noalias() = h_ * x;
    t2_.noalias() = x * h_;
    out = -imag_unit * (t1_ - t2_);
    t1_.noalias() = kk_ * x;
    t2_.noalias() = x * kk_;
    out -= 0.5 * (t1_ + t2_);
    t1_.noalias() = l_ * x;
    t2_.noalias() = t1_ * ld_;
    out += t2_;
  }

  void master(const Hierarchy& in, Complex xi, Hierarchy& out) const {
    r10_ = in.rho01.adjoint();
    dissipator(in.rho, out.rho);
    t1_.noalias() = in.rho01 * ld_;
    t2_.noalias() = ld_ * in.rho01;
    out.rho += xi * (t1_ - t2_);
    t1_.noalias() = l_ * r10_;
    t2_.noalias() = r10_ * l_;
    out.rho += std::conj(xi) * (t1_ - t2_);
    dissipator(in.rho01, out.rho01);
    t1_.noalias() = l_ * in.rho00;
    t2_.noalias() = in.rho00 * l_;
    out.rho01 += std::conj(xi) * (t1_ - t2_);
    dissipator(in.rho00, out.rho00);
  }

  Complex intensity_value(const Hierarchy& in, Complex xi) const {
    return trace_product(kk_, in.rho) + std::conj(xi) * trace_product(l_, in.rho01.adjoint()) +
           xi * trace_product(in.rho01, ld_) + std::norm(xi) * in.rho00.trace();
  }

  /// Raw real k_t (reality checked, no clamping).
  double intensity_raw(const Hierarchy& in, Complex xi) const {
    return checked_real(intensity_value(in, xi), "jump_intensity");
  }

  /// k_t with the roundoff band [-1e-10, 0) clamped to zero.
  double intensity(const Hierarchy& in, Complex xi) const {
    double k = intensity_raw(in, xi);
    if (k < -1e-6) {
      std::ostringstream msg;
      msg << "jump_intensity: strongly negative intensity " << k << " (inconsistent state)";
      throw NumericError(msg.str());
    }
    if (k < 0.0 && k >= -1e-10) k = 0.0;
    return k;
  }

  /// k_t for the stepping kernels. First-order integration can push k through
  /// its zeros by an O(dt) transient (the matched-profile no-count branch has
  /// an exact tangency k = 0); scheduling and the compensator use the value
  /// floored at zero instead of failing there.
  double intensity_for_stepping(const Hierarchy& in, Complex xi) const {
    const double k = intensity_raw(in, xi);
    return k > 0.0 ? k : 0.0;
  }

  void jump(const Hierarchy& in, Complex xi, double threshold, Hierarchy& out) const {
    r10_ = in.rho01.adjoint();
    t1_.noalias() = l_ * in.rho;
    out.rho.noalias() = t1_ * ld_;
    t1_.noalias() = l_ * r10_;
    out.rho += std::conj(xi) * t1_;
    t1_.noalias() = in.rho01 * ld_;
    out.rho += xi * t1_;
    out.rho += std::norm(xi) * in.rho00;
    const double weight = checked_real(out.rho.trace(), "jump_update: weight");
    if (!(weight > threshold)) {
      std::ostringstream msg;
      msg << "jump_update: forbidden jump, intensity " << weight << " <= " << threshold;
      throw NumericError(msg.str());
    }
    t1_.noalias() = l_ * in.rho01;
    out.rho01.noalias() = t1_ * ld_;
    t1_.noalias() = l_ * in.rho00;
    out.rho01 += std::conj(xi) * t1_;
    t1_.noalias() = l_ * in.rho00;
    out.rho00.noalias() = t1_ * ld_;
    const double inv = 1.0 / weight;
    out.rho *= inv;
    out.rho01 *= inv;
    out.rho00 *= inv;
    hermitize(out.rho);
    hermitize(out.rho00);
  }

  double no_jump(const Hierarchy& in, Complex xi, double dt, bool renormalize,
                 Hierarchy& out) const {
    const double k = intensity_for_stepping(in, xi);
    if (!(dt * k < 0.2)) {
      std::ostringstream msg;
      msg << "no_jump_step: k dt = " << dt * k << " violates the step-size guard (< 0.2)";
      throw NumericError(msg.str());
    }
    r10_ = in.rho01.adjoint();
    // drho  = -i[H,rho] - 1/2{K,rho} - xi L^dag rho01 - xi^* rho10 L
    //         - |xi|^2 rho00 + k rho
    dissipator_free(in.rho, out.rho);
    t1_.noalias() = ld_ * in.rho01;
    out.rho -= xi * t1_;
    t1_.noalias() = r10_ * l_;
    out.rho -= std::conj(xi) * t1_;
    out.rho -= std::norm(xi) * in.rho00;
    out.rho += k * in.rho;
    out.rho *= dt;
    out.rho += in.rho;
    // drho01 = -i[H,rho01] - 1/2{K,rho01} - xi^* rho00 L + k rho01
    dissipator_free(in.rho01, out.rho01);
    t1_.noalias() = in.rho00 * l_;
    out.rho01 -= std::conj(xi) * t1_;
    out.rho01 += k * in.rho01;
    out.rho01 *= dt;
    out.rho01 += in.rho01;
    // drho00 = -i[H,rho00] - 1/2{K,rho00} + k rho00
    dissipator_free(in.rho00, out.rho00);
    out.rho00 += k * in.rho00;
    out.rho00 *= dt;
    out.rho00 += in.rho00;
    hermitize(out.rho);
    hermitize(out.rho00);
    if (renormalize) {
      const double tr = out.rho.trace().real();
      if (tr > 0.0) {
        const double inv = 1.0 / tr;
        out.rho *= inv;
        out.rho01 *= inv;
        out.rho00 *= inv;
      }
    }
    return k;
  }

  Complex rate_value(const Hierarchy& in, Complex xi) const {
    return trace_product(l_, in.rho) + trace_product(in.rho, ld_) +
           std::conj(xi) * std::conj(in.rho01.trace()) + xi * in.rho01.trace();
  }

  double rate(const Hierarchy& in, Complex xi) const {
    return checked_real(rate_value(in, xi), "homodyne_rate");
  }

  double diffusive(const Hierarchy& in, Complex xi, double dt, double dw, Hierarchy& out) const {
    const double r = rate(in, xi);
    master(in, xi, deriv_);
    r10_ = in.rho01.adjoint();
    // rho
    t1_.noalias() = l_ * in.rho;
    t2_.noalias() = in.rho * ld_;
    t1_ += t2_;
    t1_ += xi * in.rho01;
    t1_ += std::conj(xi) * r10_;
    t1_ -= r * in.rho;
    out.rho = in.rho + dt * deriv_.rho + dw * t1_;
    // rho01
    t1_.noalias() = l_ * in.rho01;
    t2_.noalias() = in.rho01 * ld_;
    t1_ += t2_;
    t1_ += std::conj(xi) * in.rho00;
    t1_ -= r * in.rho01;
    out.rho01 = in.rho01 + dt * deriv_.rho01 + dw * t1_;
    // rho00
    t1_.noalias() = l_ * in.rho00;
    t2_.noalias() = in.rho00 * ld_;
    t1_ += t2_;
    t1_ -= r * in.rho00;
    out.rho00 = in.rho00 + dt * deriv_.rho00 + dw * t1_;
    hermitize(out.rho);
    hermitize(out.rho00);
    return r;
  }

 private:
  // out = -i[H,x] - 1/2 {K,x}  (no feeding term)
  void dissipator_free(const Matrix& x, Matrix& out) const {
    t1_.noalias() = h_ * x;
    t2_.noalias() = x * h_;
    out = -imag_unit * (t1_ - t2_);
    t1_.noalias() = kk_ * x;
    t2_.noalias() = x * kk_;
    out -= 0.5 * (t1_ + t2_);
  }

  Matrix h_, l_, ld_, kk_;
  mutable Matrix t1_, t2_, r10_;
  mutable Hierarchy deriv_;
};

void axpy(Hierarchy& y, double a, const Hierarchy& x) {
  y.rho += a * x.rho;
  y.rho01 += a * x.rho01;
  y.rho00 += a * x.rho00;
}

}  // namespace

Hierarchy initial_hierarchy(const SystemModel& model) {
  Hierarchy h;
  h.rho = model.initial_density();
  h.rho00 = model.initial_density();
  h.rho01 = Matrix::Zero(model.dim(), model.dim());
  return h;
}

Hierarchy master_derivative(const SystemModel& model, const Hierarchy& h, Complex xi) {
  HierarchyDynamics dyn(model);
  Hierarchy out = initial_hierarchy(model);
  dyn.master(h, xi, out);
  return out;
}

MasterPath integrate_master(const SystemModel& model, const PhotonProfile& profile, double t_end,
                            double dt, long record_stride) {
  const long steps = whole_steps(t_end, dt);
  if (record_stride < 1) record_stride = 1;
  HierarchyDynamics dyn(model);

  Hierarchy y = initial_hierarchy(model);
  Hierarchy k1 = y, k2 = y, k3 = y, k4 = y, stage = y;

  MasterPath path;
  path.times.reserve(static_cast<size_t>(steps / record_stride) + 2);
  path.times.push_back(0.0);
  path.states.push_back(y);

  for (long m = 0; m < steps; ++m) {
    const double t = m * dt;
    dyn.master(y, profile.amplitude(t), k1);
    stage = y;
    axpy(stage, 0.5 * dt, k1);
    dyn.master(stage, profile.amplitude(t + 0.5 * dt), k2);
    stage = y;
    axpy(stage, 0.5 * dt, k2);
    dyn.master(stage, profile.amplitude(t + 0.5 * dt), k3);
    stage = y;
    axpy(stage, dt, k3);
    dyn.master(stage, profile.amplitude(t + dt), k4);
    axpy(y, dt / 6.0, k1);
    axpy(y, dt / 3.0, k2);
    axpy(y, dt / 3.0, k3);
    axpy(y, dt / 6.0, k4);

    const double drift = std::abs(y.rho.trace().real() - 1.0);
    if (drift > 1e-5) {
      std::ostringstream msg;
      msg << "integrate_master: trace drift " << drift << " at t = " << t + dt
          << " exceeds 1e-5; reduce dt";
      throw NumericError(msg.str());
    }
    if ((m + 1) % record_stride == 0 || m + 1 == steps) {
      path.times.push_back((m + 1) * dt);
      path.states.push_back(y);
    }
  }
  return path;
}

double jump_intensity(const SystemModel& model, const Hierarchy& h, Complex xi) {
  return HierarchyDynamics(model).intensity(h, xi);
}

Hierarchy jump_update(const SystemModel& model, const Hierarchy& h, Complex xi, double threshold) {
  HierarchyDynamics dyn(model);
  Hierarchy out = initial_hierarchy(model);
  dyn.jump(h, xi, threshold, out);
  return out;
}

Hierarchy no_jump_step(const SystemModel& model, const Hierarchy& h, Complex xi, double dt,
                       bool renormalize) {
  if (!(dt > 0.0)) throw std::invalid_argument("no_jump_step: dt must be > 0");
  HierarchyDynamics dyn(model);
  Hierarchy out = initial_hierarchy(model);
  dyn.no_jump(h, xi, dt, renormalize, out);
  return out;
}

double homodyne_rate(const SystemModel& model, const Hierarchy& h, Complex xi) {
  return HierarchyDynamics(model).rate(h, xi);
}

Hierarchy diffusive_step(const SystemModel& model, const Hierarchy& h, Complex xi, double dt,
                         double dw) {
  if (!(dt > 0.0)) throw std::invalid_argument("diffusive_step: dt must be > 0");
  HierarchyDynamics dyn(model);
  Hierarchy out = initial_hierarchy(model);
  dyn.diffusive(h, xi, dt, dw, out);
  return out;
}

JumpPath simulate_jump_trajectory(const SystemModel& model, const PhotonProfile& profile,
                                  double t_end, double dt, std::uint64_t seed,
                                  const TrajectoryOptions& opts) {
  const long steps = whole_steps(t_end, dt);
  const long stride = opts.record_stride < 1 ? 1 : opts.record_stride;
  HierarchyDynamics dyn(model);
  RandomStream rng(seed);

  JumpPath path;
  path.seed = seed;
  Hierarchy state = initial_hierarchy(model);
  Hierarchy next = state;
  long counts = 0;

  const auto record = [&](double t, const Hierarchy& h) {
    path.times.push_back(t);
    path.states.push_back(h);
    path.intensities.push_back(dyn.intensity_for_stepping(h, profile.amplitude(t)));
    path.counts.push_back(static_cast<double>(counts));
  };
  record(0.0, state);
  path.min_intensity = path.intensities.front();

  for (long m = 0; m < steps; ++m) {
    const double t = m * dt;
    const Complex xi = profile.amplitude(t);
    const double k_raw = dyn.intensity_raw(state, xi);
    if (k_raw < path.min_intensity) path.min_intensity = k_raw;
    const double k = k_raw < 0.0 ? 0.0 : k_raw;
    const double u = rng.uniform();
    if (u < k * dt) {
      dyn.jump(state, xi, 1e-12, next);
      ++counts;
      path.jump_times.push_back(t + dt);
    } else {
      dyn.no_jump(state, xi, dt, opts.renormalize, next);
    }
    std::swap(state, next);
    const bool done = opts.stop_after_jumps >= 0 && counts >= opts.stop_after_jumps;
    if ((m + 1) % stride == 0 || m + 1 == steps || done) record((m + 1) * dt, state);
    if (done) break;
  }
  return path;
}

DiffusivePath simulate_diffusive_trajectory(const SystemModel& model, const PhotonProfile& profile,
                                            double t_end, double dt, std::uint64_t seed,
                                            const TrajectoryOptions& opts) {
  const long steps = whole_steps(t_end, dt);
  const long stride = opts.record_stride < 1 ? 1 : opts.record_stride;
  HierarchyDynamics dyn(model);
  RandomStream rng(seed);
  const double root_dt = std::sqrt(dt);

  DiffusivePath path;
  path.seed = seed;
  Hierarchy state = initial_hierarchy(model);
  Hierarchy next = state;
  double w = 0.0;

  const auto record = [&](double t, const Hierarchy& h) {
    path.times.push_back(t);
    path.states.push_back(h);
    path.rates.push_back(dyn.rate(h, profile.amplitude(t)));
    path.wiener.push_back(w);
    const double lam = min_eigenvalue(h.rho);
    if (path.states.size() == 1 || lam < path.min_eigenvalue) path.min_eigenvalue = lam;
  };
  record(0.0, state);

  for (long m = 0; m < steps; ++m) {
    const double t = m * dt;
    const Complex xi = profile.amplitude(t);
    const double dw = root_dt * rng.normal();
    dyn.diffusive(state, xi, dt, dw, next);
    w += dw;
    std::swap(state, next);
    if (opts.renormalize) {
      const double tr = state.rho.trace().real();
      if (tr > 0.0) {
        state.rho /= tr;
        state.rho01 /= tr;
        state.rho00 /= tr;
      }
    }
    if ((m + 1) % stride == 0 || m + 1 == steps) record((m + 1) * dt, state);
  }
  return path;
}

namespace {

struct BlockAccumulator {
  std::vector<Hierarchy> sum;
  std::vector<RealTriple> sq_re, sq_im;
  long count = 0;

  void init(size_t samples, long d) {
    sum.resize(samples);
    sq_re.resize(samples);
    sq_im.resize(samples);
    for (size_t s = 0; s < samples; ++s) {
      sum[s].rho = Matrix::Zero(d, d);
      sum[s].rho01 = Matrix::Zero(d, d);
      sum[s].rho00 = Matrix::Zero(d, d);
      sq_re[s].rho = RealMatrix::Zero(d, d);
      sq_re[s].rho01 = RealMatrix::Zero(d, d);
      sq_re[s].rho00 = RealMatrix::Zero(d, d);
      sq_im[s] = sq_re[s];
    }
  }

  void add_state(size_t s, const Hierarchy& h) {
    sum[s].rho += h.rho;
    sum[s].rho01 += h.rho01;
    sum[s].rho00 += h.rho00;
    sq_re[s].rho += h.rho.real().cwiseProduct(h.rho.real());
    sq_re[s].rho01 += h.rho01.real().cwiseProduct(h.rho01.real());
    sq_re[s].rho00 += h.rho00.real().cwiseProduct(h.rho00.real());
    sq_im[s].rho += h.rho.imag().cwiseProduct(h.rho.imag());
    sq_im[s].rho01 += h.rho01.imag().cwiseProduct(h.rho01.imag());
    sq_im[s].rho00 += h.rho00.imag().cwiseProduct(h.rho00.imag());
  }

  void merge(const BlockAccumulator& other) {
    for (size_t s = 0; s < sum.size(); ++s) {
      sum[s].rho += other.sum[s].rho;
      sum[s].rho01 += other.sum[s].rho01;
      sum[s].rho00 += other.sum[s].rho00;
      sq_re[s].rho += other.sq_re[s].rho;
      sq_re[s].rho01 += other.sq_re[s].rho01;
      sq_re[s].rho00 += other.sq_re[s].rho00;
      sq_im[s].rho += other.sq_im[s].rho;
      sq_im[s].rho01 += other.sq_im[s].rho01;
      sq_im[s].rho00 += other.sq_im[s].rho00;
    }
    count += other.count;
  }
};

RealMatrix stderr_from_sums(const RealMatrix& sq, const Matrix& sum_c, bool imag_part, long n) {
  // per-component sample variance -> standard error of the mean
  RealMatrix mean = imag_part ? (sum_c.imag() / double(n)).eval() : (sum_c.real() / double(n)).eval();
  RealMatrix var = (sq - double(n) * mean.cwiseProduct(mean)) / double(n > 1 ? n - 1 : 1);
  return (var.cwiseMax(0.0) / double(n)).cwiseSqrt();
}

}  // namespace

AveragedPath monte_carlo_average(UnravelingKind kind, const SystemModel& model,
                                 const PhotonProfile& profile, double t_end, double dt, long n,
                                 std::uint64_t base_seed, int threads, long record_stride,
                                 bool renormalize) {
  if (n < 1) throw std::invalid_argument("monte_carlo_average: need at least one trajectory");
  const long block_size = 32;
  const long n_blocks = (n + block_size - 1) / block_size;
  const long d = model.dim();

  TrajectoryOptions opts;
  opts.record_stride = record_stride;
  opts.renormalize = renormalize;

  // Establish the sample grid from one dry run of the recording logic.
  std::vector<double> times;
  {
    const long steps = whole_steps(t_end, dt);
    const long stride = record_stride < 1 ? 1 : record_stride;
    times.push_back(0.0);
    for (long m = 0; m < steps; ++m) {
      if ((m + 1) % stride == 0 || m + 1 == steps) times.push_back((m + 1) * dt);
    }
  }
  const size_t samples = times.size();

  std::vector<BlockAccumulator> blocks(static_cast<size_t>(n_blocks));
  parallel_blocks(n_blocks, threads, [&](long b) {
    BlockAccumulator& acc = blocks[static_cast<size_t>(b)];
    acc.init(samples, d);
    const long lo = b * block_size;
    const long hi = std::min(n, lo + block_size);
    for (long i = lo; i < hi; ++i) {
      const std::uint64_t seed = RandomStream::for_trajectory(base_seed, static_cast<std::uint64_t>(i)).bits();
      if (kind == UnravelingKind::jump) {
        const JumpPath path = simulate_jump_trajectory(model, profile, t_end, dt, seed, opts);
        for (size_t s = 0; s < samples; ++s) acc.add_state(s, path.states[s]);
      } else {
        const DiffusivePath path =
            simulate_diffusive_trajectory(model, profile, t_end, dt, seed, opts);
        for (size_t s = 0; s < samples; ++s) acc.add_state(s, path.states[s]);
      }
      ++acc.count;
    }
  });

  // Pairwise reduction over block partials, in index order.
  std::vector<BlockAccumulator> level = std::move(blocks);
  while (level.size() > 1) {
    std::vector<BlockAccumulator> merged;
    merged.reserve((level.size() + 1) / 2);
    for (size_t i = 0; i + 1 < level.size(); i += 2) {
      level[i].merge(level[i + 1]);
      merged.push_back(std::move(level[i]));
    }
    if (level.size() % 2 == 1) merged.push_back(std::move(level.back()));
    level = std::move(merged);
  }
  const BlockAccumulator& total = level.front();

  AveragedPath out;
  out.times = std::move(times);
  out.trajectories = total.count;
  out.base_seed = base_seed;
  out.mean.resize(samples);
  out.stderr_real.resize(samples);
  out.stderr_imag.resize(samples);
  for (size_t s = 0; s < samples; ++s) {
    out.mean[s].rho = total.sum[s].rho / double(n);
    out.mean[s].rho01 = total.sum[s].rho01 / double(n);
    out.mean[s].rho00 = total.sum[s].rho00 / double(n);
    out.stderr_real[s].rho = stderr_from_sums(total.sq_re[s].rho, total.sum[s].rho, false, n);
    out.stderr_real[s].rho01 = stderr_from_sums(total.sq_re[s].rho01, total.sum[s].rho01, false, n);
    out.stderr_real[s].rho00 = stderr_from_sums(total.sq_re[s].rho00, total.sum[s].rho00, false, n);
    out.stderr_imag[s].rho = stderr_from_sums(total.sq_im[s].rho, total.sum[s].rho, true, n);
    out.stderr_imag[s].rho01 = stderr_from_sums(total.sq_im[s].rho01, total.sum[s].rho01, true, n);
    out.stderr_imag[s].rho00 = stderr_from_sums(total.sq_im[s].rho00, total.sum[s].rho00, true, n);
  }
  return out;
}

}  // namespace spqt

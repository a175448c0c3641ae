#include "spqt/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "spqt/errors.hpp"
#include "spqt/oracles.hpp"
#include "spqt/rng.hpp"
#include "spqt/version.hpp"

namespace spqt {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw ValidationError("config: field '" + where + "': " + what);
}

const json& require_field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) config_error(where + key, "missing required field");
  return j.at(key);
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) config_error(where, "expected a number");
  return j.get<double>();
}

double positive_number(const json& j, const std::string& where) {
  const double v = as_number(j, where);
  if (!(v > 0.0)) config_error(where, "must be > 0");
  return v;
}

Complex parse_complex(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    config_error(where, "expected a [re, im] pair");
  }
  return Complex{j[0].get<double>(), j[1].get<double>()};
}

Matrix parse_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) config_error(where, "expected a nested array of [re, im] pairs");
  const size_t rows = j.size();
  size_t cols = 0;
  Matrix m;
  for (size_t r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array() || row.empty()) config_error(where, "expected rectangular rows");
    if (r == 0) {
      cols = row.size();
      m.resize(static_cast<long>(rows), static_cast<long>(cols));
    } else if (row.size() != cols) {
      config_error(where, "rows have inconsistent lengths");
    }
    for (size_t c = 0; c < cols; ++c) {
      m(static_cast<long>(r), static_cast<long>(c)) =
          parse_complex(row[c], where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  return m;
}

Vector parse_vector(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) config_error(where, "expected an array of [re, im] pairs");
  Vector v(static_cast<long>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    v(static_cast<long>(i)) = parse_complex(j[i], where + "[" + std::to_string(i) + "]");
  }
  return v;
}

SystemModel parse_model(const json& j) {
  const Matrix h = parse_matrix(require_field(j, "hamiltonian", "model."), "model.hamiltonian");
  const Matrix l = parse_matrix(require_field(j, "coupling", "model."), "model.coupling");
  if (j.contains("dim") && j.at("dim").get<long>() != h.rows()) {
    config_error("model.dim", "does not match the hamiltonian dimension");
  }
  const json& init = require_field(j, "initial", "model.");
  try {
    if (init.contains("psi")) {
      return SystemModel::pure(h, l, parse_vector(init.at("psi"), "model.initial.psi"));
    }
    if (init.contains("rho")) {
      return SystemModel::mixed(h, l, parse_matrix(init.at("rho"), "model.initial.rho"));
    }
  } catch (const std::invalid_argument& e) {
    config_error("model", e.what());
  }
  config_error("model.initial", "expected 'psi' or 'rho'");
}

double profile_param(const json& j, const char* key, const std::string& where) {
  return as_number(require_field(j, key, where), where + key);
}

void parse_profile(const json& j, RunConfig& config) {
  if (j.contains("samples")) {
    const json& s = j.at("samples");
    const double tau = positive_number(require_field(s, "tau", "profile.samples."), "profile.samples.tau");
    const json& vals = require_field(s, "values", "profile.samples.");
    if (!vals.is_array() || vals.empty()) config_error("profile.samples.values", "expected an array");
    std::vector<Complex> values;
    values.reserve(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) {
      values.push_back(parse_complex(vals[i], "profile.samples.values[" + std::to_string(i) + "]"));
    }
    const double remainder = s.contains("remainder") ? as_number(s.at("remainder"), "profile.samples.remainder") : 0.0;
    const bool normalize = s.contains("normalize") && s.at("normalize").get<bool>();
    config.sampled_profile = discretized_from_samples(values, tau, remainder, normalize);
    return;
  }
  const std::string name = require_field(j, "name", "profile.").get<std::string>();
  if (name == "matched_exponential") {
    config.profile = matched_exponential_profile(profile_param(j, "gamma_p", "profile."));
  } else if (name == "constant_window") {
    config.profile =
        constant_window_profile(profile_param(j, "t0", "profile."), profile_param(j, "t1", "profile."));
  } else if (name == "gaussian") {
    config.profile =
        gaussian_profile(profile_param(j, "t0", "profile."), profile_param(j, "sigma", "profile."));
  } else if (name == "vacuum") {
    config.profile = vacuum_profile();
  } else {
    config_error("profile.name",
                 "unknown profile '" + name +
                     "' (expected matched_exponential, constant_window, gaussian or vacuum)");
  }
}

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw ValidationError("cannot open output file " + path.string());
    for (size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

void append_matrix_headers(std::vector<std::string>& header, const std::string& prefix, long d) {
  for (long r = 0; r < d; ++r) {
    for (long c = 0; c < d; ++c) {
      header.push_back(prefix + "_" + std::to_string(r) + std::to_string(c) + "_re");
      header.push_back(prefix + "_" + std::to_string(r) + std::to_string(c) + "_im");
    }
  }
}

void append_matrix_cells(std::vector<std::string>& cells, const Matrix& m) {
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) {
      cells.push_back(format_full(m(r, c).real()));
      cells.push_back(format_full(m(r, c).imag()));
    }
  }
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c) {
      row.push_back(json::array({m(r, c).real(), m(r, c).imag()}));
    }
    rows.push_back(row);
  }
  return rows;
}

json real_matrix_to_json(const RealMatrix& m) {
  json rows = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json hierarchy_to_json(const Hierarchy& h) {
  return json{{"rho", matrix_to_json(h.rho)},
              {"rho01", matrix_to_json(h.rho01)},
              {"rho00", matrix_to_json(h.rho00)}};
}

json real_triple_to_json(const RealTriple& t) {
  return json{{"rho", real_matrix_to_json(t.rho)},
              {"rho01", real_matrix_to_json(t.rho01)},
              {"rho00", real_matrix_to_json(t.rho00)}};
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output file " + path.string());
  out << doc.dump(2) << '\n';
}

const SystemModel& need_model(const RunConfig& config) {
  if (!config.model) config_error("model", "required for this experiment");
  return *config.model;
}

const PhotonProfile& need_profile(const RunConfig& config) {
  if (!config.profile) {
    config_error("profile", "this experiment needs an analytic profile, not tabulated samples");
  }
  return *config.profile;
}

double need_value(const std::optional<double>& v, const char* where) {
  if (!v) config_error(where, "required for this experiment");
  return *v;
}

DiscretizedProfile resolve_discrete_profile(const RunConfig& config) {
  if (config.sampled_profile) return *config.sampled_profile;
  const PhotonProfile& profile = need_profile(config);
  DiscretizeOptions opts;
  opts.allow_unnormalized = config.allow_unnormalized_profile;
  return discretize_profile(profile, need_value(config.tau, "discretization.tau"),
                            need_value(config.horizon, "discretization.horizon"), opts);
}

// ---------------------------------------------------------------------------
// experiment runners

void run_master(const RunConfig& config, const std::filesystem::path& dir,
                std::vector<std::string>& files) {
  const SystemModel& model = need_model(config);
  const MasterPath path =
      integrate_master(model, need_profile(config), need_value(config.t_end, "continuum.t_end"),
                       need_value(config.dt, "continuum.dt"), config.record_stride);
  std::vector<std::string> header{"t"};
  append_matrix_headers(header, "rho", model.dim());
  header.push_back("trace_re");
  CsvWriter csv(dir / "master.csv", header);
  for (size_t i = 0; i < path.times.size(); ++i) {
    std::vector<std::string> cells{format_full(path.times[i])};
    append_matrix_cells(cells, path.states[i].rho);
    cells.push_back(format_full(path.states[i].rho.trace().real()));
    csv.row(cells);
  }
  files.push_back("master.csv");
}

void run_unraveling(const RunConfig& config, UnravelingKind kind,
                    const std::filesystem::path& dir, std::vector<std::string>& files) {
  const SystemModel& model = need_model(config);
  const PhotonProfile& profile = need_profile(config);
  const double t_end = need_value(config.t_end, "continuum.t_end");
  const double dt = need_value(config.dt, "continuum.dt");

  TrajectoryOptions opts;
  opts.record_stride = config.record_stride;
  opts.renormalize = config.renormalize;
  const std::uint64_t seed0 = RandomStream::for_trajectory(config.seed, 0).bits();

  std::vector<std::string> header{"t"};
  append_matrix_headers(header, "rho", model.dim());
  header.push_back("trace_re");
  if (kind == UnravelingKind::jump) {
    header.push_back("k");
    header.push_back("counts");
    const JumpPath path = simulate_jump_trajectory(model, profile, t_end, dt, seed0, opts);
    CsvWriter csv(dir / "trajectory.csv", header);
    for (size_t i = 0; i < path.times.size(); ++i) {
      std::vector<std::string> cells{format_full(path.times[i])};
      append_matrix_cells(cells, path.states[i].rho);
      cells.push_back(format_full(path.states[i].rho.trace().real()));
      cells.push_back(format_full(path.intensities[i]));
      cells.push_back(format_full(path.counts[i]));
      csv.row(cells);
    }
  } else {
    header.push_back("r");
    header.push_back("w");
    const DiffusivePath path = simulate_diffusive_trajectory(model, profile, t_end, dt, seed0, opts);
    CsvWriter csv(dir / "trajectory.csv", header);
    for (size_t i = 0; i < path.times.size(); ++i) {
      std::vector<std::string> cells{format_full(path.times[i])};
      append_matrix_cells(cells, path.states[i].rho);
      cells.push_back(format_full(path.states[i].rho.trace().real()));
      cells.push_back(format_full(path.rates[i]));
      cells.push_back(format_full(path.wiener[i]));
      csv.row(cells);
    }
  }
  files.push_back("trajectory.csv");

  if (config.trajectories > 1) {
    const AveragedPath avg =
        monte_carlo_average(kind, model, profile, t_end, dt, config.trajectories, config.seed,
                            config.threads, config.record_stride, config.renormalize);
    json batch;
    batch["kind"] = (kind == UnravelingKind::jump) ? "jump" : "diffusive";
    batch["trajectories"] = avg.trajectories;
    batch["base_seed"] = avg.base_seed;
    batch["times"] = avg.times;
    json mean = json::array(), se_re = json::array(), se_im = json::array();
    for (size_t i = 0; i < avg.mean.size(); ++i) {
      mean.push_back(hierarchy_to_json(avg.mean[i]));
      se_re.push_back(real_triple_to_json(avg.stderr_real[i]));
      se_im.push_back(real_triple_to_json(avg.stderr_imag[i]));
    }
    batch["mean"] = mean;
    batch["stderr_re"] = se_re;
    batch["stderr_im"] = se_im;
    write_json_file(dir / "batch.json", batch);
    files.push_back("batch.json");
  }
}

void run_discrete(const RunConfig& config, MeasurementKind kind, const std::filesystem::path& dir,
                  std::vector<std::string>& files) {
  const SystemModel& model = need_model(config);
  const DiscretizedProfile dprofile = resolve_discrete_profile(config);
  const long steps = dprofile.size();
  const std::uint64_t seed0 = RandomStream::for_trajectory(config.seed, 0).bits();
  const DiscreteTrajectory traj = sample_trajectory(model, dprofile, kind, steps, seed0);

  std::vector<std::string> header{"step", "time", "outcome", "probability", "p_future", "p_consumed"};
  for (long i = 0; i < model.dim(); ++i) header.push_back("pop_" + std::to_string(i));
  CsvWriter csv(dir / "trajectory.csv", header);
  for (size_t j = 0; j < traj.states.size(); ++j) {
    std::vector<std::string> cells;
    cells.push_back(std::to_string(j));
    cells.push_back(format_full(static_cast<double>(j) * dprofile.tau));
    cells.push_back(j == 0 ? "" : std::to_string(traj.outcomes[j - 1]));
    cells.push_back(format_full(std::exp(traj.log_probability[j])));
    cells.push_back(format_full(traj.scenarios[j].future_photon));
    cells.push_back(format_full(traj.scenarios[j].consumed_photon));
    const Matrix& state = traj.states[j];
    const double trace = state.trace().real();
    for (long i = 0; i < model.dim(); ++i) {
      cells.push_back(format_full(state(i, i).real() / trace));
    }
    csv.row(cells);
  }
  files.push_back("trajectory.csv");

  if (config.enumerate) {
    const CollisionBlocks blocks = build_collision_exact(model, dprofile.tau);
    const auto table = enumerate_trajectories(model.psi(), blocks, dprofile,
                                              std::min<long>(steps, 20), kind);
    json doc = json::object();
    for (const auto& [record, prob] : table) doc[record] = prob;
    write_json_file(dir / "enumeration.json", doc);
    files.push_back("enumeration.json");
  }
}

void run_counting_stats(const RunConfig& config, const std::filesystem::path& dir,
                        std::vector<std::string>& files) {
  write_json_file(dir / "stats.json", stats_report(config));
  files.push_back("stats.json");
  if (config.scan_points > 0 && !config.t_grid.empty()) {
    const SystemModel& model = need_model(config);
    const PhotonProfile& profile = need_profile(config);
    const double t = config.t_grid.back();
    CsvWriter csv(dir / "density_scan.csv", {"t1", "density"});
    for (long i = 0; i <= config.scan_points; ++i) {
      const double t1 = t * static_cast<double>(i) / static_cast<double>(config.scan_points);
      const double p =
          exclusive_density(model, profile, CountRecord{{t1}, t}, config.quadrature);
      csv.row({format_full(t1), format_full(p)});
    }
    files.push_back("density_scan.csv");
  }
}

void run_oracle(const RunConfig& config, const std::filesystem::path& dir,
                std::vector<std::string>& files) {
  TwoLevelAtomSpec spec;
  spec.gamma = config.oracle_gamma;
  spec.profile = need_profile(config);
  json rows = json::array();
  for (double t : config.t_grid) {
    rows.push_back(json{{"t", t},
                        {"no_count_probability", tla_no_count_probability(spec, t)},
                        {"excitation_probability", tla_excitation_probability(spec, t)},
                        {"apriori_state", matrix_to_json(tla_apriori_state(spec, t))}});
  }
  write_json_file(dir / "oracle.json", json{{"gamma", spec.gamma}, {"rows", rows}});
  files.push_back("oracle.json");
}

void run_convergence(const RunConfig& config, const std::filesystem::path& dir,
                     std::vector<std::string>& files) {
  write_json_file(dir / "convergence.json", convergence_report(config));
  files.push_back("convergence.json");
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {
      "discrete-counting", "discrete-homodyne", "jump",       "diffusive",
      "master",            "counting-stats",    "convergence", "oracle"};
  return kinds;
}

RunConfig parse_config_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("config: expected a JSON object");
  RunConfig config;
  config.raw = doc;

  const json& kind = require_field(doc, "experiment", "");
  if (!kind.is_string()) config_error("experiment", "expected a string");
  config.experiment = kind.get<std::string>();
  bool known = false;
  for (const auto& k : experiment_kinds()) known = known || (k == config.experiment);
  if (!known) config_error("experiment", "unknown experiment kind '" + config.experiment + "'");

  if (doc.contains("model")) config.model = parse_model(doc.at("model"));
  if (doc.contains("profile")) parse_profile(doc.at("profile"), config);

  if (doc.contains("discretization")) {
    const json& d = doc.at("discretization");
    if (d.contains("tau")) config.tau = positive_number(d.at("tau"), "discretization.tau");
    if (d.contains("horizon")) config.horizon = positive_number(d.at("horizon"), "discretization.horizon");
  }
  if (doc.contains("continuum")) {
    const json& c = doc.at("continuum");
    if (c.contains("dt")) config.dt = positive_number(c.at("dt"), "continuum.dt");
    if (c.contains("t_end")) config.t_end = positive_number(c.at("t_end"), "continuum.t_end");
  }
  if (doc.contains("trajectories")) {
    config.trajectories = doc.at("trajectories").get<long>();
    if (config.trajectories < 1) config_error("trajectories", "must be >= 1");
  }
  if (doc.contains("seed")) config.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("output_dir")) config.output_dir = doc.at("output_dir").get<std::string>();
  if (doc.contains("flags")) {
    const json& f = doc.at("flags");
    if (f.contains("renormalize")) config.renormalize = f.at("renormalize").get<bool>();
    if (f.contains("allow_unnormalized_profile")) {
      config.allow_unnormalized_profile = f.at("allow_unnormalized_profile").get<bool>();
    }
    if (f.contains("enumerate")) config.enumerate = f.at("enumerate").get<bool>();
  }
  if (doc.contains("counting_stats")) {
    const json& s = doc.at("counting_stats");
    if (s.contains("t_grid")) {
      config.t_grid.clear();
      for (const auto& v : s.at("t_grid")) config.t_grid.push_back(as_number(v, "counting_stats.t_grid"));
      if (config.t_grid.empty()) config_error("counting_stats.t_grid", "must not be empty");
    }
    if (s.contains("scan_points")) config.scan_points = s.at("scan_points").get<long>();
  }
  if (doc.contains("oracle")) {
    const json& o = doc.at("oracle");
    if (o.contains("gamma")) config.oracle_gamma = positive_number(o.at("gamma"), "oracle.gamma");
    if (o.contains("t_grid")) {
      config.t_grid.clear();
      for (const auto& v : o.at("t_grid")) config.t_grid.push_back(as_number(v, "oracle.t_grid"));
    }
  }
  if (doc.contains("record_stride")) {
    config.record_stride = doc.at("record_stride").get<long>();
    if (config.record_stride < 1) config_error("record_stride", "must be >= 1");
  }
  if (doc.contains("threads")) {
    config.threads = doc.at("threads").get<int>();
    if (config.threads < 1) config_error("threads", "must be >= 1");
  }
  if (doc.contains("quadrature")) {
    const json& q = doc.at("quadrature");
    if (q.contains("points_one")) config.quadrature.points_one = q.at("points_one").get<int>();
    if (q.contains("points_two")) config.quadrature.points_two = q.at("points_two").get<int>();
  }
  config.quadrature.threads = config.threads;

  if (config.profile && !config.allow_unnormalized_profile) {
    try {
      validate_profile(*config.profile);
    } catch (const ValidationError& e) {
      config_error("profile", e.what());
    }
  }
  return config;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return parse_config_json(doc);
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read back output file " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

RunOutput run_experiment(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  RunOutput out;
  out.out_dir = config.output_dir;
  std::filesystem::create_directories(out.out_dir);

  if (config.experiment == "master") {
    run_master(config, out.out_dir, out.files);
  } else if (config.experiment == "jump") {
    run_unraveling(config, UnravelingKind::jump, out.out_dir, out.files);
  } else if (config.experiment == "diffusive") {
    run_unraveling(config, UnravelingKind::diffusive, out.out_dir, out.files);
  } else if (config.experiment == "discrete-counting") {
    run_discrete(config, MeasurementKind::counting, out.out_dir, out.files);
  } else if (config.experiment == "discrete-homodyne") {
    run_discrete(config, MeasurementKind::homodyne, out.out_dir, out.files);
  } else if (config.experiment == "counting-stats") {
    run_counting_stats(config, out.out_dir, out.files);
  } else if (config.experiment == "convergence") {
    run_convergence(config, out.out_dir, out.files);
  } else if (config.experiment == "oracle") {
    run_oracle(config, out.out_dir, out.files);
  } else {
    config_error("experiment", "unknown experiment kind");
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json manifest;
  manifest["config"] = config.raw;
  manifest["seed"] = config.seed;
  manifest["version"] = kVersion;
  manifest["wall_time_s"] = wall;
  json entries = json::array();
  for (const auto& name : out.files) {
    entries.push_back(json{{"name", name}, {"checksum", file_checksum(out.out_dir / name)}});
  }
  manifest["files"] = entries;
  write_json_file(out.out_dir / "manifest.json", manifest);
  out.files.push_back("manifest.json");
  return out;
}

nlohmann::json convergence_report(const RunConfig& config) {
  const SystemModel& model = need_model(config);
  if (!model.is_pure()) {
    throw ValidationError("convergence: requires a pure initial state");
  }
  const PhotonProfile& profile = need_profile(config);
  const double tau0 = need_value(config.tau, "discretization.tau");
  const double t_end = need_value(config.t_end, "continuum.t_end");

  // Continuum reference: the no-count conditional state from the propagator
  // quadrature, normalized.
  QuadratureOptions fine = config.quadrature;
  fine.points_one = std::max(fine.points_one, 4096);
  const DensityPair ref_pair = no_count_pair(model, profile, t_end, fine);
  Matrix ref = profile.tail(t_end) * (ref_pair.alpha_bar * ref_pair.alpha_bar.adjoint()) +
               ref_pair.beta_bar * ref_pair.beta_bar.adjoint();
  const double ref_trace = ref.trace().real();
  if (!(ref_trace > 0.0)) throw NumericError("convergence: reference state has zero trace");
  ref /= ref_trace;

  std::vector<double> taus, errors;
  for (int level = 0; level < 4; ++level) {
    const double tau = tau0 / static_cast<double>(1 << level);
    DiscretizeOptions opts;
    opts.allow_unnormalized = true;  // the window [0, t_end) need not hold the whole packet
    const DiscretizedProfile dprofile = discretize_profile(profile, tau, t_end, opts);
    const CollisionBlocks blocks = build_collision_exact(model, tau);
    ConditionalPair pair = initial_pair(model.psi(), dprofile);
    const long steps = dprofile.size();
    for (long jstep = 0; jstep < steps; ++jstep) {
      pair = counting_step(pair, blocks, dprofile.value(jstep), 0);
    }
    const double trace = pair_trace(pair);
    if (!(trace > 0.0)) throw NumericError("convergence: no-count branch has zero trace");
    const Matrix state = posterior_density(pair) / trace;
    taus.push_back(tau);
    errors.push_back((state - ref).norm());
  }

  // Least-squares slope of log(error) against log(tau).
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(taus.size());
  for (size_t i = 0; i < taus.size(); ++i) {
    const double x = std::log(taus[i]);
    const double y = std::log(std::max(errors[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double order = (n * sxy - sx * sy) / (n * sxx - sx * sx);

  json report;
  report["t"] = t_end;
  report["taus"] = taus;
  report["errors"] = errors;
  report["fitted_order"] = order;
  report["reference"] = "propagator-quadrature";
  return report;
}

nlohmann::json stats_report(const RunConfig& config) {
  const SystemModel& model = need_model(config);
  const PhotonProfile& profile = need_profile(config);
  json rows = json::array();
  for (double t : config.t_grid) {
    const QuadratureResult p0 = prob_m_counts(model, profile, t, 0, config.quadrature);
    const QuadratureResult p1 = prob_m_counts(model, profile, t, 1, config.quadrature);
    const QuadratureResult p2 = prob_m_counts(model, profile, t, 2, config.quadrature);
    const double err = p0.error_estimate + p1.error_estimate + p2.error_estimate;
    rows.push_back(json{{"t", t},
                        {"P0", p0.value},
                        {"P1", p1.value},
                        {"P2", p2.value},
                        {"quadrature_error", err},
                        {"normalization_residual", std::abs(p0.value + p1.value + p2.value - 1.0)}});
  }
  return json{{"rows", rows}};
}

}  // namespace spqt

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spqt/continuous.hpp"
#include "spqt/counting_stats.hpp"
#include "spqt/discrete.hpp"
#include "spqt/model.hpp"

namespace spqt {

/// Parsed and validated run configuration. A config is a single JSON
/// document; matrices are nested arrays of [re, im] pairs.
struct RunConfig {
  std::optional<SystemModel> model;
  std::optional<PhotonProfile> profile;           // analytic profile
  std::optional<DiscretizedProfile> sampled_profile;  // tabulated samples

  std::optional<double> tau, horizon;  // discretization
  std::optional<double> dt, t_end;     // continuum

  std::string experiment;
  long trajectories = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool renormalize = false;
  bool allow_unnormalized_profile = false;
  bool enumerate = false;

  std::vector<double> t_grid = {0.5, 1.0, 2.0, 5.0};
  long scan_points = 0;
  double oracle_gamma = 1.0;

  long record_stride = 1;
  int threads = 1;
  QuadratureOptions quadrature;

  nlohmann::json raw;  // echoed into the manifest
};

/// Known experiment kinds, in the order accepted by the schema.
const std::vector<std::string>& experiment_kinds();

/// Parses and validates a config document. Throws ValidationError with the
/// offending field named.
RunConfig parse_config_json(const nlohmann::json& doc);
RunConfig parse_config_file(const std::string& path);

struct RunOutput {
  std::filesystem::path out_dir;
  std::vector<std::string> files;  // data files + manifest.json
};

/// Runs the configured experiment, writes its data files and a manifest
/// (config echo, seed, version, wall time, file checksums). Identical config
/// and seed produce byte-identical data files; the manifest records wall time
/// and is therefore excluded from that guarantee.
RunOutput run_experiment(const RunConfig& config);

/// Discrete exact filter at tau, tau/2, tau/4, tau/8 against the continuum
/// no-count state, with errors and the fitted convergence order.
nlohmann::json convergence_report(const RunConfig& config);

/// P_0^t(m) table over the configured t grid with quadrature error estimates
/// and normalization residuals.
nlohmann::json stats_report(const RunConfig& config);

/// FNV-1a 64-bit checksum of a file, as a hex string.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace spqt

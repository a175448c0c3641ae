// Command-line front end: configuration ingestion, experiment orchestration
// and data-file emission. Exit codes: 0 success, 2 validation, 3 numeric.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spqt/errors.hpp"
#include "spqt/experiments.hpp"
#include "spqt/oracles.hpp"
#include "spqt/version.hpp"

namespace {

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  bool renormalize = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "Override the base seed from the config");
  cmd->add_option("--out-dir", flags.out_dir, "Override the output directory");
  cmd->add_option("--threads", flags.threads, "Worker threads for trajectory batches");
  cmd->add_flag("--renormalize", flags.renormalize, "Renormalize the conditional state each step");
}

spqt::RunConfig load_config(const std::string& path, const CommonFlags& flags) {
  spqt::RunConfig config = spqt::parse_config_file(path);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.out_dir) {
    config.output_dir = *flags.out_dir;
  } else if (const char* env = std::getenv("SPQT_OUT_DIR")) {
    config.output_dir = env;
  }
  if (flags.threads) {
    config.threads = *flags.threads;
  } else if (const char* env = std::getenv("SPQT_THREADS")) {
    config.threads = std::max(1, std::atoi(env));
  }
  if (flags.renormalize) config.renormalize = true;
  config.quadrature.threads = config.threads;
  return config;
}

void require_kind(const spqt::RunConfig& config, const std::string& kind) {
  if (config.experiment != kind) {
    throw spqt::ValidationError("config: field 'experiment': expected '" + kind +
                                "' for this subcommand, got '" + config.experiment + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum-trajectory simulator for single-photon input fields"};
  app.set_version_flag("--version", spqt::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  CommonFlags flags;

  CLI::App* cmd_run = app.add_subcommand("run", "Run the experiment described by a config file");
  cmd_run->add_option("config", config_path, "JSON config file")->required();
  add_common_flags(cmd_run, flags);

  CLI::App* cmd_conv =
      app.add_subcommand("convergence", "Discrete-to-continuum convergence report");
  cmd_conv->add_option("config", config_path, "JSON config file")->required();
  add_common_flags(cmd_conv, flags);

  CLI::App* cmd_stats = app.add_subcommand("counting-stats", "Photon counting statistics table");
  cmd_stats->add_option("config", config_path, "JSON config file")->required();
  add_common_flags(cmd_stats, flags);

  CLI::App* cmd_oracle = app.add_subcommand("oracle", "Analytic reference values");
  CLI::App* cmd_tla = cmd_oracle->add_subcommand("tla", "Two-level-atom closed forms");
  double gamma = 1.0, gamma_p = 1.0, t0 = 0.0, t1 = 1.0, sigma = 1.0;
  std::string profile_name = "matched_exponential";
  std::vector<double> times = {0.5, 1.0, 2.0, 5.0};
  cmd_tla->add_option("--gamma", gamma, "Atomic decay rate");
  cmd_tla->add_option("--profile", profile_name,
                      "matched_exponential | constant_window | gaussian | vacuum");
  cmd_tla->add_option("--gamma-p", gamma_p, "Profile rate (matched_exponential)");
  cmd_tla->add_option("--t0", t0, "Window start / pulse center");
  cmd_tla->add_option("--t1", t1, "Window end (constant_window)");
  cmd_tla->add_option("--sigma", sigma, "Pulse width (gaussian)");
  cmd_tla->add_option("--t", times, "Evaluation times");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (cmd_run->parsed()) {
      spqt::run_experiment(load_config(config_path, flags));
    } else if (cmd_conv->parsed()) {
      spqt::RunConfig config = load_config(config_path, flags);
      require_kind(config, "convergence");
      spqt::run_experiment(config);
    } else if (cmd_stats->parsed()) {
      spqt::RunConfig config = load_config(config_path, flags);
      require_kind(config, "counting-stats");
      spqt::run_experiment(config);
    } else if (cmd_tla->parsed()) {
      spqt::TwoLevelAtomSpec spec;
      spec.gamma = gamma;
      if (profile_name == "matched_exponential") {
        spec.profile = spqt::matched_exponential_profile(gamma_p);
      } else if (profile_name == "constant_window") {
        spec.profile = spqt::constant_window_profile(t0, t1);
      } else if (profile_name == "gaussian") {
        spec.profile = spqt::gaussian_profile(t0, sigma);
      } else if (profile_name == "vacuum") {
        spec.profile = spqt::vacuum_profile();
      } else {
        throw spqt::ValidationError("oracle tla: unknown profile '" + profile_name + "'");
      }
      nlohmann::json rows = nlohmann::json::array();
      for (double t : times) {
        rows.push_back(nlohmann::json{
            {"t", t},
            {"no_count_probability", spqt::tla_no_count_probability(spec, t)},
            {"excitation_probability", spqt::tla_excitation_probability(spec, t)}});
      }
      std::cout << nlohmann::json{{"gamma", gamma}, {"rows", rows}}.dump(2) << "\n";
    }
  } catch (const spqt::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const spqt::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

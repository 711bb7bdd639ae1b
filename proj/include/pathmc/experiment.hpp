#pragma once

#include <pathmc/greeks.hpp>

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace pathmc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat INI-style configuration: [section] headers, key = value lines,
/// '#' or ';' comments.
class RawConfig {
 public:
  using Section = std::map<std::string, std::string>;

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  std::string require(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& section, const std::string& key,
                       std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key) const;

  std::map<std::string, Section> sections;
};

RawConfig parse_config_text(std::istream& in);
RawConfig load_config_file(const std::string& path);

/// CLI flags layered over the config.
struct ExperimentOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

/// Builders shared by the runner and the tests.
VolatilityModel model_from_config(const RawConfig& cfg);
Contract contract_from_config(const RawConfig& cfg);
McParams mc_from_config(const RawConfig& cfg, const ExperimentOverrides& ovr = {});
WeightSpec weight_from_config(const RawConfig& cfg, std::size_t n_steps, double grid_step);

/// Experiment runner: executes the requested estimators, writes results /
/// convergence / surface CSVs into the output directory and prints a
/// summary table. Exit codes: 0 ok, 2 validation error, 3 numerical
/// failure.
int run_experiment(const RawConfig& cfg, const ExperimentOverrides& ovr, std::ostream& diag);

/// Classification of the contract's nested Monte Carlo price functional at
/// the configured probe times; writes the evidence CSV and a label file.
int run_classify(const RawConfig& cfg, const ExperimentOverrides& ovr, std::ostream& diag);

/// Simulates per the config and dumps the price paths as CSV rows
/// (grid_step, then values).
int run_dump_paths(const RawConfig& cfg, const ExperimentOverrides& ovr, std::ostream& diag);

}  // namespace pathmc

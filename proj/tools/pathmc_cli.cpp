#include <pathmc/experiment.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonFlags {
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool has_out = false;
  bool has_seed = false;
  bool has_threads = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "experiment config file")->required();
  cmd->add_option("--out", flags.out_dir, "output directory (overrides [output] dir)")
      ->each([&](const std::string&) { flags.has_out = true; });
  cmd->add_option("--seed-override", flags.seed, "seed overriding [mc] seed")
      ->each([&](const std::string&) { flags.has_seed = true; });
  cmd->add_option("--threads", flags.threads, "worker threads (0 = hardware)")
      ->each([&](const std::string&) { flags.has_threads = true; });
}

pathmc::ExperimentOverrides to_overrides(const CommonFlags& flags) {
  pathmc::ExperimentOverrides ovr;
  if (flags.has_out) ovr.out_dir = flags.out_dir;
  if (flags.has_seed) ovr.seed = flags.seed;
  if (flags.has_threads) ovr.threads = flags.threads;
  return ovr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo pricing and weighted-expectation Greeks for path-dependent derivatives"};
  app.require_subcommand(1);

  CommonFlags run_flags, classify_flags, dump_flags;
  CLI::App* run = app.add_subcommand("run", "run the configured estimators, write CSV results");
  add_common(run, run_flags);
  CLI::App* classify =
      app.add_subcommand("classify", "classify the contract's price functional by path-dependence");
  add_common(classify, classify_flags);
  CLI::App* dump = app.add_subcommand("dump-paths", "simulate and dump price paths as CSV");
  add_common(dump, dump_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return pathmc::run_experiment(pathmc::load_config_file(run_flags.config),
                                    to_overrides(run_flags), std::cout);
    }
    if (classify->parsed()) {
      return pathmc::run_classify(pathmc::load_config_file(classify_flags.config),
                                  to_overrides(classify_flags), std::cout);
    }
    if (dump->parsed()) {
      return pathmc::run_dump_paths(pathmc::load_config_file(dump_flags.config),
                                    to_overrides(dump_flags), std::cout);
    }
  } catch (const pathmc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#include <pathmc/experiment.hpp>

#include <pathmc/csv.hpp>
#include <pathmc/rng.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace pathmc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

bool RawConfig::has(const std::string& section, const std::string& key) const {
  const auto it = sections.find(section);
  return it != sections.end() && it->second.count(key) > 0;
}

std::string RawConfig::get(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  const auto it = sections.find(section);
  if (it == sections.end()) return fallback;
  const auto jt = it->second.find(key);
  return jt == it->second.end() ? fallback : jt->second;
}

std::string RawConfig::require(const std::string& section, const std::string& key) const {
  if (!has(section, key)) {
    throw ConfigError("config: missing [" + section + "] " + key);
  }
  return sections.at(section).at(key);
}

double RawConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = lower(get(section, key, ""));
  if (v == "inf" || v == "+inf" || v == "infinity") {
    return std::numeric_limits<double>::infinity();
  }
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw ConfigError("config: [" + section + "] " + key + " is not a number");
  }
}

std::size_t RawConfig::get_size(const std::string& section, const std::string& key,
                                std::size_t fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return static_cast<std::size_t>(std::stoull(get(section, key, "")));
  } catch (const std::exception&) {
    throw ConfigError("config: [" + section + "] " + key + " is not a count");
  }
}

std::uint64_t RawConfig::get_u64(const std::string& section, const std::string& key,
                                 std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return std::stoull(get(section, key, ""));
  } catch (const std::exception&) {
    throw ConfigError("config: [" + section + "] " + key + " is not an integer");
  }
}

bool RawConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = lower(get(section, key, ""));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: [" + section + "] " + key + " is not a boolean");
}

std::vector<double> RawConfig::get_doubles(const std::string& section,
                                           const std::string& key) const {
  std::vector<double> out;
  if (!has(section, key)) return out;
  std::istringstream in(get(section, key, ""));
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

RawConfig parse_config_text(std::istream& in) {
  RawConfig cfg;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config: bad section header at line " + std::to_string(line_no));
      }
      section = lower(trim(line.substr(1, line.size() - 2)));
      cfg.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty()) {
      throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
    }
    const std::string key = lower(trim(line.substr(0, eq)));
    cfg.sections[section][key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

RawConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_config_text(in);
}

VolatilityModel model_from_config(const RawConfig& cfg) {
  const std::string kind = lower(cfg.require("model", "kind"));
  if (kind == "black_scholes") {
    return VolatilityModel::black_scholes(cfg.get_double("model", "sigma", 0.2));
  }
  if (kind == "bachelier") {
    const double s = cfg.get_double("model", "sigma", 1.0);
    if (!(s > 0.0)) throw ConfigError("config: bachelier sigma must be > 0");
    return VolatilityModel::local([s](double, double) { return s; },
                                  [](double, double) { return 0.0; });
  }
  if (kind == "qv_scaled") {
    // demo path-dependent volatility: sigma_bar (1 + alpha QV(log path)) y_t
    const double s = cfg.get_double("model", "sigma", 0.2);
    const double alpha = cfg.get_double("model", "alpha", 0.5);
    auto sigma = [s, alpha](const DiscretePath& path) {
      double qv = 0.0;
      double prev = std::log(path.values.front());
      for (std::size_t i = 1; i < path.values.size(); ++i) {
        const double l = std::log(path.values[i]);
        qv += (l - prev) * (l - prev);
        prev = l;
      }
      return s * (1.0 + alpha * qv) * path.values.back();
    };
    return VolatilityModel::path_dependent(sigma);
  }
  throw ConfigError("config: unknown model kind '" + kind + "'");
}

Contract contract_from_config(const RawConfig& cfg) {
  const std::string kind = lower(cfg.require("contract", "kind"));
  const double horizon = cfg.get_double("mc", "horizon", 1.0);
  if (kind == "european_call") {
    return european_call(cfg.get_double("contract", "strike", 100.0));
  }
  if (kind == "vko_call") {
    return vko_call(cfg.get_double("contract", "strike", 100.0),
                    cfg.get_double("contract", "barrier",
                                   std::numeric_limits<double>::infinity()));
  }
  if (kind == "asian_forward_start") {
    return asian_forward_start(cfg.get_double("contract", "t1", 0.2), horizon);
  }
  if (kind == "average_price_call") {
    return average_price_call(cfg.get_double("contract", "strike", 0.0), horizon);
  }
  if (kind == "two_date_average_call") {
    std::vector<double> times = cfg.get_doubles("contract", "times");
    if (times.size() != 2) {
      throw ConfigError("config: two_date_average_call needs exactly two times");
    }
    const double strike = cfg.get_double("contract", "strike", 100.0);
    auto phi = [strike](std::span<const double> v) {
      return std::max(0.5 * (v[0] + v[1]) - strike, 0.0);
    };
    Contract c = discretely_monitored(phi, std::move(times));
    c.label = "two_date_average_call";
    return c;
  }
  throw ConfigError("config: unknown contract kind '" + kind + "'");
}

McParams mc_from_config(const RawConfig& cfg, const ExperimentOverrides& ovr) {
  McParams mc;
  mc.n_paths = cfg.get_size("mc", "n_paths", 100000);
  mc.n_steps = cfg.get_size("mc", "n_steps", 500);
  mc.horizon = cfg.get_double("mc", "horizon", 1.0);
  mc.x0 = cfg.get_double("mc", "x0", 100.0);
  mc.seed = cfg.get_u64("mc", "seed", 1);
  mc.threads = static_cast<unsigned>(cfg.get_size("mc", "threads", 0));
  if (ovr.seed) mc.seed = *ovr.seed;
  if (ovr.threads) mc.threads = *ovr.threads;
  if (mc.n_paths < 2) throw ConfigError("config: [mc] n_paths must be >= 2");
  if (mc.n_steps < 1) throw ConfigError("config: [mc] n_steps must be >= 1");
  if (!(mc.horizon > 0.0)) throw ConfigError("config: [mc] horizon must be > 0");
  if (!(mc.x0 > 0.0)) throw ConfigError("config: [mc] x0 must be > 0");
  return mc;
}

WeightSpec weight_from_config(const RawConfig& cfg, std::size_t n_steps, double grid_step) {
  const std::string kind = lower(cfg.get("delta", "weight", "weakly"));
  const double horizon = static_cast<double>(n_steps) * grid_step;
  const std::string alloc_kind = lower(cfg.get("delta", "allocation", "uniform"));
  const double t1 = cfg.get_double("delta", "t1", 0.0);

  auto make_alloc = [&]() {
    if (alloc_kind == "uniform") return AllocationFunction::uniform_until(t1, n_steps, grid_step);
    if (alloc_kind == "linear") {
      return AllocationFunction::from_density([t1](double t) { return 2.0 * t / (t1 * t1); },
                                              n_steps, grid_step);
    }
    if (alloc_kind == "uniform_horizon") {
      return AllocationFunction::constant(1.0 / horizon, n_steps, grid_step);
    }
    throw ConfigError("config: unknown allocation '" + alloc_kind + "'");
  };

  if (kind == "weakly") return WeightSpec::weakly();
  if (kind == "delayed") {
    if (!(t1 > 0.0)) throw ConfigError("config: delayed weight needs [delta] t1 > 0");
    return WeightSpec::delayed(make_alloc(), t1);
  }
  if (kind == "discrete") {
    if (!(t1 > 0.0)) throw ConfigError("config: discrete weight needs [delta] t1 > 0");
    return WeightSpec::discrete(make_alloc());
  }
  throw ConfigError("config: unknown delta weight '" + kind + "'");
}

namespace {

int guarded(std::ostream& diag, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const SimulationError& e) {
    diag << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    diag << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    diag << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    diag << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}

std::filesystem::path resolve_out_dir(const RawConfig& cfg, const ExperimentOverrides& ovr) {
  const std::string dir = ovr.out_dir ? *ovr.out_dir : cfg.get("output", "dir", "out");
  std::filesystem::create_directories(dir);
  return dir;
}

void require_finite(const McEstimate& e, const std::string& label) {
  if (!std::isfinite(e.mean) || !std::isfinite(e.std_error)) {
    throw std::runtime_error(label + ": non-finite estimate");
  }
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fn) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  fn(out);
}

void print_summary(std::ostream& diag, std::span<const EstimateRow> rows) {
  diag << "label                 mean            std_error       n_paths    seed\n";
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s  %-14.8g  %-14.6g  %-9zu  %llu", r.label.c_str(),
                  r.estimate.mean, r.estimate.std_error, r.estimate.n_paths,
                  static_cast<unsigned long long>(r.estimate.seed));
    diag << line << "\n";
  }
}

}  // namespace

int run_experiment(const RawConfig& cfg, const ExperimentOverrides& ovr, std::ostream& diag) {
  return guarded(diag, [&] {
    const VolatilityModel model = model_from_config(cfg);
    const Contract contract = contract_from_config(cfg);
    const McParams mc = mc_from_config(cfg, ovr);
    const double grid_step = mc.horizon / static_cast<double>(mc.n_steps);
    const auto out_dir = resolve_out_dir(cfg, ovr);
    const bool want_convergence = cfg.get_bool("output", "convergence", true);

    std::vector<EstimateRow> rows;
    std::vector<std::pair<std::string, ConvergenceLog>> traces;
    auto run_one = [&](const std::string& label, auto&& fn) {
      ConvergenceLog log;
      const McEstimate e = fn(want_convergence ? &log : nullptr);
      require_finite(e, label);
      rows.push_back({label, e});
      if (want_convergence && !log.empty()) traces.emplace_back(label, std::move(log));
    };

    if (cfg.get_bool("price", "enabled", true)) {
      run_one("price", [&](ConvergenceLog* log) { return price_mc(model, contract, mc, log); });
    }
    if (cfg.get_bool("delta", "enabled", false)) {
      const WeightSpec spec = weight_from_config(cfg, mc.n_steps, grid_step);
      run_one("delta",
              [&](ConvergenceLog* log) { return delta_mc(model, contract, spec, mc, log); });
    }
    if (cfg.get_bool("gamma", "enabled", false)) {
      run_one("gamma", [&](ConvergenceLog* log) { return gamma_mc(model, contract, mc, log); });
    }

    const std::string vega_dir = lower(cfg.get("vega", "directional", "none"));
    if (vega_dir != "none") {
      std::function<double(double, double)> u;
      if (vega_dir == "unit") {
        u = [](double, double) { return 1.0; };
      } else if (vega_dir == "bs_variance") {
        u = [](double, double x) { return x * x; };
      } else {
        throw ConfigError("config: unknown vega directional '" + vega_dir + "'");
      }
      run_one("vega_" + vega_dir,
              [&](ConvergenceLog* log) { return vega_directional_mc(model, contract, u, mc, log); });
    }

    if (cfg.get_bool("fd", "delta", false)) {
      const double b = cfg.get_double("fd", "bump", 0.5);
      rows.push_back({"fd_delta", fd_greek(model, contract, FdGreek::delta, b, mc)});
      require_finite(rows.back().estimate, "fd_delta");
    }
    if (cfg.get_bool("fd", "gamma", false)) {
      const double b = cfg.get_double("fd", "bump", 0.5);
      rows.push_back({"fd_gamma", fd_greek(model, contract, FdGreek::gamma, b, mc)});
      require_finite(rows.back().estimate, "fd_gamma");
    }
    if (cfg.get_bool("fd", "vega_sigma2", false)) {
      const double b = cfg.get_double("fd", "bump_variance", 0.005);
      rows.push_back({"fd_vega_sigma2", fd_greek(model, contract, FdGreek::vega_sigma2, b, mc)});
      require_finite(rows.back().estimate, "fd_vega_sigma2");
    }

    if (cfg.get_bool("vega", "surface", false)) {
      VegaSurfaceBins bins;
      bins.time_stride = cfg.get_size("vega", "time_stride", 10);
      bins.n_bins = cfg.get_size("vega", "bins", 50);
      bins.min_occupancy = cfg.get_size("vega", "min_occupancy", 50);
      const SimulatedBatch batch =
          simulate(model, mc.x0, mc.horizon, mc.n_steps, mc.n_paths, mc.seed, mc.threads);
      const VegaSurface surface = vega_surface(batch, contract, model, bins);
      write_file(out_dir / "vega_surface.csv",
                 [&](std::ostream& out) { write_vega_surface_csv(out, surface); });
    }

    write_file(out_dir / "results.csv",
               [&](std::ostream& out) { write_estimates_csv(out, rows); });
    for (const auto& [label, log] : traces) {
      write_file(out_dir / ("convergence_" + label + ".csv"),
                 [&](std::ostream& out) { write_convergence_csv(out, log); });
    }
    print_summary(diag, rows);
  });
}

int run_classify(const RawConfig& cfg, const ExperimentOverrides& ovr, std::ostream& diag) {
  return guarded(diag, [&] {
    const VolatilityModel model = model_from_config(cfg);
    const Contract contract = contract_from_config(cfg);
    const McParams mc = mc_from_config(cfg, ovr);
    const auto out_dir = resolve_out_dir(cfg, ovr);

    const std::size_t probe_paths = cfg.get_size("classify", "probe_paths", 8);
    const std::size_t inner_paths = cfg.get_size("classify", "inner_paths", 2000);
    const double tol = cfg.get_double("classify", "tol", 1e-2);
    std::vector<double> probe_times = cfg.get_doubles("classify", "probe_times");
    if (probe_times.empty()) {
      const std::size_t count = cfg.get_size("classify", "probe_count", 9);
      const double dt = mc.horizon / static_cast<double>(count + 1);
      for (std::size_t i = 1; i <= count; ++i) {
        probe_times.push_back(static_cast<double>(i) * dt);
      }
    }
    // snap probe times to the simulation grid
    const double grid_step = mc.horizon / static_cast<double>(mc.n_steps);
    for (double& t : probe_times) {
      t = std::llround(t / grid_step) * grid_step;
    }

    const SimulatedBatch probes =
        simulate(model, mc.x0, mc.horizon, mc.n_steps, probe_paths, derive_seed(mc.seed, 77),
                 mc.threads);
    std::vector<DiscretePath> paths(probe_paths);
    for (std::size_t p = 0; p < probe_paths; ++p) probes.copy_path_into(p, paths[p]);

    const PathFunctional price = make_mc_price_functional(model, contract, mc.horizon, mc.n_steps,
                                                          inner_paths, derive_seed(mc.seed, 78));
    DerivativeConfig dcfg;
    dcfg.h = cfg.get_double("classify", "h", 0.0);  // 0 resolves per prefix
    dcfg.dt_steps = cfg.get_size("classify", "dt_steps", 1);

    const PathDependenceClass cls = classify(price, paths, probe_times, dcfg, tol);

    write_file(out_dir / "classify_evidence.csv",
               [&](std::ostream& out) { write_evidence_csv(out, cls); });
    std::string label = to_string(cls.kind);
    if (cls.kind == PathDependenceKind::delayed) {
      label += " (t1 ~ " + fmt_double(cls.delay_time) + ")";
    }
    write_file(out_dir / "classification.txt",
               [&](std::ostream& out) { out << label << '\n'; });
    diag << contract.label << ": " << label << "\n";
  });
}

int run_dump_paths(const RawConfig& cfg, const ExperimentOverrides& ovr, std::ostream& diag) {
  return guarded(diag, [&] {
    const VolatilityModel model = model_from_config(cfg);
    const McParams mc = mc_from_config(cfg, ovr);
    const auto out_dir = resolve_out_dir(cfg, ovr);
    const SimulatedBatch batch =
        simulate(model, mc.x0, mc.horizon, mc.n_steps, mc.n_paths, mc.seed, mc.threads);
    std::vector<DiscretePath> paths(batch.n_paths);
    for (std::size_t p = 0; p < batch.n_paths; ++p) batch.copy_path_into(p, paths[p]);
    write_file(out_dir / "paths.csv",
               [&](std::ostream& out) { write_paths_csv(out, paths); });
    diag << "wrote " << batch.n_paths << " paths to " << (out_dir / "paths.csv").string() << "\n";
  });
}

}  // namespace pathmc

#include <pathmc/model.hpp>

#include <pathmc/rng.hpp>
#include <pathmc/stats.hpp>

#include <cmath>
#include <cstdio>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>

namespace pathmc {

VolatilityModel VolatilityModel::black_scholes(double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("black_scholes: sigma must be >= 0");
  VolatilityModel m;
  m.kind_ = Kind::black_scholes;
  m.bs_sigma_ = sigma;
  return m;
}

VolatilityModel VolatilityModel::local(LocalFn sigma, LocalFn dsigma_dx, bool time_homogeneous) {
  if (!sigma) throw std::invalid_argument("local: sigma callable required");
  VolatilityModel m;
  m.kind_ = Kind::local_vol;
  m.local_sigma_ = std::move(sigma);
  m.local_dsigma_ = std::move(dsigma_dx);
  m.time_homogeneous_ = time_homogeneous;
  return m;
}

VolatilityModel VolatilityModel::path_dependent(PathFunctional sigma, PathFunctional dsigma_dx) {
  if (!sigma) throw std::invalid_argument("path_dependent: sigma functional required");
  VolatilityModel m;
  m.kind_ = Kind::path_dependent;
  m.pd_sigma_ = std::move(sigma);
  m.pd_dsigma_ = std::move(dsigma_dx);
  return m;
}

double VolatilityModel::sigma_local(double t, double x) const {
  switch (kind_) {
    case Kind::black_scholes: return bs_sigma_ * x;
    case Kind::local_vol: return local_sigma_(t, x);
    case Kind::path_dependent: break;
  }
  throw std::logic_error("sigma_local: path_dependent model needs the full history");
}

double VolatilityModel::dsigma_local(double t, double x) const {
  switch (kind_) {
    case Kind::black_scholes: return bs_sigma_;
    case Kind::local_vol: {
      if (local_dsigma_) return local_dsigma_(t, x);
      const double h = 1e-4 * std::max(1.0, std::abs(x));
      return (local_sigma_(t, x + h) - local_sigma_(t, x - h)) / (2.0 * h);
    }
    case Kind::path_dependent: break;
  }
  throw std::logic_error("dsigma_local: path_dependent model needs the full history");
}

double VolatilityModel::sigma(const DiscretePath& path) const {
  if (kind_ == Kind::path_dependent) return pd_sigma_(path);
  return sigma_local(path.final_time(), path.values.back());
}

double VolatilityModel::dsigma(const DiscretePath& path) const {
  switch (kind_) {
    case Kind::black_scholes: return bs_sigma_;
    case Kind::local_vol: return dsigma_local(path.final_time(), path.values.back());
    case Kind::path_dependent: {
      if (pd_dsigma_) return pd_dsigma_(path);
      const double h = 1e-4 * std::max(1.0, std::abs(path.values.back()));
      return (pd_sigma_(bump(path, h)) - pd_sigma_(bump(path, -h))) / (2.0 * h);
    }
  }
  return 0.0;
}

void SimulatedBatch::copy_path_into(std::size_t p, DiscretePath& out) const {
  const auto row = x_row(p);
  out.grid_step = grid_step;
  out.values.assign(row.begin(), row.end());
  out.terminal_left_limit = out.values.back();
}

namespace {

struct SimPlan {
  const VolatilityModel* model;
  std::size_t prefix_steps;          // continuation starts here
  const DiscretePath* prefix;        // null for plain simulate
  double x0;
};

void simulate_one_path(const SimPlan& plan, SimulatedBatch& batch, std::size_t p,
                       std::size_t stream_id, DiscretePath& scratch) {
  const VolatilityModel& model = *plan.model;
  const std::size_t m = batch.n_steps;
  const double dt = batch.grid_step;
  const double sqrt_dt = std::sqrt(dt);
  const bool pathwise_sigma = model.kind() == VolatilityModel::Kind::path_dependent;

  double* x = batch.x.data() + p * (m + 1);
  double* dw = batch.dw.data() + p * m;
  double* z = batch.z.data() + p * (m + 1);
  double* sg = batch.sigma.data() + p * m;
  double* dsg = batch.dsigma.data() + p * m;

  const std::size_t s0 = plan.prefix_steps;
  if (plan.prefix) {
    for (std::size_t i = 0; i <= s0; ++i) x[i] = plan.prefix->values[i];
  } else {
    x[0] = plan.x0;
  }
  for (std::size_t i = 0; i <= s0; ++i) z[i] = 1.0;
  for (std::size_t i = 0; i < s0; ++i) dw[i] = 0.0;

  if (pathwise_sigma) {
    scratch.grid_step = dt;
    scratch.values.clear();
    scratch.values.reserve(m + 1);
    scratch.values.insert(scratch.values.end(), x, x + s0 + 1);
    scratch.terminal_left_limit = scratch.values.back();
  }

  // sigma over the prefix range, for diagnostics and weights
  for (std::size_t i = 0; i < s0; ++i) {
    if (pathwise_sigma) {
      DiscretePath sub(dt, {x, x + i + 1});
      sg[i] = model.sigma(sub);
      dsg[i] = model.dsigma(sub);
    } else {
      const double t = static_cast<double>(i) * dt;
      sg[i] = model.sigma_local(t, x[i]);
      dsg[i] = model.dsigma_local(t, x[i]);
    }
  }

  NormalStream rng(batch.master_seed, stream_id);
  const bool exact_bs = model.kind() == VolatilityModel::Kind::black_scholes;
  const double bs_sigma = model.bs_sigma();

  for (std::size_t i = s0; i < m; ++i) {
    double sigma_i, dsigma_i;
    if (pathwise_sigma) {
      sigma_i = model.sigma(scratch);
      dsigma_i = model.dsigma(scratch);
    } else {
      const double t = static_cast<double>(i) * dt;
      sigma_i = model.sigma_local(t, x[i]);
      dsigma_i = model.dsigma_local(t, x[i]);
    }
    if (!std::isfinite(sigma_i) || !std::isfinite(dsigma_i) ||
        (model.positive_sigma_enforced() && !(sigma_i > 0.0))) {
      throw SimulationError("simulate: invalid sigma at path " + std::to_string(stream_id) +
                                ", step " + std::to_string(i),
                            stream_id, i);
    }
    const double dwi = rng.next() * sqrt_dt;
    dw[i] = dwi;
    if (exact_bs) {
      x[i + 1] = x[i] * std::exp(bs_sigma * dwi - 0.5 * bs_sigma * bs_sigma * dt);
    } else {
      x[i + 1] = x[i] + sigma_i * dwi;
    }
    z[i + 1] = z[i] * std::exp(dsigma_i * dwi - 0.5 * dsigma_i * dsigma_i * dt);
    sg[i] = sigma_i;
    dsg[i] = dsigma_i;
    if (!std::isfinite(x[i + 1]) || !std::isfinite(z[i + 1])) {
      throw SimulationError("simulate: non-finite state at path " + std::to_string(stream_id) +
                                ", step " + std::to_string(i),
                            stream_id, i);
    }
    if (pathwise_sigma) {
      scratch.values.push_back(x[i + 1]);
      scratch.terminal_left_limit = x[i + 1];
    }
  }
}

SimulatedBatch run_plan(const SimPlan& plan, double horizon, std::size_t n_steps,
                        std::size_t n_paths, std::uint64_t seed, unsigned threads) {
  if (n_steps < 1) throw std::invalid_argument("simulate: n_steps must be >= 1");
  if (n_paths < 1) throw std::invalid_argument("simulate: n_paths must be >= 1");
  if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be > 0");

  SimulatedBatch batch =
      allocate_batch(n_paths, n_steps, horizon / static_cast<double>(n_steps), plan.x0, seed);
  batch.prefix_steps = plan.prefix_steps;

  const std::size_t n_blocks = (n_paths + kReductionBlock - 1) / kReductionBlock;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_blocks(n_blocks, threads, [&](std::size_t b) {
    DiscretePath scratch;
    const std::size_t lo = b * kReductionBlock;
    const std::size_t hi = std::min<std::size_t>(n_paths, lo + kReductionBlock);
    try {
      for (std::size_t p = lo; p < hi; ++p) simulate_one_path(plan, batch, p, p, scratch);
    } catch (...) {
      std::scoped_lock lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  return batch;
}

void check_prefix(const DiscretePath& prefix, double horizon, std::size_t n_steps) {
  if (n_steps < 1) throw std::invalid_argument("simulate_from_prefix: n_steps must be >= 1");
  const double dt = horizon / static_cast<double>(n_steps);
  if (std::abs(prefix.grid_step - dt) > 1e-12 * std::max(1.0, dt)) {
    throw std::invalid_argument(
        "simulate_from_prefix: prefix grid_step does not match horizon / n_steps");
  }
  if (prefix.steps() >= n_steps) {
    throw std::invalid_argument("simulate_from_prefix: prefix horizon must be < total horizon");
  }
}

}  // namespace

SimulatedBatch allocate_batch(std::size_t n_paths, std::size_t n_steps, double grid_step,
                              double x0, std::uint64_t seed) {
  SimulatedBatch batch;
  batch.n_paths = n_paths;
  batch.n_steps = n_steps;
  batch.grid_step = grid_step;
  batch.x0 = x0;
  batch.master_seed = seed;
  batch.x.resize(n_paths * (n_steps + 1));
  batch.dw.resize(n_paths * n_steps);
  batch.z.resize(n_paths * (n_steps + 1));
  batch.sigma.resize(n_paths * n_steps);
  batch.dsigma.resize(n_paths * n_steps);
  return batch;
}

SimulatedBatch simulate(const VolatilityModel& model, double x0, double horizon,
                        std::size_t n_steps, std::size_t n_paths, std::uint64_t seed,
                        unsigned threads) {
  SimPlan plan{&model, 0, nullptr, x0};
  return run_plan(plan, horizon, n_steps, n_paths, seed, threads);
}

SimulatedBatch simulate_from_prefix(const VolatilityModel& model, const DiscretePath& prefix,
                                    double horizon, std::size_t n_steps, std::size_t n_paths,
                                    std::uint64_t seed, unsigned threads) {
  check_prefix(prefix, horizon, n_steps);
  SimPlan plan{&model, prefix.steps(), &prefix, prefix.values.front()};
  return run_plan(plan, horizon, n_steps, n_paths, seed, threads);
}

void simulate_into(const VolatilityModel& model, std::size_t first_path, SimulatedBatch& out) {
  SimPlan plan{&model, 0, nullptr, out.x0};
  out.prefix_steps = 0;
  DiscretePath scratch;
  for (std::size_t p = 0; p < out.n_paths; ++p) {
    simulate_one_path(plan, out, p, first_path + p, scratch);
  }
}

void simulate_from_prefix_into(const VolatilityModel& model, const DiscretePath& prefix,
                               std::size_t first_path, SimulatedBatch& out) {
  check_prefix(prefix, out.horizon(), out.n_steps);
  SimPlan plan{&model, prefix.steps(), &prefix, prefix.values.front()};
  out.prefix_steps = prefix.steps();
  DiscretePath scratch;
  for (std::size_t p = 0; p < out.n_paths; ++p) {
    simulate_one_path(plan, out, p, first_path + p, scratch);
  }
}

void write_batch_csv(std::ostream& out, const SimulatedBatch& batch) {
  char buf[32];
  out << "n_paths," << batch.n_paths << ",n_steps," << batch.n_steps << ",grid_step,";
  std::snprintf(buf, sizeof(buf), "%.17g", batch.grid_step);
  out << buf << ",x0,";
  std::snprintf(buf, sizeof(buf), "%.17g", batch.x0);
  out << buf << ",seed," << batch.master_seed << ",prefix_steps," << batch.prefix_steps << '\n';
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    bool first = true;
    auto put_row = [&](std::span<const double> row) {
      for (double v : row) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        if (!first) out << ',';
        out << buf;
        first = false;
      }
    };
    put_row(batch.x_row(p));
    put_row(batch.dw_row(p));
    put_row(batch.z_row(p));
    out << '\n';
  }
}

SimulatedBatch read_batch_csv(std::istream& in, const VolatilityModel& model) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("read_batch_csv: empty input");
  SimulatedBatch batch;
  {
    std::istringstream meta(line);
    std::string key, value;
    while (std::getline(meta, key, ',') && std::getline(meta, value, ',')) {
      if (key == "n_paths") batch.n_paths = std::stoull(value);
      else if (key == "n_steps") batch.n_steps = std::stoull(value);
      else if (key == "grid_step") batch.grid_step = std::stod(value);
      else if (key == "x0") batch.x0 = std::stod(value);
      else if (key == "seed") batch.master_seed = std::stoull(value);
      else if (key == "prefix_steps") batch.prefix_steps = std::stoull(value);
    }
  }
  const std::size_t m = batch.n_steps;
  batch.x.reserve(batch.n_paths * (m + 1));
  batch.dw.reserve(batch.n_paths * m);
  batch.z.reserve(batch.n_paths * (m + 1));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    vals.reserve(3 * m + 2);
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 3 * m + 2) throw std::invalid_argument("read_batch_csv: bad row length");
    batch.x.insert(batch.x.end(), vals.begin(), vals.begin() + m + 1);
    batch.dw.insert(batch.dw.end(), vals.begin() + m + 1, vals.begin() + 2 * m + 1);
    batch.z.insert(batch.z.end(), vals.begin() + 2 * m + 1, vals.end());
  }
  if (batch.x.size() != batch.n_paths * (m + 1)) {
    throw std::invalid_argument("read_batch_csv: row count does not match n_paths");
  }
  // sigma / dsigma are model data, not sample data: rebuild them
  batch.sigma.resize(batch.n_paths * m);
  batch.dsigma.resize(batch.n_paths * m);
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    const auto x = batch.x_row(p);
    for (std::size_t i = 0; i < m; ++i) {
      if (model.kind() == VolatilityModel::Kind::path_dependent) {
        DiscretePath sub(batch.grid_step, {x.begin(), x.begin() + i + 1});
        batch.sigma[p * m + i] = model.sigma(sub);
        batch.dsigma[p * m + i] = model.dsigma(sub);
      } else {
        const double t = static_cast<double>(i) * batch.grid_step;
        batch.sigma[p * m + i] = model.sigma_local(t, x[i]);
        batch.dsigma[p * m + i] = model.dsigma_local(t, x[i]);
      }
    }
  }
  return batch;
}

}  // namespace pathmc

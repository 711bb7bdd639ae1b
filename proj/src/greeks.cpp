#include <pathmc/greeks.hpp>

#include <pathmc/rng.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

namespace pathmc {

// ---------------------------------------------------------------------------
// allocation functions and weight specs
// ---------------------------------------------------------------------------

AllocationFunction AllocationFunction::constant(double value, std::size_t n_steps,
                                                double grid_step) {
  AllocationFunction a;
  a.grid_step = grid_step;
  a.values.assign(n_steps, value);
  return a;
}

AllocationFunction AllocationFunction::uniform_until(double t1, std::size_t n_steps,
                                                     double grid_step) {
  const auto i1 = static_cast<std::size_t>(std::llround(t1 / grid_step));
  if (i1 == 0 || i1 > n_steps) {
    throw std::invalid_argument("AllocationFunction::uniform_until: t1 outside (0, horizon]");
  }
  AllocationFunction a;
  a.grid_step = grid_step;
  a.values.assign(n_steps, 0.0);
  const double v = 1.0 / (static_cast<double>(i1) * grid_step);
  std::fill_n(a.values.begin(), i1, v);
  return a;
}

AllocationFunction AllocationFunction::from_density(const std::function<double(double)>& fn,
                                                    std::size_t n_steps, double grid_step) {
  AllocationFunction a;
  a.grid_step = grid_step;
  a.values.resize(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) {
    const double v = fn((static_cast<double>(i) + 0.5) * grid_step);
    if (!std::isfinite(v)) {
      throw std::invalid_argument("AllocationFunction::from_density: non-finite value");
    }
    a.values[i] = v;
  }
  return a;
}

double AllocationFunction::integral_to(double t) const {
  const double raw = t / grid_step;
  const auto idx = static_cast<std::size_t>(std::llround(raw));
  if (std::abs(raw - static_cast<double>(idx)) > 1e-9 || idx > values.size()) {
    throw std::invalid_argument("AllocationFunction::integral_to: t must be a grid time");
  }
  long double acc = 0.0L;
  for (std::size_t i = 0; i < idx; ++i) acc += values[i];
  return static_cast<double>(acc * static_cast<long double>(grid_step));
}

WeightSpec WeightSpec::discrete(AllocationFunction a) {
  WeightSpec s;
  s.kind = Kind::discrete;
  s.allocation = std::move(a);
  return s;
}

WeightSpec WeightSpec::delayed(AllocationFunction a, double t1) {
  WeightSpec s;
  s.kind = Kind::delayed;
  s.allocation = std::move(a);
  s.t1 = t1;
  return s;
}

namespace {

constexpr double kMembershipTol = 1e-12;

// resolves the spec to one allocation value per grid step, after verifying
// the Gamma-set membership constraints
std::vector<double> resolve_weight(const WeightSpec& spec, const Contract& contract,
                                   std::size_t n_steps, double grid_step) {
  const double horizon = static_cast<double>(n_steps) * grid_step;
  if (spec.kind == WeightSpec::Kind::weakly) {
    return std::vector<double>(n_steps, 1.0 / horizon);
  }

  const AllocationFunction& a = spec.allocation;
  if (a.values.size() != n_steps ||
      std::abs(a.grid_step - grid_step) > 1e-12 * std::max(1.0, grid_step)) {
    throw std::invalid_argument("delta: allocation grid does not match the simulation grid");
  }

  if (spec.kind == WeightSpec::Kind::discrete) {
    if (contract.monitoring.empty()) {
      throw std::invalid_argument(
          "delta: discrete weight requires a contract with monitoring times");
    }
    for (double ti : contract.monitoring) {
      const double integral = a.integral_to(ti);
      if (std::abs(integral - 1.0) > kMembershipTol) {
        throw std::invalid_argument(
            "delta: Gamma membership violated: integral of a over [0, " + std::to_string(ti) +
            "] = " + std::to_string(integral) + ", must equal 1");
      }
    }
  } else {  // delayed
    const double integral = a.integral_to(spec.t1);
    if (std::abs(integral - 1.0) > kMembershipTol) {
      throw std::invalid_argument(
          "delta: Gamma_t1 membership violated: integral of a over [0, " +
          std::to_string(spec.t1) + "] = " + std::to_string(integral) + ", must equal 1");
    }
    const auto i1 = static_cast<std::size_t>(std::llround(spec.t1 / grid_step));
    for (std::size_t i = i1; i < n_steps; ++i) {
      if (a.values[i] != 0.0) {
        throw std::invalid_argument(
            "delta: Gamma_t1 membership violated: a must vanish on [t1, T]");
      }
    }
  }
  return a.values;
}

struct Workspace {
  DiscretePath path;
  std::vector<double> eta;
};

// per-path estimator value; local/global indices address the block batch
// and the whole ensemble respectively
using PerPathFn =
    std::function<double(const SimulatedBatch&, std::size_t local, std::size_t global, Workspace&)>;

double eval_payoff(const Contract& contract, const SimulatedBatch& batch, std::size_t p,
                   Workspace& ws) {
  batch.copy_path_into(p, ws.path);
  const double g = contract.payoff(ws.path);
  if (!std::isfinite(g)) {
    throw std::runtime_error("estimator: non-finite payoff (path " + std::to_string(p) + ")");
  }
  return g;
}

double path_pi(const SimulatedBatch& b, std::size_t p, std::span<const double> alloc) {
  const double* z = b.z.data() + p * (b.n_steps + 1);
  const double* sg = b.sigma.data() + p * b.n_steps;
  const double* dw = b.dw.data() + p * b.n_steps;
  double acc = 0.0;
  for (std::size_t i = 0; i < b.n_steps; ++i) {
    if (alloc[i] == 0.0) continue;
    if (!(sg[i] > 0.0)) {
      throw std::runtime_error("delta: sigma(X_t) <= 0 encountered on path " + std::to_string(p));
    }
    acc += alloc[i] * z[i] / sg[i] * dw[i];
  }
  return acc;
}

// eta partial sums: eta[i] = sum_{j < i} z_j / sigma_j dw_j
void fill_eta(const SimulatedBatch& b, std::size_t p, std::vector<double>& eta) {
  const double* z = b.z.data() + p * (b.n_steps + 1);
  const double* sg = b.sigma.data() + p * b.n_steps;
  const double* dw = b.dw.data() + p * b.n_steps;
  eta.resize(b.n_steps + 1);
  eta[0] = 0.0;
  for (std::size_t i = 0; i < b.n_steps; ++i) {
    if (!(sg[i] > 0.0)) {
      throw std::runtime_error("vega: sigma(X_t) <= 0 encountered on path " + std::to_string(p));
    }
    eta[i + 1] = eta[i] + z[i] / sg[i] * dw[i];
  }
}

struct ReduceResult {
  Accumulator total;
  ConvergenceLog log;
};

void merge_with_log(const std::vector<Accumulator>& partial, std::size_t n_paths,
                    std::uint64_t seed, ReduceResult& out, bool want_log) {
  std::vector<std::size_t> targets;
  std::size_t next = 0;
  if (want_log) targets = convergence_targets(n_paths);
  for (const auto& block : partial) {
    out.total.merge(block);
    while (want_log && next < targets.size() && out.total.count() >= targets[next]) {
      const McEstimate e = out.total.estimate(seed);
      out.log.push_back({e.n_paths, e.mean, e.std_error});
      ++next;
    }
  }
}

// deterministic blocked reduction over an in-memory batch
McEstimate reduce_batch(const SimulatedBatch& batch, const PerPathFn& fn, unsigned threads = 0) {
  const std::size_t n = batch.n_paths;
  const std::size_t n_blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<Accumulator> partial(n_blocks);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_blocks(n_blocks, threads, [&](std::size_t blk) {
    thread_local Workspace ws;
    const std::size_t lo = blk * kReductionBlock;
    const std::size_t hi = std::min(n, lo + kReductionBlock);
    try {
      Accumulator acc;
      for (std::size_t p = lo; p < hi; ++p) acc.add(fn(batch, p, p, ws));
      partial[blk] = acc;
    } catch (...) {
      std::scoped_lock lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  ReduceResult res;
  merge_with_log(partial, n, batch.master_seed, res, false);
  return res.total.estimate(batch.master_seed);
}

// streaming reduction: simulate block-wise, reduce with the same block
// grouping as reduce_batch, so both forms agree bit for bit
McEstimate stream_reduce(const VolatilityModel& model, const DiscretePath* prefix,
                         const McParams& mc, const PerPathFn& fn, ConvergenceLog* log) {
  if (mc.n_paths < 2) throw std::invalid_argument("estimator: n_paths must be >= 2");
  const std::size_t n = mc.n_paths;
  const std::size_t n_blocks = (n + kReductionBlock - 1) / kReductionBlock;
  const double grid_step = mc.horizon / static_cast<double>(mc.n_steps);
  std::vector<Accumulator> partial(n_blocks);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_blocks(n_blocks, mc.threads, [&](std::size_t blk) {
    thread_local Workspace ws;
    thread_local SimulatedBatch buf;
    const std::size_t lo = blk * kReductionBlock;
    const std::size_t count = std::min(n, lo + kReductionBlock) - lo;
    try {
      if (buf.n_paths != count || buf.n_steps != mc.n_steps) {
        buf = allocate_batch(count, mc.n_steps, grid_step, mc.x0, mc.seed);
      }
      buf.master_seed = mc.seed;
      buf.x0 = mc.x0;
      buf.grid_step = grid_step;
      if (prefix) {
        simulate_from_prefix_into(model, *prefix, lo, buf);
      } else {
        simulate_into(model, lo, buf);
      }
      Accumulator acc;
      for (std::size_t p = 0; p < count; ++p) acc.add(fn(buf, p, lo + p, ws));
      partial[blk] = acc;
    } catch (...) {
      std::scoped_lock lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  ReduceResult res;
  merge_with_log(partial, n, mc.seed, res, log != nullptr);
  if (log) *log = std::move(res.log);
  return res.total.estimate(mc.seed);
}

PerPathFn make_price_fn(const Contract& contract) {
  return [&contract](const SimulatedBatch& b, std::size_t p, std::size_t, Workspace& ws) {
    return eval_payoff(contract, b, p, ws);
  };
}

PerPathFn make_delta_fn(const Contract& contract, std::shared_ptr<std::vector<double>> alloc) {
  return [&contract, alloc](const SimulatedBatch& b, std::size_t p, std::size_t, Workspace& ws) {
    return eval_payoff(contract, b, p, ws) * path_pi(b, p, *alloc);
  };
}

struct GammaContext {
  double ratio0 = 0.0;      // dsigma(X_0) / sigma(X_0)
  double inv_t_s0sq = 0.0;  // 1 / (T sigma^2(X_0))
  std::vector<double> alloc;
};

GammaContext make_gamma_context(const VolatilityModel& model, double x0, double horizon,
                                std::size_t n_steps, double grid_step) {
  if (!model.time_homogeneous()) {
    throw std::invalid_argument("gamma: requires a time-homogeneous volatility model");
  }
  DiscretePath trivial(grid_step, {x0});
  const double s0 = model.sigma(trivial);
  if (!(s0 > 0.0)) throw std::invalid_argument("gamma: sigma(X_0) must be > 0");
  GammaContext ctx;
  ctx.ratio0 = model.dsigma(trivial) / s0;
  ctx.inv_t_s0sq = 1.0 / (horizon * s0 * s0);
  ctx.alloc.assign(n_steps, 1.0 / horizon);
  return ctx;
}

PerPathFn make_gamma_fn(const Contract& contract, std::shared_ptr<GammaContext> ctx) {
  return [&contract, ctx](const SimulatedBatch& b, std::size_t p, std::size_t, Workspace& ws) {
    const double g = eval_payoff(contract, b, p, ws);
    const double pi = path_pi(b, p, ctx->alloc);
    const double xi = pi * pi - ctx->ratio0 * pi - ctx->inv_t_s0sq;
    return g * xi;
  };
}

void require_local_vol(const VolatilityModel& model, const char* op) {
  if (model.kind() == VolatilityModel::Kind::path_dependent) {
    throw std::invalid_argument(std::string(op) + ": requires a local volatility model");
  }
  if (!model.time_homogeneous()) {
    throw std::invalid_argument(std::string(op) + ": requires time-homogeneous sigma");
  }
}

double xi_from_eta(const SimulatedBatch& b, std::size_t p, const std::vector<double>& eta,
                   std::size_t i) {
  const double rem = b.horizon() - static_cast<double>(i) * b.grid_step;
  const double zi = b.z[p * (b.n_steps + 1) + i];
  const double sgi = b.sigma[p * b.n_steps + i];
  const double dsi = b.dsigma[p * b.n_steps + i];
  const double de = eta[b.n_steps] - eta[i];
  return de * de / (rem * rem * zi * zi) - (dsi / sgi) * de / (rem * zi) -
         1.0 / (rem * sgi * sgi);
}

PerPathFn make_vega_fn(const Contract& contract, const std::function<double(double, double)>& u) {
  return [&contract, &u](const SimulatedBatch& b, std::size_t p, std::size_t, Workspace& ws) {
    const double g = eval_payoff(contract, b, p, ws);
    fill_eta(b, p, ws.eta);
    const double* x = b.x.data() + p * (b.n_steps + 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < b.n_steps; ++i) {
      const double t = static_cast<double>(i) * b.grid_step;
      const double uv = u(t, x[i]);
      if (!std::isfinite(uv)) {
        throw std::runtime_error("vega: non-finite direction value u(t, x)");
      }
      if (uv == 0.0) continue;
      acc += uv * xi_from_eta(b, p, ws.eta, i);
    }
    return g * 0.5 * acc * b.grid_step;
  };
}

}  // namespace

// ---------------------------------------------------------------------------
// batch estimators
// ---------------------------------------------------------------------------

McEstimate price(const SimulatedBatch& batch, const Contract& contract) {
  return reduce_batch(batch, make_price_fn(contract));
}

McEstimate delta(const SimulatedBatch& batch, const Contract& contract, const WeightSpec& spec) {
  auto alloc = std::make_shared<std::vector<double>>(
      resolve_weight(spec, contract, batch.n_steps, batch.grid_step));
  return reduce_batch(batch, make_delta_fn(contract, alloc));
}

McEstimate weight_statistics(const SimulatedBatch& batch, const Contract& contract,
                             const WeightSpec& spec) {
  auto alloc = std::make_shared<std::vector<double>>(
      resolve_weight(spec, contract, batch.n_steps, batch.grid_step));
  return reduce_batch(batch,
                      [alloc](const SimulatedBatch& b, std::size_t p, std::size_t, Workspace&) {
                        return path_pi(b, p, *alloc);
                      });
}

std::vector<double> resolve_allocation(const WeightSpec& spec, const Contract& contract,
                                       std::size_t n_steps, double grid_step) {
  return resolve_weight(spec, contract, n_steps, grid_step);
}

double path_weight(const SimulatedBatch& batch, std::size_t p,
                   std::span<const double> allocation) {
  return path_pi(batch, p, allocation);
}

double path_gamma_weight(const SimulatedBatch& batch, std::size_t p,
                         const VolatilityModel& model) {
  const GammaContext ctx =
      make_gamma_context(model, batch.x0, batch.horizon(), batch.n_steps, batch.grid_step);
  const double pi = path_pi(batch, p, ctx.alloc);
  return pi * pi - ctx.ratio0 * pi - ctx.inv_t_s0sq;
}

McEstimate gamma(const SimulatedBatch& batch, const Contract& contract,
                 const VolatilityModel& model) {
  auto ctx = std::make_shared<GammaContext>(
      make_gamma_context(model, batch.x0, batch.horizon(), batch.n_steps, batch.grid_step));
  return reduce_batch(batch, make_gamma_fn(contract, ctx));
}

McEstimate vega_directional(const SimulatedBatch& batch, const Contract& contract,
                            const VolatilityModel& model,
                            const std::function<double(double, double)>& u) {
  require_local_vol(model, "vega_directional");
  return reduce_batch(batch, make_vega_fn(contract, u));
}

// ---------------------------------------------------------------------------
// streaming estimators
// ---------------------------------------------------------------------------

McEstimate price_mc(const VolatilityModel& model, const Contract& contract, const McParams& mc,
                    ConvergenceLog* log) {
  return stream_reduce(model, nullptr, mc, make_price_fn(contract), log);
}

McEstimate delta_mc(const VolatilityModel& model, const Contract& contract, const WeightSpec& spec,
                    const McParams& mc, ConvergenceLog* log) {
  const double grid_step = mc.horizon / static_cast<double>(mc.n_steps);
  auto alloc = std::make_shared<std::vector<double>>(
      resolve_weight(spec, contract, mc.n_steps, grid_step));
  return stream_reduce(model, nullptr, mc, make_delta_fn(contract, alloc), log);
}

McEstimate gamma_mc(const VolatilityModel& model, const Contract& contract, const McParams& mc,
                    ConvergenceLog* log) {
  const double grid_step = mc.horizon / static_cast<double>(mc.n_steps);
  auto ctx = std::make_shared<GammaContext>(
      make_gamma_context(model, mc.x0, mc.horizon, mc.n_steps, grid_step));
  return stream_reduce(model, nullptr, mc, make_gamma_fn(contract, ctx), log);
}

McEstimate vega_directional_mc(const VolatilityModel& model, const Contract& contract,
                               const std::function<double(double, double)>& u, const McParams& mc,
                               ConvergenceLog* log) {
  require_local_vol(model, "vega_directional");
  return stream_reduce(model, nullptr, mc, make_vega_fn(contract, u), log);
}

// ---------------------------------------------------------------------------
// conditional estimators
// ---------------------------------------------------------------------------

McEstimate delta_at(const DiscretePath& prefix, const Contract& contract,
                    const VolatilityModel& model, const McParams& mc) {
  const double rem = mc.horizon - prefix.final_time();
  if (!(rem > 0.0)) {
    throw std::invalid_argument("delta_at: prefix at the full horizon leaves a zero window");
  }
  const std::size_t s0 = prefix.steps();
  PerPathFn fn = [&contract, s0, rem](const SimulatedBatch& b, std::size_t p, std::size_t,
                                      Workspace& ws) {
    const double g = eval_payoff(contract, b, p, ws);
    const double* z = b.z.data() + p * (b.n_steps + 1);
    const double* sg = b.sigma.data() + p * b.n_steps;
    const double* dw = b.dw.data() + p * b.n_steps;
    double acc = 0.0;
    for (std::size_t i = s0; i < b.n_steps; ++i) {
      if (!(sg[i] > 0.0)) {
        throw std::runtime_error("delta_at: sigma(X_t) <= 0 encountered");
      }
      acc += z[i] / sg[i] * dw[i];
    }
    return g * acc / rem;
  };
  return stream_reduce(model, &prefix, mc, fn, nullptr);
}

McEstimate gamma_at(const DiscretePath& prefix, const Contract& contract,
                    const VolatilityModel& model, const McParams& mc) {
  if (!model.time_homogeneous()) {
    throw std::invalid_argument("gamma_at: requires a time-homogeneous volatility model");
  }
  const double rem = mc.horizon - prefix.final_time();
  if (!(rem > 0.0)) {
    throw std::invalid_argument("gamma_at: prefix at the full horizon leaves a zero window");
  }
  const double s_s = model.sigma(prefix);
  if (!(s_s > 0.0)) throw std::invalid_argument("gamma_at: sigma(Y_s) must be > 0");
  const double ratio = model.dsigma(prefix) / s_s;
  const double inv = 1.0 / (rem * s_s * s_s);
  const std::size_t s0 = prefix.steps();
  PerPathFn fn = [&contract, s0, rem, ratio, inv](const SimulatedBatch& b, std::size_t p,
                                                  std::size_t, Workspace& ws) {
    const double g = eval_payoff(contract, b, p, ws);
    const double* z = b.z.data() + p * (b.n_steps + 1);
    const double* sg = b.sigma.data() + p * b.n_steps;
    const double* dw = b.dw.data() + p * b.n_steps;
    double eta = 0.0;
    for (std::size_t i = s0; i < b.n_steps; ++i) {
      if (!(sg[i] > 0.0)) {
        throw std::runtime_error("gamma_at: sigma(X_t) <= 0 encountered");
      }
      eta += z[i] / sg[i] * dw[i];
    }
    const double xi = eta * eta / (rem * rem) - ratio * eta / rem - inv;
    return g * xi;
  };
  return stream_reduce(model, &prefix, mc, fn, nullptr);
}

// ---------------------------------------------------------------------------
// finite-difference oracle
// ---------------------------------------------------------------------------

VolatilityModel bump_variance(const VolatilityModel& model, double dv) {
  switch (model.kind()) {
    case VolatilityModel::Kind::black_scholes: {
      const double v = model.bs_sigma() * model.bs_sigma() + dv;
      if (!(v >= 0.0)) throw std::invalid_argument("bump_variance: negative bumped variance");
      return VolatilityModel::black_scholes(std::sqrt(v));
    }
    case VolatilityModel::Kind::local_vol: {
      const VolatilityModel base = model;
      auto sigma = [base, dv](double t, double x) {
        const double s = base.sigma_local(t, x);
        const double v = s * s + dv;
        if (!(v >= 0.0)) {
          throw std::runtime_error("bump_variance: negative bumped variance at (t, x)");
        }
        return std::sqrt(v);
      };
      auto dsigma = [base, dv](double t, double x) {
        const double s = base.sigma_local(t, x);
        const double v = s * s + dv;
        return s * base.dsigma_local(t, x) / std::sqrt(v);
      };
      return VolatilityModel::local(sigma, dsigma, model.time_homogeneous());
    }
    case VolatilityModel::Kind::path_dependent: break;
  }
  throw std::invalid_argument("bump_variance: requires a local volatility model");
}

McEstimate fd_greek(const VolatilityModel& model, const Contract& contract, FdGreek which,
                    double bump_size, const McParams& mc) {
  if (!(bump_size > 0.0)) throw std::invalid_argument("fd_greek: bump must be > 0");
  if (mc.n_paths < 2) throw std::invalid_argument("fd_greek: n_paths must be >= 2");
  const std::size_t n = mc.n_paths;
  const std::size_t n_blocks = (n + kReductionBlock - 1) / kReductionBlock;
  const double grid_step = mc.horizon / static_cast<double>(mc.n_steps);

  struct Leg {
    VolatilityModel model;
    double x0;
  };
  std::vector<Leg> legs;
  std::vector<double> coeff;  // quotient coefficients per leg
  switch (which) {
    case FdGreek::delta:
      legs = {{model, mc.x0 + bump_size}, {model, mc.x0 - bump_size}};
      coeff = {1.0 / (2.0 * bump_size), -1.0 / (2.0 * bump_size)};
      break;
    case FdGreek::gamma:
      legs = {{model, mc.x0 + bump_size}, {model, mc.x0}, {model, mc.x0 - bump_size}};
      coeff = {1.0 / (bump_size * bump_size), -2.0 / (bump_size * bump_size),
               1.0 / (bump_size * bump_size)};
      break;
    case FdGreek::vega_sigma2:
      legs = {{bump_variance(model, bump_size), mc.x0}, {bump_variance(model, -bump_size), mc.x0}};
      coeff = {1.0 / (2.0 * bump_size), -1.0 / (2.0 * bump_size)};
      break;
  }

  std::vector<Accumulator> partial(n_blocks);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_blocks(n_blocks, mc.threads, [&](std::size_t blk) {
    thread_local Workspace ws;
    thread_local std::vector<SimulatedBatch> bufs;
    const std::size_t lo = blk * kReductionBlock;
    const std::size_t count = std::min(n, lo + kReductionBlock) - lo;
    try {
      if (bufs.size() != legs.size()) bufs.resize(legs.size());
      for (std::size_t l = 0; l < legs.size(); ++l) {
        if (bufs[l].n_paths != count || bufs[l].n_steps != mc.n_steps) {
          bufs[l] = allocate_batch(count, mc.n_steps, grid_step, legs[l].x0, mc.seed);
        }
        bufs[l].x0 = legs[l].x0;
        // common random numbers: same seed and the same global stream ids
        simulate_into(legs[l].model, lo, bufs[l]);
      }
      Accumulator acc;
      for (std::size_t p = 0; p < count; ++p) {
        double q = 0.0;
        for (std::size_t l = 0; l < legs.size(); ++l) {
          q += coeff[l] * eval_payoff(contract, bufs[l], p, ws);
        }
        acc.add(q);
      }
      partial[blk] = acc;
    } catch (...) {
      std::scoped_lock lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  ReduceResult res;
  merge_with_log(partial, n, mc.seed, res, false);
  return res.total.estimate(mc.seed);
}

// ---------------------------------------------------------------------------
// martingale diagnostics
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> snap_times(const std::vector<double>& times, double grid_step,
                                    std::size_t n_steps) {
  if (times.empty()) throw std::invalid_argument("martingale_diagnostic: no probe times");
  std::vector<std::size_t> idx;
  idx.reserve(times.size());
  for (double t : times) {
    const auto i = static_cast<std::size_t>(std::llround(t / grid_step));
    if (i > n_steps) {
      throw std::invalid_argument("martingale_diagnostic: probe time beyond the horizon");
    }
    idx.push_back(i);
  }
  return idx;
}

MartingaleDiagnostic finish_diagnostic(
    const std::vector<double>& times, const std::vector<std::vector<Accumulator>>& partial,
    std::uint64_t seed) {
  MartingaleDiagnostic diag;
  diag.times = times;
  const std::size_t k = times.size();
  for (std::size_t j = 0; j < k; ++j) {
    Accumulator total;
    for (const auto& block : partial) total.merge(block[j]);
    diag.estimates.push_back(total.estimate(seed));
  }
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double se2 = diag.estimates[a].std_error * diag.estimates[a].std_error +
                         diag.estimates[b].std_error * diag.estimates[b].std_error;
      const double gap = std::abs(diag.estimates[a].mean - diag.estimates[b].mean);
      const double dev = se2 > 0.0 ? gap / std::sqrt(se2)
                                   : (gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      diag.max_pairwise_deviation_se = std::max(diag.max_pairwise_deviation_se, dev);
    }
  }
  return diag;
}

// shared multi-time streaming probe;
// value_fn(batch, local_p, global_p, time_index, grid_idx, ws)
MartingaleDiagnostic run_diagnostic(
    const VolatilityModel& model, const std::vector<double>& times, const McParams& mc,
    const std::function<double(const SimulatedBatch&, std::size_t, std::size_t, std::size_t,
                               std::size_t, Workspace&)>& value_fn) {
  const double grid_step = mc.horizon / static_cast<double>(mc.n_steps);
  const auto idx = snap_times(times, grid_step, mc.n_steps);
  const std::size_t n = mc.n_paths;
  const std::size_t n_blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<std::vector<Accumulator>> partial(n_blocks,
                                                std::vector<Accumulator>(times.size()));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_blocks(n_blocks, mc.threads, [&](std::size_t blk) {
    thread_local Workspace ws;
    thread_local SimulatedBatch buf;
    const std::size_t lo = blk * kReductionBlock;
    const std::size_t count = std::min(n, lo + kReductionBlock) - lo;
    try {
      if (buf.n_paths != count || buf.n_steps != mc.n_steps) {
        buf = allocate_batch(count, mc.n_steps, grid_step, mc.x0, mc.seed);
      }
      simulate_into(model, lo, buf);
      for (std::size_t p = 0; p < count; ++p) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
          partial[blk][j].add(value_fn(buf, p, lo + p, j, idx[j], ws));
        }
      }
    } catch (...) {
      std::scoped_lock lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  return finish_diagnostic(times, partial, mc.seed);
}

}  // namespace

MartingaleDiagnostic martingale_diagnostic(const VolatilityModel& model,
                                           const std::vector<double>& times, const McParams& mc,
                                           const std::function<double(double, double)>& delta_fn) {
  return run_diagnostic(
      model, times, mc,
      [&delta_fn](const SimulatedBatch& b, std::size_t p, std::size_t, std::size_t, std::size_t i,
                  Workspace&) {
        const double t = static_cast<double>(i) * b.grid_step;
        const double x = b.x[p * (b.n_steps + 1) + i];
        const double z = b.z[p * (b.n_steps + 1) + i];
        return delta_fn(t, x) * z;
      });
}

MartingaleDiagnostic martingale_diagnostic_fd(const VolatilityModel& model,
                                              const Contract& contract,
                                              const std::vector<double>& times, const McParams& mc,
                                              std::size_t inner_paths, double bump_size) {
  if (!(bump_size > 0.0)) throw std::invalid_argument("martingale_diagnostic_fd: bump must be > 0");
  const std::size_t k = times.size();
  const double grid_step = mc.horizon / static_cast<double>(mc.n_steps);

  // the t = 0 prefix is common to all paths: one FD delta, computed once
  double fd0 = 0.0;
  bool have_fd0 = false;
  for (double t : times) {
    if (t == 0.0 && !have_fd0) {
      const DiscretePath trivial(grid_step, {mc.x0});
      const std::uint64_t seed = derive_seed(mc.seed ^ 0x6d617274ull, 0);
      const double up = mc_price_from_prefix(model, contract, bump(trivial, bump_size),
                                             mc.horizon, mc.n_steps, inner_paths, seed)
                            .mean;
      const double dn = mc_price_from_prefix(model, contract, bump(trivial, -bump_size),
                                             mc.horizon, mc.n_steps, inner_paths, seed)
                            .mean;
      fd0 = (up - dn) / (2.0 * bump_size);
      have_fd0 = true;
    }
  }

  return run_diagnostic(
      model, times, mc,
      [&, k, fd0](const SimulatedBatch& b, std::size_t p, std::size_t global, std::size_t j,
                  std::size_t i, Workspace& ws) {
        if (i == 0) return fd0;  // z_0 = 1
        ws.path.grid_step = b.grid_step;
        const auto row = b.x_row(p);
        ws.path.values.assign(row.begin(), row.begin() + i + 1);
        ws.path.terminal_left_limit = ws.path.values.back();
        const double z = b.z[p * (b.n_steps + 1) + i];
        // same inner seed for both bumps: common random numbers
        const std::uint64_t seed =
            derive_seed(b.master_seed ^ 0x6d617274ull, (global + 1) * k + j + 1);
        const double up = mc_price_from_prefix(model, contract, bump(ws.path, bump_size),
                                               b.horizon(), b.n_steps, inner_paths, seed)
                              .mean;
        const double dn = mc_price_from_prefix(model, contract, bump(ws.path, -bump_size),
                                               b.horizon(), b.n_steps, inner_paths, seed)
                              .mean;
        return (up - dn) / (2.0 * bump_size) * z;
      });
}

// ---------------------------------------------------------------------------
// nested Monte Carlo price and the strong correction
// ---------------------------------------------------------------------------

McEstimate mc_price_from_prefix(const VolatilityModel& model, const Contract& contract,
                                const DiscretePath& prefix, double horizon, std::size_t n_steps,
                                std::size_t n_paths, std::uint64_t seed) {
  const std::size_t s0 = prefix.steps();
  if (s0 > n_steps) {
    throw std::invalid_argument("mc_price_from_prefix: prefix longer than the grid");
  }
  if (s0 == n_steps) {
    McEstimate e;
    e.mean = contract.payoff(prefix);
    e.n_paths = 1;
    e.seed = seed;
    return e;
  }
  const double dt = horizon / static_cast<double>(n_steps);
  if (std::abs(prefix.grid_step - dt) > 1e-12 * std::max(1.0, dt)) {
    throw std::invalid_argument("mc_price_from_prefix: prefix grid mismatch");
  }
  const double sqrt_dt = std::sqrt(dt);
  const bool exact_bs = model.kind() == VolatilityModel::Kind::black_scholes;
  const bool pathwise = model.kind() == VolatilityModel::Kind::path_dependent;
  const double bs_sigma = model.bs_sigma();

  DiscretePath full;
  full.grid_step = dt;
  full.values.assign(prefix.values.begin(), prefix.values.end());
  full.values.resize(n_steps + 1, 0.0);

  Accumulator acc;
  for (std::size_t j = 0; j < n_paths; ++j) {
    NormalStream rng(seed, j);
    double x = prefix.values.back();
    for (std::size_t i = s0; i < n_steps; ++i) {
      double sigma_i;
      if (pathwise) {
        DiscretePath sub(dt, {full.values.begin(), full.values.begin() + i + 1});
        sigma_i = model.sigma(sub);
      } else {
        sigma_i = model.sigma_local(static_cast<double>(i) * dt, x);
      }
      if (!std::isfinite(sigma_i) ||
          (model.positive_sigma_enforced() && !(sigma_i > 0.0))) {
        throw SimulationError("mc_price_from_prefix: invalid sigma", j, i);
      }
      const double dwi = rng.next() * sqrt_dt;
      if (exact_bs) {
        x *= std::exp(bs_sigma * dwi - 0.5 * bs_sigma * bs_sigma * dt);
      } else {
        x += sigma_i * dwi;
      }
      if (!std::isfinite(x)) {
        throw SimulationError("mc_price_from_prefix: non-finite state", j, i);
      }
      full.values[i + 1] = x;
    }
    full.terminal_left_limit = full.values.back();
    acc.add(contract.payoff(full));
  }
  return acc.estimate(seed);
}

PathFunctional make_mc_price_functional(const VolatilityModel& model, const Contract& contract,
                                        double horizon, std::size_t n_steps,
                                        std::size_t inner_paths, std::uint64_t seed,
                                        double* max_rel_se) {
  return [model, contract, horizon, n_steps, inner_paths, seed,
          max_rel_se](const DiscretePath& prefix) {
    const McEstimate e =
        mc_price_from_prefix(model, contract, prefix, horizon, n_steps, inner_paths, seed);
    if (max_rel_se != nullptr && e.n_paths >= 2) {
      const double scale = std::max(std::abs(e.mean), 1e-12);
      *max_rel_se = std::max(*max_rel_se, e.std_error / scale);
    }
    return e.mean;
  };
}

namespace {

// factory(global_path, s_index, rel_se_sink) -> price functional used for
// the bracket at (path, s)
using PriceFactory =
    std::function<PathFunctional(std::size_t global_path, std::size_t s_index, double* sink)>;

StrongCorrectionResult run_strong_correction(const VolatilityModel& model,
                                             const StrongCorrectionParams& params,
                                             const PriceFactory& factory) {
  const McParams& mc = params.outer;
  if (params.s_stride == 0) throw std::invalid_argument("strong_correction: s_stride must be > 0");
  if (params.cfg.dt_steps >= mc.n_steps) {
    throw std::invalid_argument("strong_correction: grid too coarse for the bracket extension");
  }
  const double horizon = mc.horizon;

  // midpoint rule over s_stride-step segments: the bracket is evaluated at
  // each segment midpoint, which keeps both endpoints (s = 0, where payoff
  // quadrature endpoints distort the bracket, and s = T) off the node list
  struct Segment {
    std::size_t node;
    std::size_t len;  // in grid steps
  };
  std::vector<Segment> segments;
  for (std::size_t lo = 0; lo < mc.n_steps; lo += params.s_stride) {
    const std::size_t hi = std::min(mc.n_steps, lo + params.s_stride);
    std::size_t node = lo + (hi - lo) / 2;
    node = std::min(node, mc.n_steps - params.cfg.dt_steps);
    segments.push_back({node, hi - lo});
  }

  std::atomic<double> worst_rel_se{0.0};
  PerPathFn fn = [&](const SimulatedBatch& b, std::size_t p, std::size_t global, Workspace& ws) {
    const auto x = b.x_row(p);
    const auto z = b.z_row(p);
    double rel_se_local = 0.0;
    double integral = 0.0;
    for (const Segment& seg : segments) {
      const std::size_t s = seg.node;
      ws.path.grid_step = b.grid_step;
      ws.path.values.assign(x.begin(), x.begin() + s + 1);
      ws.path.terminal_left_limit = ws.path.values.back();
      DerivativeConfig cfg = params.cfg;
      if (!(cfg.h > 0.0)) cfg = DerivativeConfig::defaults_for(ws.path);
      const PathFunctional f = factory(global, s, &rel_se_local);
      const double bracket = lie_bracket(f, ws.path, cfg);
      const double rem = horizon - static_cast<double>(s) * b.grid_step;
      integral += bracket * z[s] * rem * static_cast<double>(seg.len) * b.grid_step;
    }
    if (rel_se_local > 0.0) {
      double cur = worst_rel_se.load(std::memory_order_relaxed);
      while (cur < rel_se_local &&
             !worst_rel_se.compare_exchange_weak(cur, rel_se_local, std::memory_order_relaxed)) {
      }
    }
    return integral / horizon;
  };

  StrongCorrectionResult result;
  result.correction = stream_reduce(model, nullptr, mc, fn, nullptr);
  result.max_inner_rel_se = worst_rel_se.load();
  result.inner_noise_flagged = result.max_inner_rel_se > params.inner_se_warn_fraction;
  return result;
}

}  // namespace

StrongCorrectionResult strong_correction(const VolatilityModel& model, const Contract& contract,
                                         const StrongCorrectionParams& params) {
  const McParams& mc = params.outer;
  PriceFactory factory = [&](std::size_t global, std::size_t s, double* sink) {
    // fixed seed per (path, s): common random numbers across the four
    // bump/extension corners of the bracket
    const std::uint64_t seed =
        derive_seed(mc.seed ^ 0x73747267ull, global * (mc.n_steps + 1) + s);
    return make_mc_price_functional(model, contract, mc.horizon, mc.n_steps, params.inner_paths,
                                    seed, sink);
  };
  return run_strong_correction(model, params, factory);
}

StrongCorrectionResult strong_correction_with_price(const VolatilityModel& model,
                                                    const PathFunctional& price_fn,
                                                    const StrongCorrectionParams& params) {
  PriceFactory factory = [&](std::size_t, std::size_t, double*) { return price_fn; };
  return run_strong_correction(model, params, factory);
}

// ---------------------------------------------------------------------------
// vega surface
// ---------------------------------------------------------------------------

double VegaSurface::integral() const {
  double acc = 0.0;
  const double width = cell_width();
  for (std::size_t j = 0; j < times.size(); ++j) {
    double dt_j = j + 1 < times.size() ? times[j + 1] - times[j] : times[1] - times[0];
    if (times.size() == 1) dt_j = 0.0;
    for (std::size_t c = 0; c < n_bins; ++c) {
      const std::size_t cell = j * n_bins + c;
      if (!empty[cell]) acc += m[cell] * width * dt_j;
    }
  }
  return acc;
}

VegaSurface vega_surface(const SimulatedBatch& batch, const Contract& contract,
                         const VolatilityModel& model, const VegaSurfaceBins& bins) {
  require_local_vol(model, "vega_surface");
  if (bins.n_bins == 0) throw std::invalid_argument("vega_surface: n_bins must be > 0");
  if (bins.time_stride == 0) throw std::invalid_argument("vega_surface: time_stride must be > 0");

  VegaSurface surf;
  surf.n_bins = bins.n_bins;
  for (std::size_t i = 0; i < batch.n_steps; i += bins.time_stride) {
    surf.times.push_back(static_cast<double>(i) * batch.grid_step);
  }

  // cell range: explicit, or the batch's own range over the probed times
  double lo, hi;
  if (bins.x_min < bins.x_max) {
    lo = bins.x_min;
    hi = bins.x_max;
  } else {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
      const double* x = batch.x.data() + p * (batch.n_steps + 1);
      for (std::size_t i = 0; i < batch.n_steps; i += bins.time_stride) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
      }
    }
    if (!(hi >= lo)) throw std::runtime_error("vega_surface: no finite states");
    double span = hi - lo;
    if (span <= 0.0) span = std::max(1e-8, std::abs(hi) * 1e-8);  // degenerate ensemble
    hi = lo + span * (1.0 + 1e-12);
  }
  surf.edges.resize(bins.n_bins + 1);
  for (std::size_t c = 0; c <= bins.n_bins; ++c) {
    surf.edges[c] = lo + (hi - lo) * static_cast<double>(c) / static_cast<double>(bins.n_bins);
  }
  const double width = (hi - lo) / static_cast<double>(bins.n_bins);

  const std::size_t n_cells = surf.times.size() * bins.n_bins;
  std::vector<double> sum(n_cells, 0.0), sum_sq(n_cells, 0.0);
  std::vector<std::size_t> cnt(n_cells, 0);

  Workspace ws;
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    const double g = eval_payoff(contract, batch, p, ws);
    fill_eta(batch, p, ws.eta);
    const double* x = batch.x.data() + p * (batch.n_steps + 1);
    std::size_t j = 0;
    for (std::size_t i = 0; i < batch.n_steps; i += bins.time_stride, ++j) {
      const double rel = (x[i] - lo) / width;
      std::size_t c = rel > 0.0 ? static_cast<std::size_t>(rel) : 0;
      if (c >= bins.n_bins) c = bins.n_bins - 1;
      const double v = g * xi_from_eta(batch, p, ws.eta, i);
      const std::size_t cell = j * bins.n_bins + c;
      sum[cell] += v;
      sum_sq[cell] += v * v;
      ++cnt[cell];
    }
  }

  surf.m.assign(n_cells, 0.0);
  surf.std_error.assign(n_cells, 0.0);
  surf.occupancy = std::move(cnt);
  surf.empty.assign(n_cells, 1);
  const double n = static_cast<double>(batch.n_paths);
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    if (surf.occupancy[cell] < bins.min_occupancy) continue;
    surf.empty[cell] = 0;
    surf.m[cell] = sum[cell] / (2.0 * n * width);
    const double varsum = std::max(
        0.0, sum_sq[cell] - sum[cell] * sum[cell] / static_cast<double>(surf.occupancy[cell]));
    surf.std_error[cell] = std::sqrt(varsum) / (2.0 * n * width);
  }
  return surf;
}

}  // namespace pathmc

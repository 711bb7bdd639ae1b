#include <doctest.h>

#include <pathmc/greeks.hpp>
#include <pathmc/rng.hpp>

#include "oracles.hpp"

#include <cmath>
#include <limits>

using namespace pathmc;

namespace {

const VolatilityModel kBs25 = VolatilityModel::black_scholes(0.25);

Contract terminal_value() {
  return Contract{"terminal", [](const DiscretePath& p) { return p.values.back(); }, {}};
}

Contract constant_one() {
  return Contract{"one", [](const DiscretePath&) { return 1.0; }, {}};
}

PathFunctional running_integral() {
  return [](const DiscretePath& p) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.values.size(); ++i) acc += p.values[i];
    return acc * p.grid_step;
  };
}

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

}  // namespace

TEST_CASE("allocation functions") {
  const double dt = 0.01;
  const auto uni = AllocationFunction::uniform_until(0.2, 100, dt);
  CHECK(uni.integral_to(0.2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(uni.integral_to(1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(uni.values[19] > 0.0);
  CHECK(uni.values[20] == 0.0);

  const auto lin = AllocationFunction::from_density(
      [](double t) { return 2.0 * t / (0.2 * 0.2); }, 100, dt);
  CHECK(lin.integral_to(0.2) == doctest::Approx(1.0).epsilon(1e-13));

  CHECK_THROWS_AS(AllocationFunction::uniform_until(0.0, 100, dt), std::invalid_argument);
  CHECK_THROWS_AS(uni.integral_to(0.20501), std::invalid_argument);
}

TEST_CASE("weight membership validation") {
  const SimulatedBatch batch = simulate(kBs25, 100.0, 1.0, 50, 128, 1);
  const Contract euro = european_call(100.0);

  // delayed weight must integrate to one over [0, t1]
  auto bad = WeightSpec::delayed(AllocationFunction::constant(1.0, 50, 0.02), 0.2);
  CHECK_THROWS_WITH_AS(static_cast<void>(delta(batch, euro, bad)),
                       doctest::Contains("Gamma_t1"), std::invalid_argument);

  // ... and vanish from t1 on
  auto leaky = WeightSpec::delayed(AllocationFunction::uniform_until(0.98, 50, 0.02), 0.98);
  leaky.allocation.values[49] = 0.5;  // violates a = 0 on [t1, T]
  CHECK_THROWS_WITH_AS(static_cast<void>(delta(batch, euro, leaky)),
                       doctest::Contains("vanish"), std::invalid_argument);

  // discrete weights need monitoring times
  auto disc = WeightSpec::discrete(AllocationFunction::uniform_until(0.5, 50, 0.02));
  CHECK_THROWS_WITH_AS(static_cast<void>(delta(batch, euro, disc)),
                       doctest::Contains("monitoring"), std::invalid_argument);

  // valid discrete weight on a two-date contract
  const Contract two = discretely_monitored(
      [](std::span<const double> v) { return std::max(0.5 * (v[0] + v[1]) - 100.0, 0.0); },
      {0.5, 1.0});
  CHECK_NOTHROW(static_cast<void>(delta(batch, two, disc)));
  // a = 1/T over the whole horizon violates the first monitoring constraint
  auto flat = WeightSpec::discrete(AllocationFunction::constant(1.0, 50, 0.02));
  CHECK_THROWS_WITH_AS(static_cast<void>(delta(batch, two, flat)),
                       doctest::Contains("Gamma membership"), std::invalid_argument);
}

TEST_CASE("Black-Scholes pathwise weight identities") {
  const SimulatedBatch batch = simulate(kBs25, 100.0, 1.0, 100, 2000, 21);
  const Contract euro = european_call(100.0);
  const auto alloc = resolve_allocation(WeightSpec::weakly(), euro, batch.n_steps, batch.grid_step);
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    const auto dw = batch.dw_row(p);
    double w_T = 0.0;
    for (double d : dw) w_T += d;
    const double pi = path_weight(batch, p, alloc);
    const double expected = w_T / (100.0 * 0.25 * 1.0);
    CHECK(std::abs(pi - expected) <= 1e-10 * std::max(1.0, std::abs(expected)));

    // Black-Scholes xi reduces to (1/(x0^2 sigma T)) (w_T^2/(sigma T) - w_T - 1/sigma)
    const double xi = path_gamma_weight(batch, p, kBs25);
    const double xi_bs =
        (w_T * w_T / 0.25 - w_T - 1.0 / 0.25) / (100.0 * 100.0 * 0.25 * 1.0);
    CHECK(std::abs(xi - xi_bs) <= 1e-10 * std::max(1e-8, std::abs(xi_bs)));
  }
}

TEST_CASE("weights have zero mean") {
  const SimulatedBatch batch = simulate(kBs25, 100.0, 1.0, 100, 50000, 22);
  const McEstimate pi = weight_statistics(batch, european_call(100.0), WeightSpec::weakly());
  CHECK(std::abs(pi.mean) < 3.0 * pi.std_error);
}

TEST_CASE("weighted delta matches the closed form") {
  const McParams mc{200000, 64, 1.0, 100.0, 23, 0};
  const McEstimate d = delta_mc(kBs25, european_call(100.0), WeightSpec::weakly(), mc);
  const double truth = oracles::bs_call_delta(100.0, 100.0, 0.25, 1.0);
  CHECK(std::abs(d.mean - truth) < 3.0 * d.std_error);
  CHECK(d.std_error < 0.01);
}

TEST_CASE("weighted gamma matches the closed form") {
  const McParams mc{200000, 64, 1.0, 100.0, 24, 0};
  const McEstimate g = gamma_mc(kBs25, european_call(100.0), mc);
  const double truth = oracles::bs_call_gamma(100.0, 100.0, 0.25, 1.0);
  CHECK(std::abs(g.mean - truth) < 3.0 * g.std_error);
}

TEST_CASE("delta against the finite-difference oracle per contract") {
  // weighted estimate vs central CRN finite difference, 4 combined SE
  const McParams mc{120000, 50, 1.0, 100.0, 25, 0};

  const Contract euro = european_call(100.0);
  const McEstimate d1 = delta_mc(kBs25, euro, WeightSpec::weakly(), mc);
  const McEstimate f1 = fd_greek(kBs25, euro, FdGreek::delta, 0.5, mc);
  CHECK(within(d1.mean, f1.mean,
               4.0 * std::hypot(d1.std_error, f1.std_error) + 1e-3));

  const Contract avg = average_price_call(100.0, 1.0);
  const McEstimate d2 = delta_mc(kBs25, avg, WeightSpec::weakly(), mc);
  const McEstimate f2 = fd_greek(kBs25, avg, FdGreek::delta, 0.5, mc);
  // the average call is strongly path dependent: the weakly weight recovers
  // only part of its delta, and the finite difference exceeds it
  CHECK(f2.mean > d2.mean + 4.0 * std::hypot(d2.std_error, f2.std_error));

  const VolatilityModel bs2 = VolatilityModel::black_scholes(0.2);
  const Contract asian = asian_forward_start(0.2, 1.0);
  const auto delayed =
      WeightSpec::delayed(AllocationFunction::uniform_until(0.2, 50, 0.02), 0.2);
  const McEstimate d3 = delta_mc(bs2, asian, delayed, mc);
  const McEstimate f3 = fd_greek(bs2, asian, FdGreek::delta, 0.5, mc);
  CHECK(within(d3.mean, f3.mean, 4.0 * std::hypot(d3.std_error, f3.std_error) + 1e-3));

  const Contract two = discretely_monitored(
      [](std::span<const double> v) { return std::max(0.5 * (v[0] + v[1]) - 100.0, 0.0); },
      {0.5, 1.0});
  const auto disc = WeightSpec::discrete(AllocationFunction::uniform_until(0.5, 50, 0.02));
  const McEstimate d4 = delta_mc(kBs25, two, disc, mc);
  const McEstimate f4 = fd_greek(kBs25, two, FdGreek::delta, 0.5, mc);
  CHECK(within(d4.mean, f4.mean, 4.0 * std::hypot(d4.std_error, f4.std_error) + 1e-3));
}

TEST_CASE("delayed weight of the forward-start Asian is w_t1 scaled") {
  const VolatilityModel bs2 = VolatilityModel::black_scholes(0.2);
  const SimulatedBatch batch = simulate(bs2, 100.0, 1.0, 100, 1000, 26);
  const auto spec = WeightSpec::delayed(AllocationFunction::uniform_until(0.2, 100, 0.01), 0.2);
  const auto alloc =
      resolve_allocation(spec, asian_forward_start(0.2, 1.0), batch.n_steps, batch.grid_step);
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    const auto dw = batch.dw_row(p);
    double w_t1 = 0.0;
    for (std::size_t i = 0; i < 20; ++i) w_t1 += dw[i];
    const double expected = w_t1 / (0.2 * 0.2 * 100.0);
    const double pi = path_weight(batch, p, alloc);
    CHECK(std::abs(pi - expected) <= 1e-10 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("uniform allocation minimises the weight variance") {
  const VolatilityModel bs2 = VolatilityModel::black_scholes(0.2);
  const SimulatedBatch batch = simulate(bs2, 100.0, 1.0, 100, 100000, 27);
  const Contract asian = asian_forward_start(0.2, 1.0);
  const auto uniform =
      WeightSpec::delayed(AllocationFunction::uniform_until(0.2, 100, 0.01), 0.2);
  const auto linear = WeightSpec::delayed(
      AllocationFunction::from_density(
          [](double t) { return t < 0.2 ? 2.0 * t / 0.04 : 0.0; }, 100, 0.01),
      0.2);
  const McEstimate pu = weight_statistics(batch, asian, uniform);
  const McEstimate pl = weight_statistics(batch, asian, linear);
  const double var_u = pu.std_error * pu.std_error * static_cast<double>(pu.n_paths);
  const double var_l = pl.std_error * pl.std_error * static_cast<double>(pl.n_paths);
  CHECK(var_u < var_l);
  CHECK(var_l / var_u == doctest::Approx(4.0 / 3.0).epsilon(0.05));
}

TEST_CASE("delta_at reduces to the unconditional delta at s = 0") {
  const Contract euro = european_call(100.0);
  const McParams mc{50000, 50, 1.0, 100.0, 28, 0};
  const DiscretePath trivial(0.02, {100.0});
  const McEstimate at = delta_at(trivial, euro, kBs25, mc);
  const McEstimate plain = delta_mc(kBs25, euro, WeightSpec::weakly(), mc);
  CHECK(at.mean == doctest::Approx(plain.mean).epsilon(1e-12));
}

TEST_CASE("delta_at mid-life matches the closed form") {
  const Contract euro = european_call(100.0);
  const std::size_t m = 100;
  std::vector<double> vals;
  for (std::size_t i = 0; i <= m / 2; ++i) {
    vals.push_back(100.0 + 20.0 * static_cast<double>(i) / (m / 2));
  }
  const DiscretePath prefix(1.0 / m, std::move(vals));
  const McParams mc{200000, m, 1.0, 100.0, 29, 0};
  const McEstimate at = delta_at(prefix, euro, kBs25, mc);
  const double truth = oracles::bs_call_delta(120.0, 100.0, 0.25, 0.5);
  CHECK(std::abs(at.mean - truth) < 3.0 * at.std_error);

  // a constant payoff has zero delta: the weight has zero mean
  const McEstimate zero = delta_at(prefix, constant_one(), kBs25, mc);
  CHECK(std::abs(zero.mean) < 3.0 * zero.std_error);

  const DiscretePath full(1.0 / m, std::vector<double>(m + 1, 100.0));
  CHECK_THROWS_AS(static_cast<void>(delta_at(full, euro, kBs25, mc)), std::invalid_argument);
}

TEST_CASE("gamma_at mid-life matches the closed form") {
  const Contract euro = european_call(100.0);
  const std::size_t m = 100;
  std::vector<double> vals;
  for (std::size_t i = 0; i <= m / 4; ++i) vals.push_back(100.0 + 0.1 * static_cast<double>(i));
  const DiscretePath prefix(1.0 / m, std::move(vals));
  const McParams mc{300000, m, 1.0, 100.0, 30, 0};
  const McEstimate at = gamma_at(prefix, euro, kBs25, mc);
  const double truth = oracles::bs_call_gamma(102.5, 100.0, 0.25, 0.75);
  CHECK(std::abs(at.mean - truth) < 3.0 * at.std_error);
}

TEST_CASE("fd_greek oracle behaviour") {
  const McParams mc{100000, 50, 1.0, 100.0, 31, 0};
  const McEstimate d = fd_greek(kBs25, european_call(100.0), FdGreek::delta, 0.25, mc);
  const double truth = oracles::bs_call_delta(100.0, 100.0, 0.25, 1.0);
  CHECK(std::abs(d.mean - truth) < 3.0 * d.std_error + 1e-3);

  // gamma of a linear payoff vanishes path by path
  const McEstimate g = fd_greek(kBs25, terminal_value(), FdGreek::gamma, 0.5, mc);
  CHECK(std::abs(g.mean) <= 3.0 * g.std_error + 1e-10);

  CHECK_THROWS_AS(
      static_cast<void>(fd_greek(kBs25, terminal_value(), FdGreek::delta, 0.0, mc)),
      std::invalid_argument);
}

TEST_CASE("directional vega: zero direction, closed form, fd oracle") {
  const Contract euro = european_call(100.0);
  const McParams mc{200000, 100, 1.0, 100.0, 32, 0};

  const McEstimate zero = vega_directional_mc(
      kBs25, euro, [](double, double) { return 0.0; }, mc);
  CHECK(zero.mean == 0.0);
  CHECK(zero.std_error == 0.0);

  // sigma_bar^2 parameter direction: u(t, x) = x^2
  const McEstimate vega_param = vega_directional_mc(
      kBs25, euro, [](double, double x) { return x * x; }, mc);
  const double truth = oracles::bs_call_variance_vega(100.0, 100.0, 0.25, 1.0);
  CHECK(within(vega_param.mean, truth, 0.03 * truth + 3.0 * vega_param.std_error));

  // sigma_bar^2 parameter direction against the finite difference in the
  // Black-Scholes parameter variance
  const McEstimate fd_param = fd_greek(kBs25, euro, FdGreek::vega_sigma2, 0.005, mc);
  CHECK(within(vega_param.mean, fd_param.mean,
               4.0 * std::hypot(vega_param.std_error, fd_param.std_error) +
                   0.02 * std::abs(fd_param.mean)));

  // additive unit direction against the pointwise variance-bump oracle,
  // both under the local-volatility clone of the same dynamics
  const VolatilityModel bs_local = VolatilityModel::local(
      [](double, double x) { return 0.25 * x; }, [](double, double) { return 0.25; });
  const McEstimate vega_unit = vega_directional_mc(
      bs_local, euro, [](double, double) { return 1.0; }, mc);
  const McEstimate fd = fd_greek(bs_local, euro, FdGreek::vega_sigma2, 2.0, mc);
  CHECK(within(vega_unit.mean, fd.mean,
               4.0 * std::hypot(vega_unit.std_error, fd.std_error) + 0.03 * std::abs(fd.mean)));

  // direction supported on [0, t) only: sane sign for a call-type payoff
  const VolatilityModel bs2 = VolatilityModel::black_scholes(0.2);
  const Contract asian = asian_forward_start(0.2, 1.0);
  const McEstimate window = vega_directional_mc(
      bs2, asian, [](double t, double x) { return t < 0.1 ? x * x : 0.0; }, mc);
  CHECK(window.mean > -3.0 * window.std_error);

  // path-dependent sigma is outside this estimator's contract
  const VolatilityModel pd = VolatilityModel::path_dependent(
      [](const DiscretePath& p) { return 0.2 * p.values.back(); });
  CHECK_THROWS_AS(static_cast<void>(vega_directional_mc(pd, euro, [](double, double) { return 1.0; }, mc)),
                  std::invalid_argument);
}

TEST_CASE("vega surface integrates back to the directional estimate") {
  const Contract euro = european_call(100.0);
  const SimulatedBatch batch = simulate(kBs25, 100.0, 1.0, 100, 100000, 33);
  VegaSurfaceBins bins;
  bins.time_stride = 1;
  bins.n_bins = 60;
  bins.min_occupancy = 25;
  const VegaSurface surf = vega_surface(batch, euro, kBs25, bins);
  const McEstimate direct = vega_directional(
      batch, euro, kBs25, [](double, double) { return 1.0; });
  CHECK(surf.integral() == doctest::Approx(direct.mean).epsilon(0.05));
}

TEST_CASE("vega surface in the near-deterministic regime") {
  const VolatilityModel tiny = VolatilityModel::black_scholes(1e-6);
  const SimulatedBatch batch = simulate(tiny, 100.0, 1.0, 20, 4000, 34);
  VegaSurfaceBins bins;
  bins.time_stride = 5;
  bins.n_bins = 10;
  bins.min_occupancy = 50;
  bins.x_min = 91.0;  // 100 sits inside a cell, not on an edge
  bins.x_max = 111.0;
  const VegaSurface surf = vega_surface(batch, european_call(95.0), tiny, bins);
  for (std::size_t j = 0; j < surf.times.size(); ++j) {
    std::size_t occupied = 0;
    for (std::size_t c = 0; c < surf.n_bins; ++c) {
      const std::size_t cell = j * surf.n_bins + c;
      if (surf.occupancy[cell] > 0) {
        ++occupied;
        CHECK(surf.occupancy[cell] == batch.n_paths);  // all mass in one cell
        CHECK(std::isfinite(surf.m[cell]));
      }
    }
    CHECK(occupied == 1);
  }
  CHECK_THROWS_AS(static_cast<void>(vega_surface(batch, european_call(95.0), tiny,
                                                 VegaSurfaceBins{5, 0, 50, 0.0, 0.0})),
                  std::invalid_argument);
}

TEST_CASE("strong correction vanishes for the European call") {
  StrongCorrectionParams params;
  params.outer = {256, 50, 1.0, 100.0, 35, 0};
  params.inner_paths = 64;
  params.s_stride = 10;
  const StrongCorrectionResult r = strong_correction(kBs25, european_call(100.0), params);
  CHECK(r.correction.mean == 0.0);  // corners coincide exactly under CRN
  CHECK(r.correction.std_error == 0.0);
}

TEST_CASE("strong correction of a synthetic unit-bracket functional") {
  // f = int y du has bracket 1, so the correction is
  // E[(1/T) int (T-s) z_s ds] = T/2
  StrongCorrectionParams params;
  params.outer = {4000, 100, 1.0, 100.0, 36, 0};
  params.s_stride = 10;
  const StrongCorrectionResult r =
      strong_correction_with_price(kBs25, running_integral(), params);
  CHECK(std::abs(r.correction.mean - 0.5) < 3.0 * r.correction.std_error);
}

TEST_CASE("weakly delta plus correction recovers the full delta of a linear payoff") {
  const Contract avg = average_price_call(0.0, 1.0);
  const McParams big{2000000, 100, 1.0, 100.0, 37, 0};
  const McEstimate d = delta_mc(kBs25, avg, WeightSpec::weakly(), big);

  StrongCorrectionParams params;
  params.outer = {1500, 100, 1.0, 100.0, 38, 0};
  params.inner_paths = 200;
  params.s_stride = 10;
  const StrongCorrectionResult r = strong_correction(kBs25, avg, params);

  const double total = d.mean + r.correction.mean;
  CHECK(within(total, 1.0, 0.02));
}

TEST_CASE("martingale diagnostic is flat for the BS call") {
  const McParams mc{100000, 100, 1.0, 100.0, 39, 0};
  const auto delta_fn = [](double t, double x) {
    return oracles::bs_call_delta(x, 100.0, 0.25, 1.0 - t);
  };
  const MartingaleDiagnostic diag =
      martingale_diagnostic(kBs25, {0.0, 0.25, 0.5, 0.75}, mc, delta_fn);
  const double anchor = oracles::bs_call_delta(100.0, 100.0, 0.25, 1.0);
  REQUIRE(diag.estimates.size() == 4);
  CHECK(diag.estimates[0].mean == doctest::Approx(anchor).epsilon(1e-12));
  for (const auto& e : diag.estimates) {
    CHECK(std::abs(e.mean - anchor) <= 3.0 * e.std_error + 1e-12);
  }
}

TEST_CASE("martingale diagnostic with nested FD deltas") {
  // constant payoff: the FD delta vanishes identically
  const McParams mc{512, 40, 1.0, 100.0, 40, 0};
  const MartingaleDiagnostic zero =
      martingale_diagnostic_fd(kBs25, constant_one(), {0.25, 0.75}, mc, 64, 1.0);
  for (const auto& e : zero.estimates) CHECK(std::abs(e.mean) <= 3.0 * e.std_error + 1e-12);

  // VKO call: flat within 4 combined SE at desk scale
  const McParams vko_mc{600, 50, 1.0, 100.0, 41, 0};
  const MartingaleDiagnostic diag = martingale_diagnostic_fd(
      kBs25, vko_call(100.0, 0.06), {0.0, 0.25, 0.5, 0.75}, vko_mc, 600, 2.0);
  CHECK(diag.max_pairwise_deviation_se < 4.0);
}

TEST_CASE("batch and streaming estimators agree bit for bit") {
  const Contract euro = european_call(100.0);
  const McParams mc{3000, 40, 1.0, 100.0, 43, 0};
  const SimulatedBatch batch = simulate(kBs25, 100.0, 1.0, 40, 3000, 43);

  CHECK(price(batch, euro).mean == price_mc(kBs25, euro, mc).mean);
  CHECK(delta(batch, euro, WeightSpec::weakly()).mean ==
        delta_mc(kBs25, euro, WeightSpec::weakly(), mc).mean);
  CHECK(gamma(batch, euro, kBs25).mean == gamma_mc(kBs25, euro, mc).mean);

  McParams t1 = mc, t7 = mc;
  t1.threads = 1;
  t7.threads = 7;
  CHECK(delta_mc(kBs25, euro, WeightSpec::weakly(), t1).mean ==
        delta_mc(kBs25, euro, WeightSpec::weakly(), t7).mean);
  CHECK(delta_mc(kBs25, euro, WeightSpec::weakly(), t1).std_error ==
        delta_mc(kBs25, euro, WeightSpec::weakly(), t7).std_error);
}

TEST_CASE("delta reports non-positive sigma") {
  VolatilityModel degenerate = VolatilityModel::local([](double, double) { return 0.0; },
                                                      [](double, double) { return 0.0; });
  degenerate.enforce_positive_sigma(false);
  const SimulatedBatch batch = simulate(degenerate, 100.0, 1.0, 10, 64, 44);
  CHECK_THROWS_AS(static_cast<void>(delta(batch, european_call(100.0), WeightSpec::weakly())),
                  std::runtime_error);
}

TEST_CASE("convergence log records log-spaced checkpoints") {
  const McParams mc{20000, 20, 1.0, 100.0, 45, 0};
  ConvergenceLog log;
  const McEstimate e = price_mc(kBs25, european_call(100.0), mc, &log);
  REQUIRE(!log.empty());
  CHECK(log.back().n == 20000);
  CHECK(log.back().mean == e.mean);
  for (std::size_t i = 1; i < log.size(); ++i) CHECK(log[i].n > log[i - 1].n);
}

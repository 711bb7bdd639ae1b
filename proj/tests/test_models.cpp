#include <doctest.h>

#include <pathmc/model.hpp>
#include <pathmc/path.hpp>
#include <pathmc/stats.hpp>

#include <cmath>
#include <sstream>

using namespace pathmc;

namespace {

// sigma_bar (1 + alpha QV(log path)) y_t
VolatilityModel qv_scaled_model(double sigma, double alpha) {
  auto fn = [sigma, alpha](const DiscretePath& path) {
    double qv = 0.0;
    double prev = std::log(path.values.front());
    for (std::size_t i = 1; i < path.values.size(); ++i) {
      const double l = std::log(path.values[i]);
      qv += (l - prev) * (l - prev);
      prev = l;
    }
    return sigma * (1.0 + alpha * qv) * path.values.back();
  };
  return VolatilityModel::path_dependent(fn);
}

}  // namespace

TEST_CASE("degenerate zero volatility") {
  VolatilityModel flat = VolatilityModel::local([](double, double) { return 0.0; },
                                                [](double, double) { return 0.0; });
  flat.enforce_positive_sigma(false);
  const SimulatedBatch b = simulate(flat, 100.0, 1.0, 20, 8, 1);
  for (double v : b.x) CHECK(v == 100.0);
  for (double v : b.z) CHECK(v == 1.0);
}

TEST_CASE("Black-Scholes tangent equals x / x0 pathwise") {
  const VolatilityModel bs = VolatilityModel::black_scholes(0.25);
  const SimulatedBatch b = simulate(bs, 100.0, 1.0, 100, 2000, 7);
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    const auto x = b.x_row(p);
    const auto z = b.z_row(p);
    for (std::size_t i = 0; i <= b.n_steps; ++i) {
      CHECK(std::abs(z[i] - x[i] / 100.0) <= 1e-12 * z[i]);
    }
  }
}

TEST_CASE("driftless dynamics are a martingale") {
  const VolatilityModel bs = VolatilityModel::black_scholes(0.25);
  const std::size_t n = 100000;
  Accumulator acc;
  SimulatedBatch block = allocate_batch(kReductionBlock, 50, 1.0 / 50.0, 100.0, 11);
  for (std::size_t lo = 0; lo < n; lo += kReductionBlock) {
    const std::size_t count = std::min(n - lo, kReductionBlock);
    if (block.n_paths != count) block = allocate_batch(count, 50, 1.0 / 50.0, 100.0, 11);
    simulate_into(bs, lo, block);
    for (std::size_t p = 0; p < count; ++p) acc.add(block.x_row(p).back());
  }
  const McEstimate e = acc.estimate(11);
  CHECK(std::abs(e.mean - 100.0) < 3.0 * e.std_error);
}

TEST_CASE("determinism across runs and thread counts") {
  const VolatilityModel bs = VolatilityModel::black_scholes(0.2);
  const SimulatedBatch a = simulate(bs, 100.0, 0.5, 60, 4000, 42, 1);
  const SimulatedBatch b = simulate(bs, 100.0, 0.5, 60, 4000, 42, 4);
  const SimulatedBatch c = simulate(bs, 100.0, 0.5, 60, 4000, 42, 8);
  CHECK(a.x == b.x);
  CHECK(a.x == c.x);
  CHECK(a.dw == b.dw);
  CHECK(a.z == c.z);
}

TEST_CASE("tangent positivity") {
  const VolatilityModel m = qv_scaled_model(0.2, 0.5);
  const SimulatedBatch b = simulate(m, 100.0, 0.5, 40, 64, 3);
  for (double z : b.z) CHECK(z > 0.0);
  for (double x : b.x) CHECK(x > 0.0);
}

TEST_CASE("simulate_from_prefix with the trivial prefix reproduces simulate") {
  const VolatilityModel bs = VolatilityModel::black_scholes(0.25);
  const SimulatedBatch plain = simulate(bs, 100.0, 1.0, 80, 512, 5);
  const DiscretePath trivial(1.0 / 80.0, {100.0});
  const SimulatedBatch cond = simulate_from_prefix(bs, trivial, 1.0, 80, 512, 5);
  CHECK(plain.x == cond.x);
  CHECK(plain.dw == cond.dw);
  CHECK(plain.z == cond.z);
}

TEST_CASE("simulate_from_prefix martingale from the prefix endpoint") {
  const VolatilityModel bs = VolatilityModel::black_scholes(0.25);
  const std::size_t m = 100;
  const double dt = 1.0 / static_cast<double>(m);
  std::vector<double> vals;
  for (std::size_t i = 0; i <= m / 2; ++i) {
    vals.push_back(100.0 + 20.0 * static_cast<double>(i) / (m / 2));
  }
  const DiscretePath prefix(dt, std::move(vals));
  const SimulatedBatch b = simulate_from_prefix(bs, prefix, 1.0, m, 60000, 6);
  CHECK(b.prefix_steps == m / 2);
  Accumulator acc;
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    const auto row = b.x_row(p);
    CHECK(row[m / 2] == 120.0);  // prefix kept verbatim
    CHECK(b.z_row(p)[m / 2] == 1.0);  // tangent restarted
    acc.add(row.back());
  }
  const McEstimate e = acc.estimate(6);
  CHECK(std::abs(e.mean - 120.0) < 3.0 * e.std_error);
}

TEST_CASE("path-dependent volatility smoke") {
  const VolatilityModel m = qv_scaled_model(0.2, 0.5);
  const std::size_t steps = 30;
  const double dt = 0.5 / static_cast<double>(steps);
  std::vector<double> vals;
  for (std::size_t i = 0; i <= steps / 2; ++i) vals.push_back(100.0 + static_cast<double>(i));
  const DiscretePath prefix(dt, std::move(vals));
  const SimulatedBatch b = simulate_from_prefix(m, prefix, 0.5, steps, 32, 9);
  for (double x : b.x) {
    CHECK(std::isfinite(x));
    CHECK(x > 0.0);
  }
}

TEST_CASE("non-finite stepping is reported with path and step") {
  VolatilityModel wild = VolatilityModel::local(
      [](double, double x) { return 1e9 * x * x; }, [](double, double x) { return 2e9 * x; });
  try {
    simulate(wild, 100.0, 1.0, 50, 4, 12);
    FAIL("expected SimulationError");
  } catch (const SimulationError& e) {
    CHECK(e.path_index < 4);
    CHECK(std::string(e.what()).find("path") != std::string::npos);
  }
}

TEST_CASE("batch CSV round trip") {
  const VolatilityModel bs = VolatilityModel::black_scholes(0.3);
  const SimulatedBatch b = simulate(bs, 50.0, 0.25, 12, 6, 77);
  std::stringstream buf;
  write_batch_csv(buf, b);
  const SimulatedBatch r = read_batch_csv(buf, bs);
  CHECK(r.n_paths == b.n_paths);
  CHECK(r.n_steps == b.n_steps);
  CHECK(r.x == b.x);
  CHECK(r.dw == b.dw);
  CHECK(r.z == b.z);
  CHECK(r.sigma == b.sigma);
  CHECK(r.dsigma == b.dsigma);
}

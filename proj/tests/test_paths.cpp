#include <doctest.h>

#include <pathmc/model.hpp>
#include <pathmc/path.hpp>
#include <pathmc/payoff.hpp>
#include <pathmc/rng.hpp>
#include <pathmc/stats.hpp>

#include <cmath>
#include <sstream>

using namespace pathmc;

namespace {

DiscretePath random_walk(std::uint64_t seed, std::size_t steps, double grid_step,
                         double start = 0.0, double scale = 1.0) {
  NormalStream rng(seed, 0);
  std::vector<double> v{start};
  for (std::size_t i = 0; i < steps; ++i) {
    v.push_back(v.back() + scale * std::sqrt(grid_step) * rng.next());
  }
  return DiscretePath(grid_step, std::move(v));
}

}  // namespace

TEST_CASE("path construction invariants") {
  CHECK_THROWS_AS(DiscretePath(0.1, {}), std::invalid_argument);
  CHECK_THROWS_AS(DiscretePath(0.0, {1.0}), std::invalid_argument);
  DiscretePath p(0.25, {1.0, 2.0, 3.0});
  CHECK(p.terminal_left_limit == 3.0);
  CHECK(p.final_time() == doctest::Approx(0.5));
  CHECK(p.steps() == 2);
  CHECK_FALSE(p.has_terminal_jump());
}

TEST_CASE("flat extension") {
  DiscretePath p(1.0, {100.0});
  const DiscretePath e = flat_extension(p, 3);
  CHECK(e.values == std::vector<double>{100.0, 100.0, 100.0, 100.0});
  CHECK(e.terminal_left_limit == 100.0);

  DiscretePath q(1.0, {1.0, 2.0});
  CHECK(flat_extension(q, 0) == q);

  // extending a bumped path absorbs the jump into the interior
  const DiscretePath b = bump(DiscretePath(1.0, {0.0, 1.0, 3.0}), 0.5);
  CHECK(b.values == std::vector<double>{0.0, 1.0, 3.5});
  CHECK(b.terminal_left_limit == 3.0);
  const DiscretePath be = flat_extension(b, 2);
  CHECK(be.values == std::vector<double>{0.0, 1.0, 3.5, 3.5, 3.5});
  CHECK(be.terminal_left_limit == 3.5);
  CHECK_FALSE(be.has_terminal_jump());
}

TEST_CASE("bump") {
  DiscretePath p(0.5, {0.0, 1.0});
  const DiscretePath b = bump(p, 0.25);
  CHECK(b.values == std::vector<double>{0.0, 1.25});
  CHECK(b.terminal_left_limit == 1.0);

  CHECK(bump(p, 0.0) == p);

  const DiscretePath w = random_walk(3, 20, 0.05);
  CHECK(bump(bump(w, 0.7), -0.7) == w);  // exact involution
}

TEST_CASE("concatenate") {
  CHECK(concatenate(DiscretePath(1.0, {5.0}), DiscretePath(1.0, {0.0, 1.0, 2.0})).values ==
        std::vector<double>{5.0, 6.0, 7.0});
  CHECK(concatenate(DiscretePath(1.0, {1.0, 2.0}), DiscretePath(1.0, {2.0, 2.0})).values ==
        std::vector<double>{1.0, 2.0, 2.0});
  CHECK(concatenate(DiscretePath(1.0, {0.0, 1.0}), DiscretePath(1.0, {10.0, 9.0})).values ==
        std::vector<double>{0.0, 1.0, 0.0});
  CHECK_THROWS_AS(concatenate(DiscretePath(1.0, {1.0}), DiscretePath(0.5, {1.0, 2.0})),
                  std::invalid_argument);
}

TEST_CASE("lambda distance") {
  const DiscretePath p = random_walk(4, 12, 0.1);
  CHECK(lambda_distance(p, p) == 0.0);

  CHECK(lambda_distance(DiscretePath(0.3, {0.0, 0.0}), DiscretePath(0.3, {0.0})) ==
        doctest::Approx(0.3));
  CHECK(lambda_distance(DiscretePath(1.0, {0.0, 1.0}), DiscretePath(1.0, {0.0, 3.0})) == 2.0);

  const DiscretePath q = random_walk(5, 7, 0.1);
  CHECK(lambda_distance(p, q) == lambda_distance(q, p));
  CHECK_THROWS_AS(lambda_distance(p, DiscretePath(0.2, {0.0})), std::invalid_argument);
}

TEST_CASE("pathwise integral") {
  const DiscretePath w = random_walk(6, 40, 0.025, 2.0);
  const PathFunctional one = [](const DiscretePath&) { return 1.0; };
  CHECK(pathwise_integral(one, w) ==
        doctest::Approx(w.values.back() - w.values.front()).epsilon(1e-14));

  const PathFunctional level = [](const DiscretePath& p) { return p.values.back(); };
  CHECK(pathwise_integral(level, DiscretePath(1.0, {0.0, 1.0, 0.0})) == -1.0);

  // linearity in the integrand
  const PathFunctional f1 = [](const DiscretePath& p) { return p.values.back(); };
  const PathFunctional f2 = [](const DiscretePath& p) { return p.final_time(); };
  const PathFunctional combo = [&](const DiscretePath& p) { return 2.0 * f1(p) - 3.0 * f2(p); };
  CHECK(pathwise_integral(combo, w) ==
        doctest::Approx(2.0 * pathwise_integral(f1, w) - 3.0 * pathwise_integral(f2, w))
            .epsilon(1e-12));
}

TEST_CASE("quadratic variation") {
  CHECK(quadratic_variation(DiscretePath(1.0, {3.0, 3.0, 3.0})) == 0.0);
  CHECK(quadratic_variation(DiscretePath(1.0, {0.0, 1.0, 0.0, 1.0})) == 3.0);

  const DiscretePath w = random_walk(8, 60, 0.01);
  CHECK(quadratic_variation(flat_extension(w, 5)) == quadratic_variation(w));
}

TEST_CASE("discrete Ito identity is exact on simulated paths") {
  // y_T^2 - y_0^2 - 2 int y dy == QV, path by path
  const VolatilityModel bs = VolatilityModel::black_scholes(0.3);
  const SimulatedBatch batch = simulate(bs, 100.0, 1.0, 200, 16, 99);
  const PathFunctional level = [](const DiscretePath& p) { return p.values.back(); };
  DiscretePath path;
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    batch.copy_path_into(p, path);
    const double lhs = path.values.back() * path.values.back() -
                       path.values.front() * path.values.front() -
                       2.0 * pathwise_integral(level, path);
    const double rhs = quadratic_variation(path);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("Brownian quadratic variation concentrates at t") {
  // mean QV of standard Brownian paths on [0,1] is 1
  const VolatilityModel brown = VolatilityModel::local([](double, double) { return 1.0; },
                                                       [](double, double) { return 0.0; });
  const SimulatedBatch batch = simulate(brown, 1.0, 1.0, 500, 20000, 2024);
  Accumulator acc;
  DiscretePath path;
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    batch.copy_path_into(p, path);
    acc.add(quadratic_variation(path));
  }
  const McEstimate e = acc.estimate(2024);
  CHECK(std::abs(e.mean - 1.0) < 3.0 * e.std_error);
}

TEST_CASE("Doleans exponential") {
  CHECK(doleans_exponential(DiscretePath(1.0, {0.0, 0.0, 0.0})) == 1.0);

  // sigma w path: equals exp(y_T - y_0 - QV/2) by construction
  DiscretePath w = random_walk(11, 100, 0.01, 0.0, 0.4);
  const double expected =
      std::exp(w.values.back() - w.values.front() - 0.5 * quadratic_variation(w));
  CHECK(doleans_exponential(w) == doctest::Approx(expected).epsilon(1e-14));

  // terminal jump of 0.1 on the flat zero path: pure-jump exponential
  const DiscretePath jump = bump(DiscretePath(0.5, {0.0, 0.0, 0.0}), 0.1);
  CHECK(doleans_exponential(jump) == doctest::Approx(1.1).epsilon(1e-14));

  CHECK_THROWS_AS(doleans_exponential(bump(DiscretePath(1.0, {0.0, 0.0}), -1.0)),
                  std::domain_error);
}

TEST_CASE("paths CSV round trip") {
  std::vector<DiscretePath> paths{random_walk(21, 9, 0.125, 5.0), random_walk(22, 3, 0.125)};
  std::stringstream buf;
  write_paths_csv(buf, paths);
  const auto back = read_paths_csv(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[0].values == paths[0].values);
  CHECK(back[1].values == paths[1].values);
  CHECK(back[0].grid_step == paths[0].grid_step);
}

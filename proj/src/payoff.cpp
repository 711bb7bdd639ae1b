#include <pathmc/payoff.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <memory>
#include <stdexcept>

namespace pathmc {

namespace {

std::size_t snap_to_grid(double t, const DiscretePath& path, const char* what,
                         std::atomic<bool>* warned) {
  const double raw = t / path.grid_step;
  const auto idx = static_cast<std::size_t>(std::llround(raw));
  if (warned && std::abs(raw - static_cast<double>(idx)) > 1e-9 &&
      !warned->exchange(true)) {
    std::cerr << "warning: " << what << " time " << t << " is off the grid, snapped to "
              << static_cast<double>(idx) * path.grid_step << "\n";
  }
  if (idx >= path.values.size()) {
    throw std::invalid_argument(std::string(what) + ": monitoring time beyond path horizon");
  }
  return idx;
}

}  // namespace

Contract european_call(double strike) {
  if (!(strike > 0.0)) throw std::invalid_argument("european_call: strike must be > 0");
  return Contract{
      "european_call",
      [strike](const DiscretePath& path) { return std::max(path.values.back() - strike, 0.0); },
      {}};
}

Contract vko_call(double strike, double variance_barrier) {
  if (!(strike > 0.0)) throw std::invalid_argument("vko_call: strike must be > 0");
  if (!(variance_barrier > 0.0)) throw std::invalid_argument("vko_call: barrier must be > 0");
  return Contract{
      "vko_call",
      [strike, variance_barrier](const DiscretePath& path) {
        double qv = 0.0;
        double prev = path.values.front();
        if (!(prev > 0.0)) throw std::domain_error("vko_call: non-positive path value");
        double log_prev = std::log(prev);
        for (std::size_t i = 1; i < path.values.size(); ++i) {
          const double v = path.values[i];
          if (!(v > 0.0)) throw std::domain_error("vko_call: non-positive path value");
          const double log_v = std::log(v);
          const double d = log_v - log_prev;
          qv += d * d;
          log_prev = log_v;
        }
        if (!(qv < variance_barrier)) return 0.0;
        return std::max(path.values.back() - strike, 0.0);
      },
      {}};
}

Contract asian_forward_start(double t1, double maturity) {
  if (!(t1 >= 0.0 && t1 < maturity)) {
    throw std::invalid_argument("asian_forward_start: need 0 <= t1 < maturity");
  }
  auto warned = std::make_shared<std::atomic<bool>>(false);
  return Contract{
      "asian_forward_start",
      [t1, maturity, warned](const DiscretePath& path) {
        const std::size_t last = snap_to_grid(maturity, path, "asian_forward_start", nullptr);
        const std::size_t i1 = snap_to_grid(t1, path, "asian_forward_start", warned.get());
        if (i1 >= last) throw std::invalid_argument("asian_forward_start: empty averaging window");
        // trapezoid over [t1, T]
        double acc = 0.5 * (path.values[i1] + path.values[last]);
        for (std::size_t i = i1 + 1; i < last; ++i) acc += path.values[i];
        const double window = static_cast<double>(last - i1) * path.grid_step;
        const double average = acc * path.grid_step / window;
        return std::max(path.values[last] - average, 0.0);
      },
      {}};
}

Contract average_price_call(double strike, double maturity) {
  if (!(strike >= 0.0)) throw std::invalid_argument("average_price_call: strike must be >= 0");
  if (!(maturity > 0.0)) throw std::invalid_argument("average_price_call: maturity must be > 0");
  return Contract{
      "average_price_call",
      [strike, maturity](const DiscretePath& path) {
        const std::size_t last = snap_to_grid(maturity, path, "average_price_call", nullptr);
        if (last == 0) throw std::invalid_argument("average_price_call: empty window");
        double acc = 0.5 * (path.values[0] + path.values[last]);
        for (std::size_t i = 1; i < last; ++i) acc += path.values[i];
        const double average = acc / static_cast<double>(last);
        return std::max(average - strike, 0.0);
      },
      {}};
}

Contract discretely_monitored(std::function<double(std::span<const double>)> phi,
                              std::vector<double> times) {
  if (times.empty()) throw std::invalid_argument("discretely_monitored: times must be non-empty");
  if (!std::is_sorted(times.begin(), times.end()) ||
      std::adjacent_find(times.begin(), times.end()) != times.end() || times.front() <= 0.0) {
    throw std::invalid_argument("discretely_monitored: times must be strictly increasing and > 0");
  }
  auto warned = std::make_shared<std::atomic<bool>>(false);
  Contract c;
  c.label = "discretely_monitored";
  c.monitoring = times;
  c.payoff = [phi = std::move(phi), times = std::move(times), warned](const DiscretePath& path) {
    std::vector<double> at;
    at.reserve(times.size());
    for (double t : times) {
      at.push_back(path.values[snap_to_grid(t, path, "discretely_monitored", warned.get())]);
    }
    return phi(at);
  };
  return c;
}

}  // namespace pathmc

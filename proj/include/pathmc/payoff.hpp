#pragma once

#include <pathmc/path.hpp>

#include <span>
#include <string>
#include <vector>

namespace pathmc {

/// A derivative contract: a payoff functional on paths over [0, T],
/// identified by a label. Discretely monitored contracts carry their
/// monitoring times (used to validate allocation functions).
struct Contract {
  std::string label;
  PathFunctional payoff;
  std::vector<double> monitoring;  // empty unless discretely monitored
};

/// (x_T - K)^+.
Contract european_call(double strike);

/// (x_T - K)^+ 1{QV(log path) < H}. Pass H = +infinity for a plain call.
/// Evaluation throws std::domain_error on non-positive path values.
Contract vko_call(double strike, double variance_barrier);

/// Forward-start floating-strike Asian call,
/// (x_T - (1 / (T - t1)) int_{t1}^{T} x_u du)^+ with a trapezoid average.
/// The maturity fixes the averaging window, so the payoff ignores any flat
/// extension of the path beyond it. t1 off the grid snaps to the nearest
/// grid time (warning on first occurrence).
Contract asian_forward_start(double t1, double maturity);

/// phi evaluated at the path values at the given monitoring times
/// (grid-snapped). times must be strictly increasing and positive.
Contract discretely_monitored(std::function<double(std::span<const double>)> phi,
                              std::vector<double> times);

/// ((1/T) int_0^T x_u du - K)^+ with a trapezoid average; K = 0 gives the
/// plain (linear) average payoff.
Contract average_price_call(double strike, double maturity);

}  // namespace pathmc

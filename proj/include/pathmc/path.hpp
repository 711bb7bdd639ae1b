#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace pathmc {

/// A cadlag path sampled on a uniform time grid. values[i] is the level at
/// time i * grid_step. The only discontinuity a path may carry is at its
/// final grid time: terminal_left_limit holds the left limit there and
/// equals values.back() until a terminal bump is applied.
struct DiscretePath {
  double grid_step = 0.0;
  std::vector<double> values;
  double terminal_left_limit = 0.0;

  DiscretePath() = default;
  DiscretePath(double grid_step, std::vector<double> values);
  DiscretePath(double grid_step, std::vector<double> values, double terminal_left_limit);

  double final_time() const { return grid_step * static_cast<double>(values.size() - 1); }
  std::size_t steps() const { return values.size() - 1; }
  bool has_terminal_jump() const { return values.back() != terminal_left_limit; }
  double terminal_jump() const { return values.back() - terminal_left_limit; }

  friend bool operator==(const DiscretePath&, const DiscretePath&) = default;
};

/// A functional maps a path to a real number. Evaluation must be
/// deterministic: equal paths yield equal values.
using PathFunctional = std::function<double(const DiscretePath&)>;

/// Prolongs the path past its horizon at the terminal value. A positive
/// extension absorbs any terminal bump into the grid interior, so the
/// result is continuous at its new final time.
DiscretePath flat_extension(const DiscretePath& path, std::size_t extra_steps);

/// Shifts only the final value by h. The left limit is untouched, which
/// makes bump(bump(p, h), -h) == p exactly.
DiscretePath bump(const DiscretePath& path, double h);

/// Pastes suffix onto prefix, shifting the suffix levels so the result
/// joins continuously at the prefix's terminal value.
DiscretePath concatenate(const DiscretePath& prefix, const DiscretePath& suffix);

/// Metric on path space: sup-norm after flat-extending the shorter path to
/// the longer horizon, plus the horizon gap.
double lambda_distance(const DiscretePath& a, const DiscretePath& b);

/// Left-point pathwise integral: sum of h(path restricted to [0, t_i])
/// times the i-th grid increment.
double pathwise_integral(const PathFunctional& h, const DiscretePath& path);

/// Sum of squared grid increments. Makes the discrete Ito identity
/// values.back()^2 - values.front()^2 - 2 * pathwise_integral(l, path) == QV
/// hold exactly for l(Y) = y_t.
double quadratic_variation(const DiscretePath& path);

/// Stochastic (Doleans-Dade) exponential of the path. Grid increments are
/// treated as continuous moves; the terminal bump slot contributes the jump
/// factor (1 + dy) exp(-dy + dy^2 / 2). Throws std::domain_error when the
/// terminal jump is <= -1.
double doleans_exponential(const DiscretePath& path);

/// CSV row format: grid_step followed by the values.
void write_paths_csv(std::ostream& out, std::span<const DiscretePath> paths);
std::vector<DiscretePath> read_paths_csv(std::istream& in);

}  // namespace pathmc

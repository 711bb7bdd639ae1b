#pragma once

#include <pathmc/path.hpp>

#include <iosfwd>
#include <span>
#include <vector>

namespace pathmc {

/// Bump sizes of the functional-derivative estimators: h is the space bump
/// (path-value units), dt_steps the number of grid steps used as the flat
/// extension delta-t.
struct DerivativeConfig {
  double h = 1e-4;
  std::size_t dt_steps = 1;

  /// h = 1e-4 * max(1, |terminal value|), dt_steps = 1.
  static DerivativeConfig defaults_for(const DiscretePath& path);
};

/// Forward difference along the flat extension:
/// [f(path extended by dt_steps) - f(path)] / (dt_steps * grid_step).
double time_derivative(const PathFunctional& f, const DiscretePath& path,
                       const DerivativeConfig& cfg);

/// Central difference in the terminal bump: [f(Y^h) - f(Y^-h)] / (2h).
double space_derivative(const PathFunctional& f, const DiscretePath& path,
                        const DerivativeConfig& cfg);

/// [f(Y^h) - 2 f(Y) + f(Y^-h)] / h^2.
double second_space_derivative(const PathFunctional& f, const DiscretePath& path,
                               const DerivativeConfig& cfg);

/// Commutator of the space and time derivatives, estimated from the two
/// bump/extension orderings:
///   [f((Y^h) extended) - f((Y extended)^h)] / (dt * h),
/// averaged over +h and -h. Zero iff bumping and extending commute in the
/// limit. For the running integral f = int y du this equals +1.
double lie_bracket(const PathFunctional& f, const DiscretePath& path,
                   const DerivativeConfig& cfg);

/// Cross-check estimator built directly from nested differences,
/// Dx(Dt f) - Dt(Dx f). Agrees with lie_bracket up to discretization error.
double lie_bracket_nested(const PathFunctional& f, const DiscretePath& path,
                          const DerivativeConfig& cfg);

enum class PathDependenceKind {
  weakly,
  path_independent,
  discretely_monitored,
  delayed,
  strongly,
};

const char* to_string(PathDependenceKind kind);

struct BracketEvidence {
  double time = 0.0;
  double magnitude = 0.0;  // max |lie bracket| over the probe paths
};

/// Heuristic label plus the evidence it was derived from. The bracket
/// classes are exact properties of a functional; finitely many probes can
/// only ever suggest one, so the evidence is always returned.
struct PathDependenceClass {
  PathDependenceKind kind = PathDependenceKind::weakly;
  double delay_time = 0.0;                // set for kind == delayed
  std::vector<double> exceedance_times;   // probe times with |bracket| >= tol
  std::vector<BracketEvidence> evidence;  // one entry per probe time
};

/// Evaluates |lie_bracket| of f at every (probe path restricted to probe
/// time) and labels the functional: weakly when no exceedance, discretely
/// monitored when exceedances sit at isolated probe times, delayed when a
/// clean prefix precedes the first exceedance, strongly otherwise.
PathDependenceClass classify(const PathFunctional& f,
                             std::span<const DiscretePath> probe_paths,
                             std::span<const double> probe_times,
                             const DerivativeConfig& cfg, double tol);

/// Evidence table as CSV: time,abs_bracket.
void write_evidence_csv(std::ostream& out, const PathDependenceClass& cls);

}  // namespace pathmc

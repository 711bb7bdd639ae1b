#pragma once

#include <pathmc/funcderiv.hpp>
#include <pathmc/model.hpp>
#include <pathmc/payoff.hpp>
#include <pathmc/stats.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace pathmc {

/// Piecewise-constant allocation a(t), one value per grid step. Integrals
/// are exact step sums (long double accumulation), which is what the Gamma
/// -set membership checks rely on.
struct AllocationFunction {
  double grid_step = 0.0;
  std::vector<double> values;

  static AllocationFunction constant(double value, std::size_t n_steps, double grid_step);
  /// a = 1 / (i1 * grid_step) on [0, t1), 0 after; integrates to 1 exactly.
  static AllocationFunction uniform_until(double t1, std::size_t n_steps, double grid_step);
  /// Samples the density at step midpoints (exact integrals for linear a).
  static AllocationFunction from_density(const std::function<double(double)>& a,
                                         std::size_t n_steps, double grid_step);

  double integral_to(double t) const;
  double horizon() const { return grid_step * static_cast<double>(values.size()); }
};

/// Which Delta weight to build. weakly uses a = 1/T over the whole horizon
/// (no constraint); discrete requires int_0^{t_i} a = 1 at every monitoring
/// time of the contract; delayed requires int_0^{t1} a = 1 and a = 0 from
/// t1 on. Membership is validated to 1e-12 before any estimation.
struct WeightSpec {
  enum class Kind { weakly, discrete, delayed };
  Kind kind = Kind::weakly;
  AllocationFunction allocation;  // ignored for weakly
  double t1 = 0.0;                // delayed only

  static WeightSpec weakly() { return {}; }
  static WeightSpec discrete(AllocationFunction a);
  static WeightSpec delayed(AllocationFunction a, double t1);
};

/// Monte Carlo run parameters shared by the streaming estimators.
struct McParams {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  double horizon = 1.0;
  double x0 = 100.0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

using ConvergenceLog = std::vector<ConvergencePoint>;

// ---------------------------------------------------------------------------
// batch-level estimators (pure reductions over a SimulatedBatch)
// ---------------------------------------------------------------------------

McEstimate price(const SimulatedBatch& batch, const Contract& contract);

/// Weighted-expectation Delta: mean of g(X_T) * pi with
/// pi = sum a(t_i) z_i / sigma_i * dw_i (left points).
McEstimate delta(const SimulatedBatch& batch, const Contract& contract, const WeightSpec& spec);

/// Statistics of the weight pi itself (zero-mean and variance checks).
McEstimate weight_statistics(const SimulatedBatch& batch, const Contract& contract,
                             const WeightSpec& spec);

/// The validated per-step allocation behind a weight spec (weakly resolves
/// to a = 1/T).
std::vector<double> resolve_allocation(const WeightSpec& spec, const Contract& contract,
                                       std::size_t n_steps, double grid_step);

/// The weight of one path: sum of a_i z_i / sigma_i dw_i.
double path_weight(const SimulatedBatch& batch, std::size_t p,
                   std::span<const double> allocation);

/// The Gamma factor of one path: pi^2 - (dsigma0/sigma0) pi - 1/(T sigma0^2).
double path_gamma_weight(const SimulatedBatch& batch, std::size_t p,
                         const VolatilityModel& model);

/// Weighted-expectation Gamma at time 0: mean of g * xi with
/// xi = pi^2 - (dsigma0/sigma0) pi - 1/(T sigma0^2), pi the weakly weight.
McEstimate gamma(const SimulatedBatch& batch, const Contract& contract,
                 const VolatilityModel& model);

/// Directional Vega: mean of g * (1/2) int_0^T u(t, x_t) xi_{t,T} dt, where
/// u is the direction of the additive bump to the local-variance surface
/// sigma^2(t, x). Requires a local-volatility model with time-homogeneous
/// sigma. For a Black-Scholes parameter vega in sigma_bar^2, pass
/// u(t, x) = x^2.
McEstimate vega_directional(const SimulatedBatch& batch, const Contract& contract,
                            const VolatilityModel& model,
                            const std::function<double(double, double)>& u);

struct VegaSurfaceBins {
  std::size_t time_stride = 10;     // probe every time_stride-th grid step
  std::size_t n_bins = 50;          // price cells
  std::size_t min_occupancy = 50;   // cells below this are flagged empty
  double x_min = 0.0;               // explicit cell range; x_min >= x_max means
  double x_max = 0.0;               // auto-range from the batch
};

/// Binned estimate of the Vega density m(t, x): per cell
/// sum of g * xi_{t,T} over the paths landing in the cell / (2 n width).
struct VegaSurface {
  std::vector<double> times;
  std::vector<double> edges;  // n_bins + 1 shared price edges
  std::size_t n_bins = 0;
  std::vector<double> m;          // row-major [time][bin]; 0 where empty
  std::vector<double> std_error;  // within-cell standard error of m
  std::vector<std::size_t> occupancy;
  std::vector<char> empty;  // 1 where occupancy < min_occupancy

  double cell_width() const { return edges[1] - edges[0]; }
  /// sum of m * width * dt over occupied cells (consistency with the
  /// u = 1 directional vega).
  double integral() const;
};

VegaSurface vega_surface(const SimulatedBatch& batch, const Contract& contract,
                         const VolatilityModel& model, const VegaSurfaceBins& bins);

// ---------------------------------------------------------------------------
// streaming estimators (block-wise simulation, bit-identical to the batch
// forms for the same seed, any thread count; bounded memory at any n_paths)
// ---------------------------------------------------------------------------

McEstimate price_mc(const VolatilityModel& model, const Contract& contract, const McParams& mc,
                    ConvergenceLog* log = nullptr);
McEstimate delta_mc(const VolatilityModel& model, const Contract& contract, const WeightSpec& spec,
                    const McParams& mc, ConvergenceLog* log = nullptr);
McEstimate gamma_mc(const VolatilityModel& model, const Contract& contract, const McParams& mc,
                    ConvergenceLog* log = nullptr);
McEstimate vega_directional_mc(const VolatilityModel& model, const Contract& contract,
                               const std::function<double(double, double)>& u, const McParams& mc,
                               ConvergenceLog* log = nullptr);

// ---------------------------------------------------------------------------
// conditional (prefix) estimators
// ---------------------------------------------------------------------------

/// Delta at an observed history: (1 / (T - s)) E[g int_s^T z/sigma dw | Y_s]
/// with the tangent restarted at z_s = 1 (the z(Y_s) normalisation of the
/// restarted ensemble). mc.n_paths / n_steps / horizon / seed apply to the
/// conditional simulation.
McEstimate delta_at(const DiscretePath& prefix, const Contract& contract,
                    const VolatilityModel& model, const McParams& mc);

/// Gamma at an observed history: E[g xi_{s,T} | Y_s] under the restarted
/// normalisation.
McEstimate gamma_at(const DiscretePath& prefix, const Contract& contract,
                    const VolatilityModel& model, const McParams& mc);

// ---------------------------------------------------------------------------
// oracles and diagnostics
// ---------------------------------------------------------------------------

enum class FdGreek { delta, gamma, vega_sigma2 };

/// Central finite difference with common random numbers: in x0 for delta
/// and gamma, in the (pointwise) variance sigma^2 for vega_sigma2.
McEstimate fd_greek(const VolatilityModel& model, const Contract& contract, FdGreek which,
                    double bump_size, const McParams& mc);

struct MartingaleDiagnostic {
  std::vector<double> times;
  std::vector<McEstimate> estimates;       // E[Dx f(X_t) z_t] per probe time
  double max_pairwise_deviation_se = 0.0;  // max |e_i - e_j| in combined-SE units
};

/// Probes the martingale property of Dx f(X_t) z_t using a closed-form
/// Delta function (t, x_t) -> Dx f.
MartingaleDiagnostic martingale_diagnostic(const VolatilityModel& model,
                                           const std::vector<double>& times, const McParams& mc,
                                           const std::function<double(double, double)>& delta_fn);

/// Same probe with the Delta estimated per path by a central finite
/// difference of a nested Monte Carlo price (common random numbers).
MartingaleDiagnostic martingale_diagnostic_fd(const VolatilityModel& model,
                                              const Contract& contract,
                                              const std::vector<double>& times, const McParams& mc,
                                              std::size_t inner_paths, double bump_size);

// ---------------------------------------------------------------------------
// strongly path-dependent correction
// ---------------------------------------------------------------------------

/// Mean payoff over dynamics continued from the prefix; no batch is
/// materialised. Used as the inner estimator of the nested procedures.
McEstimate mc_price_from_prefix(const VolatilityModel& model, const Contract& contract,
                                const DiscretePath& prefix, double horizon, std::size_t n_steps,
                                std::size_t n_paths, std::uint64_t seed);

/// Deterministic functional Y -> inner-MC price of the contract given Y.
/// The fixed seed gives common random numbers across the bump/extension
/// corners of a Lie-bracket evaluation. max_rel_se, when supplied, records
/// the worst inner relative standard error seen.
PathFunctional make_mc_price_functional(const VolatilityModel& model, const Contract& contract,
                                        double horizon, std::size_t n_steps,
                                        std::size_t inner_paths, std::uint64_t seed,
                                        double* max_rel_se = nullptr);

struct StrongCorrectionParams {
  McParams outer;
  std::size_t inner_paths = 2000;
  std::size_t s_stride = 10;             // evaluate the bracket every s_stride-th step
  DerivativeConfig cfg{0.0, 1};          // h <= 0 resolves to defaults_for(prefix)
  double inner_se_warn_fraction = 0.5;   // flag when inner SE > fraction * |inner estimate|
};

struct StrongCorrectionResult {
  McEstimate correction;
  bool inner_noise_flagged = false;
  double max_inner_rel_se = 0.0;
};

/// Path-dependence correction to the weakly Delta,
///   E[(1/T) int_0^T int_0^t Lf(X_s) z_s ds dt]
///     = E[(1/T) int_0^T (T - s) Lf(X_s) z_s ds],
/// with Lf evaluated per (path, s) by funcderiv::lie_bracket applied to the
/// nested Monte Carlo price functional (common random numbers across the
/// four corners). The s-integral uses the midpoint rule on s_stride-step
/// segments, keeping the horizon endpoints off the node list. Total Delta =
/// weakly Delta + correction.
StrongCorrectionResult strong_correction(const VolatilityModel& model, const Contract& contract,
                                         const StrongCorrectionParams& params);

/// Same correction with an explicit price functional (synthetic or
/// analytic) instead of the nested Monte Carlo.
StrongCorrectionResult strong_correction_with_price(const VolatilityModel& model,
                                                    const PathFunctional& price_fn,
                                                    const StrongCorrectionParams& params);

/// Pointwise variance bump sigma -> sqrt(sigma^2 + dv); the finite
/// difference oracle for vega_sigma2. Black-Scholes and local kinds only.
VolatilityModel bump_variance(const VolatilityModel& model, double dv);

}  // namespace pathmc

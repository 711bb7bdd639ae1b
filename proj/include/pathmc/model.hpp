#pragma once

#include <pathmc/path.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>

namespace pathmc {

/// Raised when a simulation produces a non-finite state; identifies the
/// offending path and step.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::size_t path_index, std::size_t step)
      : std::runtime_error(what), path_index(path_index), step(step) {}
  std::size_t path_index;
  std::size_t step;
};

/// Functional volatility sigma(X_t) together with its space functional
/// derivative. Three kinds with increasingly general (and slower)
/// evaluation:
///   black_scholes  sigma(Y_t) = sigma_bar * y_t, exact lognormal stepping
///   local_vol      sigma(t, y_t), Euler stepping
///   path_dependent sigma is an arbitrary functional of the whole history
/// When no analytic space derivative is supplied it defaults to a central
/// bump of sigma.
class VolatilityModel {
 public:
  enum class Kind { black_scholes, local_vol, path_dependent };
  using LocalFn = std::function<double(double t, double x)>;

  static VolatilityModel black_scholes(double sigma);
  static VolatilityModel local(LocalFn sigma, LocalFn dsigma_dx = {},
                               bool time_homogeneous = true);
  static VolatilityModel path_dependent(PathFunctional sigma,
                                        PathFunctional dsigma_dx = {});

  Kind kind() const { return kind_; }
  double bs_sigma() const { return bs_sigma_; }
  bool time_homogeneous() const { return time_homogeneous_; }

  /// Disables the sigma > 0 stepping check (degenerate test models).
  VolatilityModel& enforce_positive_sigma(bool on) {
    enforce_positive_ = on;
    return *this;
  }
  bool positive_sigma_enforced() const { return enforce_positive_; }

  /// sigma as a functional of the path history.
  double sigma(const DiscretePath& path) const;
  /// Space functional derivative of sigma (analytic or central bump).
  double dsigma(const DiscretePath& path) const;

  /// Fast evaluation for local kinds; valid when kind() != path_dependent.
  double sigma_local(double t, double x) const;
  double dsigma_local(double t, double x) const;

 private:
  Kind kind_ = Kind::black_scholes;
  double bs_sigma_ = 0.0;
  LocalFn local_sigma_;
  LocalFn local_dsigma_;
  PathFunctional pd_sigma_;
  PathFunctional pd_dsigma_;
  bool time_homogeneous_ = true;
  bool enforce_positive_ = true;
};

/// A simulated ensemble for dx = sigma(X) dw together with the Brownian
/// increments, the tangent process z (dz = dsigma(X) z dw, z_0 = 1, kept in
/// exponential form so it stays positive) and the sigma / dsigma values at
/// the left grid points. Rows are stored flat; immutable after
/// construction.
struct SimulatedBatch {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  double grid_step = 0.0;
  double x0 = 0.0;
  std::uint64_t master_seed = 0;
  std::size_t prefix_steps = 0;  // > 0 when simulated from a prefix; z restarts there

  std::vector<double> x;       // n_paths x (n_steps + 1)
  std::vector<double> dw;      // n_paths x n_steps (zero on the prefix range)
  std::vector<double> z;       // n_paths x (n_steps + 1)
  std::vector<double> sigma;   // n_paths x n_steps, sigma(X_{t_i})
  std::vector<double> dsigma;  // n_paths x n_steps, Dx sigma(X_{t_i})

  double horizon() const { return grid_step * static_cast<double>(n_steps); }

  std::span<const double> x_row(std::size_t p) const { return {x.data() + p * (n_steps + 1), n_steps + 1}; }
  std::span<const double> dw_row(std::size_t p) const { return {dw.data() + p * n_steps, n_steps}; }
  std::span<const double> z_row(std::size_t p) const { return {z.data() + p * (n_steps + 1), n_steps + 1}; }
  std::span<const double> sigma_row(std::size_t p) const { return {sigma.data() + p * n_steps, n_steps}; }
  std::span<const double> dsigma_row(std::size_t p) const { return {dsigma.data() + p * n_steps, n_steps}; }

  /// Copies path p into out, reusing out's storage.
  void copy_path_into(std::size_t p, DiscretePath& out) const;
};

/// Simulates n_paths of dx = sigma(X) dw on [0, horizon] with n_steps
/// uniform steps. Per-path substreams are derived from (seed, path index),
/// so the batch is bit-identical for any thread count.
SimulatedBatch simulate(const VolatilityModel& model, double x0, double horizon,
                        std::size_t n_steps, std::size_t n_paths, std::uint64_t seed,
                        unsigned threads = 0);

/// Conditional simulation: every path equals prefix on [0, t] and follows
/// fresh dynamics after, with sigma evaluated on the prefix-aware history.
/// The tangent restarts at z = 1 at the prefix horizon. n_steps counts the
/// full grid on [0, horizon]; prefix.grid_step must match.
SimulatedBatch simulate_from_prefix(const VolatilityModel& model, const DiscretePath& prefix,
                                    double horizon, std::size_t n_steps, std::size_t n_paths,
                                    std::uint64_t seed, unsigned threads = 0);

/// Empty batch with the given shape, for use with the block fillers below.
SimulatedBatch allocate_batch(std::size_t n_paths, std::size_t n_steps, double grid_step,
                              double x0, std::uint64_t seed);

/// Sequentially fills out with paths [first_path, first_path + out.n_paths)
/// of the ensemble identified by out.master_seed. Substream ids are global,
/// so block-wise streaming reproduces a monolithic simulate() bit for bit.
void simulate_into(const VolatilityModel& model, std::size_t first_path, SimulatedBatch& out);
void simulate_from_prefix_into(const VolatilityModel& model, const DiscretePath& prefix,
                               std::size_t first_path, SimulatedBatch& out);

/// Reproducibility dump: meta line, then one line per path holding x, dw
/// and z concatenated.
void write_batch_csv(std::ostream& out, const SimulatedBatch& batch);
SimulatedBatch read_batch_csv(std::istream& in, const VolatilityModel& model);

}  // namespace pathmc

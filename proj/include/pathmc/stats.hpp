#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace pathmc {

/// Result of any Monte Carlo estimation: sample mean, standard error of the
/// mean, sample count and the seed that reproduces the run.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
};

/// Plain (sum, sum of squares, count) accumulator. Addition order is fixed
/// by the blocked reduction below, never by thread scheduling.
class Accumulator {
 public:
  void add(double v) noexcept {
    sum_ += v;
    sum_sq_ += v * v;
    ++n_;
  }

  void merge(const Accumulator& o) noexcept {
    sum_ += o.sum_;
    sum_sq_ += o.sum_sq_;
    n_ += o.n_;
  }

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return n_ ? sum_ / static_cast<double>(n_) : 0.0; }

  double sample_variance() const {
    if (n_ < 2) return 0.0;
    const double n = static_cast<double>(n_);
    const double v = (sum_sq_ - sum_ * sum_ / n) / (n - 1.0);
    return v > 0.0 ? v : 0.0;
  }

  McEstimate estimate(std::uint64_t seed) const;

 private:
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
  std::size_t n_ = 0;
};

/// Fixed block size of the deterministic tree reduction. Partial sums are
/// always accumulated per 1024-path block in path-index order and merged in
/// block order, so estimates do not depend on the thread count.
inline constexpr std::size_t kReductionBlock = 1024;

/// Runs body(block_index) for block_index in [0, n_blocks), distributing
/// blocks over `threads` workers (0 = hardware concurrency).
void parallel_blocks(std::size_t n_blocks, unsigned threads,
                     const std::function<void(std::size_t)>& body);

/// Blocked deterministic reduction of per_path(i) over i in [0, n).
Accumulator blocked_reduce(std::size_t n, unsigned threads,
                           const std::function<double(std::size_t)>& per_path);

struct ConvergencePoint {
  std::size_t n = 0;
  double mean = 0.0;
  double std_error = 0.0;
};

/// Logarithmically spaced checkpoint targets (four per decade), used by the
/// streaming estimators to record convergence traces.
std::vector<std::size_t> convergence_targets(std::size_t n_paths);

}  // namespace pathmc

#include <pathmc/stats.hpp>

#include <atomic>
#include <cmath>
#include <thread>

namespace pathmc {

McEstimate Accumulator::estimate(std::uint64_t seed) const {
  McEstimate e;
  e.mean = mean();
  e.n_paths = n_;
  e.seed = seed;
  if (n_ >= 2) {
    e.std_error = std::sqrt(sample_variance() / static_cast<double>(n_));
  }
  return e;
}

void parallel_blocks(std::size_t n_blocks, unsigned threads,
                     const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  if (threads == 1 || n_blocks <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) body(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
      if (b >= n_blocks) return;
      body(b);
    }
  };
  std::vector<std::jthread> pool;
  const unsigned n = std::min<std::size_t>(threads, n_blocks);
  pool.reserve(n);
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
}

Accumulator blocked_reduce(std::size_t n, unsigned threads,
                           const std::function<double(std::size_t)>& per_path) {
  const std::size_t n_blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<Accumulator> partial(n_blocks);
  parallel_blocks(n_blocks, threads, [&](std::size_t b) {
    const std::size_t lo = b * kReductionBlock;
    const std::size_t hi = std::min(n, lo + kReductionBlock);
    Accumulator acc;
    for (std::size_t i = lo; i < hi; ++i) acc.add(per_path(i));
    partial[b] = acc;
  });
  Accumulator total;
  for (const auto& p : partial) total.merge(p);
  return total;
}

std::vector<std::size_t> convergence_targets(std::size_t n_paths) {
  std::vector<std::size_t> out;
  double t = 1000.0;
  while (static_cast<std::size_t>(t) < n_paths) {
    out.push_back(static_cast<std::size_t>(t));
    t *= 1.7782794100389228;  // 10^(1/4)
  }
  out.push_back(n_paths);
  return out;
}

}  // namespace pathmc

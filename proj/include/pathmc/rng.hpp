#pragma once

#include <cmath>
#include <cstdint>

namespace pathmc {

namespace detail {

// splitmix64 output finalizer (Vigna). Bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

}  // namespace detail

/// Derives a sub-seed from a parent seed and a context id. Used for
/// per-path substreams and for common-random-number seeds in nested
/// Monte Carlo, so results never depend on thread scheduling.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t context) noexcept {
  return detail::mix64(parent + detail::kGolden * (detail::mix64(context + detail::kGolden) | 1ull));
}

/// Counter-based standard-normal stream. Each (seed, stream) pair yields a
/// reproducible sequence independent of how many other streams are drawn
/// from concurrently; simulation results are therefore bit-identical for
/// any thread count.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : state_(derive_seed(seed, stream)) {}

  /// Next standard-normal draw (Box-Muller; fixed two-uniform cadence).
  double next() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t next_u64() noexcept {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  // uniform on (0, 1]; the closed right end keeps log(u) finite
  double next_uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pathmc

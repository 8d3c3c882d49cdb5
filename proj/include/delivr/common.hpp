#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace delivr {

inline constexpr double kPi = std::numbers::pi;

/// Bad user-supplied configuration (hyperparameters, file sections, CLI args).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numeric precondition failed (non-finite input, corrupted rotation, ...).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Wrap an angle to the principal branch (-pi, pi].
/// Values already in range are returned unchanged (bit-exact).
inline double wrap_pi(double theta) {
  if (theta > -kPi && theta <= kPi) return theta;
  double w = std::remainder(theta, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

/// Flattened token index for frame t, patch i. Frame-major layout; every
/// module that touches token matrices goes through this one definition.
inline std::size_t token_index(std::size_t t, std::size_t i, std::size_t n_patches) {
  return t * n_patches + i;
}

/// splitmix64, used to derive independent substream seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Deterministic RNG. Distribution transforms are hand-rolled so that the
/// stream depends only on the generator, not on the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0xd1b54a32d192ed03ULL)) {}

  std::uint64_t next_u64() {
    // xorshift* over a splitmix-initialized state
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Worker count for parallel sections: min(requested or hardware, DELIVR_THREADS).
inline unsigned worker_count(unsigned requested = 0) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  unsigned n = requested == 0 ? hw : std::min(requested, hw);
  if (const char* env = std::getenv("DELIVR_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return std::max(1u, n);
}

/// Run fn(i) for i in [0, n) on up to `workers` threads. Work is split by
/// contiguous index blocks; each index is processed by exactly one thread.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (n == 0) return;
  unsigned k = std::min<std::size_t>(worker_count(workers), n);
  if (k <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(k - 1);
  std::size_t chunk = (n + k - 1) / k;
  auto run = [&fn, n, chunk](std::size_t w) {
    std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    for (std::size_t i = lo; i < hi; ++i) fn(i);
  };
  for (unsigned w = 1; w < k; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& th : pool) th.join();
}

}  // namespace delivr

// Shared error types, seeded RNG streams and small utilities used by every
// other header in the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace geoavatar {

// Bad configuration or missing upstream artifact. The CLI maps this to exit
// code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or insufficient input data. The CLI maps this to exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

inline void require_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

// ---------------------------------------------------------------------------
// Deterministic seeding
// ---------------------------------------------------------------------------

// splitmix64 finalizer; good avalanche, stable across platforms.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Derives an independent sub-seed for a named stage (and optional index)
// from a master seed. Every stochastic stage of the pipeline draws its seed
// this way so that one master seed pins the whole run.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
  return mix64(master ^ mix64(fnv1a(tag)) ^ mix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

// Small self-contained generator (xoshiro-free: splitmix64 stream). All
// sampling helpers are hand-rolled so artifact bytes do not depend on
// standard-library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Modulo bias is < 2^-53 for the n used here; acceptable and simple.
    return n == 0 ? 0 : next_u64() % n;
  }

  // Standard normal via Box-Muller (no cached spare; two draws per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Index draw proportional to non-negative weights. Zero-weight entries are
  // never returned. Total weight must be positive.
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    require(total > 0.0, "categorical: total weight must be positive");
    double r = uniform() * total;
    double acc = 0.0;
    std::size_t last_pos = 0;
    bool seen = false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_pos = i;
      seen = true;
      if (r < acc) return i;
    }
    (void)seen;
    return last_pos;  // r landed on the rounding tail
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Time helpers (all UTC; the artifact does not model time zones)
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr int kHoursPerDay = 24;
inline constexpr int kHoursPerWeek = 168;

inline std::int64_t day_of(std::int64_t ts) {
  return ts >= 0 ? ts / kSecondsPerDay
                 : (ts - (kSecondsPerDay - 1)) / kSecondsPerDay;
}
inline std::int64_t epoch_hour(std::int64_t ts) {
  return ts >= 0 ? ts / kSecondsPerHour
                 : (ts - (kSecondsPerHour - 1)) / kSecondsPerHour;
}
inline int hour_of_day(std::int64_t ts) {
  return int(epoch_hour(ts) - day_of(ts) * kHoursPerDay);
}
// Monday = 0 ... Sunday = 6 (Unix day 0 was a Thursday).
inline int weekday_of_day(std::int64_t day) {
  std::int64_t w = (day + 4) % 7;
  if (w < 0) w += 7;
  return int(w);
}
inline int week_hour(std::int64_t ts) {
  return weekday_of_day(day_of(ts)) * kHoursPerDay + hour_of_day(ts);
}

// ---------------------------------------------------------------------------
// Parallelism
// ---------------------------------------------------------------------------

// Index-sharded parallel loop. Each index is processed exactly once; callers
// write results into preallocated slots so the output is identical for any
// thread count.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const int t = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(t);
  std::exception_ptr first_error;
  std::mutex err_mx;
  for (int k = 0; k < t; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = k; i < n; i += t) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mx);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace geoavatar

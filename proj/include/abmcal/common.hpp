#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace abmcal {

/// Raised when inputs violate a documented precondition (bad parameters,
/// malformed configuration, singular matrices).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for unusable input data (unparseable files, empty series).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a simulation leaves the finite range (prices or order sizes
/// overflow), which happens for extreme drift or noise parameters.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Child seed for stream `index` of `master`. Injective in `index` for a
/// fixed master because splitmix64 is a bijection.
inline constexpr std::uint64_t derive_seed(std::uint64_t master,
                                           std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master) ^ (index * 0xD1342543DE82EF95ull + 1));
}

/// Substream tags used to split one simulation seed into independent streams.
enum class Stream : std::uint64_t {
  Setup = 1,
  Fundamental = 2,
  LfNoise = 3,
  StrategyCoins = 4,
  HfNoise = 5,
};

inline Rng make_stream(std::uint64_t seed, Stream s) {
  return Rng{derive_seed(seed, static_cast<std::uint64_t>(s))};
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal(Rng& rng, double sd) {
  if (sd == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sd)(rng);
}

inline std::size_t default_thread_count() {
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Evaluates fn(i) for i in [0, n) on up to `threads` workers and returns the
/// results in index order. Output never depends on the worker count.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t threads, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(n);
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace abmcal

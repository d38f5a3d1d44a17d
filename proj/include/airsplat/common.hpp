// Shared plumbing: error types, deterministic RNG, thread control, formatting.

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace airsplat {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid user-facing configuration (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

struct ShapeMismatchError : Error {
  using Error::Error;
};

// log_map called on a rotation too close to pi for a unique inverse.
struct RotationNearPiError : Error {
  using Error::Error;
};

struct BehindCameraError : Error {
  using Error::Error;
};

struct PairOutOfRangeError : Error {
  using Error::Error;
};

struct InsufficientViewsError : Error {
  using Error::Error;
};

struct TooSmallError : Error {
  using Error::Error;
};

struct LengthMismatchError : Error {
  using Error::Error;
};

// Training aborted on a non-finite loss (CLI exit code 3).
struct NonFiniteLossError : Error {
  explicit NonFiniteLossError(const std::string& msg, int step_)
      : Error(msg), step(step_) {}
  int step = -1;
};

// ---------------------------------------------------------------------------
// Deterministic keyed RNG.
//
// All stochastic inputs (scene sampling, oracle noise) are pure functions of
// (seed, stream, index) so outputs never depend on evaluation order or thread
// count. splitmix64 is used as the mixing function.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

inline uint64_t det_key(uint64_t seed, uint64_t stream, uint64_t index,
                        uint64_t sub = 0) {
  return hash_combine(hash_combine(hash_combine(seed, stream), index), sub);
}

// Uniform in [0, 1).
inline double det_uniform(uint64_t key) {
  return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two keyed uniforms.
inline double det_normal(uint64_t key) {
  double u1 = det_uniform(hash_combine(key, 0x5bf03635u));
  double u2 = det_uniform(hash_combine(key, 0x2545f491u));
  u1 = u1 <= 0.0 ? 0x1.0p-53 : u1;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Small sequential generator for one-shot shuffles inside the scene
// generator. Seed-determined; never shared across threads.
class SeqRng {
 public:
  explicit SeqRng(uint64_t seed) : state_(splitmix64(seed ^ 0x8f1bbcdcull)) {}
  uint64_t next() {
    state_ = splitmix64(state_);
    return state_;
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return next() % n; }

 private:
  uint64_t state_;
};

// ---------------------------------------------------------------------------
// Thread control.
//
// parallel_for splits [0, total) into fixed-size blocks. The block structure
// depends only on (total, grain), never on the worker count, so any
// block-slot writing pattern produces thread-count-independent results.
// ---------------------------------------------------------------------------

int thread_count();
void set_thread_count(int n);

template <typename Fn>
void parallel_for(std::size_t total, std::size_t grain, Fn&& fn) {
  if (total == 0) return;
  if (grain == 0) grain = 1;
  const std::size_t blocks = (total + grain - 1) / grain;
  const int workers =
      static_cast<int>(std::min<std::size_t>(blocks, static_cast<std::size_t>(thread_count())));
  if (workers <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t lo = b * grain;
      fn(lo, std::min(total, lo + grain));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
      if (b >= blocks) break;
      const std::size_t lo = b * grain;
      fn(lo, std::min(total, lo + grain));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (int i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Formatting / checks
// ---------------------------------------------------------------------------

// Fixed formatting used for all CSV numeric output (9 significant digits).
inline std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

constexpr double kPi = 3.14159265358979323846264338327950288;

}  // namespace airsplat

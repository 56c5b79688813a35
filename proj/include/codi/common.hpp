#pragma once

/**
 * Shared plumbing: error types, seeded RNG streams, and the execution-mode
 * switch between the serial reference kernels and the OpenMP ones.
 */

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace codi {

using Vec = std::vector<double>;

// ============================================================================
// Errors
// ============================================================================

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

/// Non-finite value encountered mid-computation. `step` is the integrator or
/// optimizer step at which it appeared, -1 when not applicable.
struct NumericError : Error {
  int step = -1;
  explicit NumericError(const std::string& msg, int step_index = -1)
      : Error(msg), step(step_index) {}
};

struct TrainingDivergenceError : Error {
  int step = -1;
  explicit TrainingDivergenceError(const std::string& msg, int step_index = -1)
      : Error(msg), step(step_index) {}
};

struct DegenerateWeightsError : Error {
  using Error::Error;
};

struct AbsoluteContinuityError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};
struct VersionMismatchError : IoError {
  using IoError::IoError;
};
struct TruncatedFileError : IoError {
  using IoError::IoError;
};
struct ChecksumError : IoError {
  using IoError::IoError;
};

// ============================================================================
// RNG streams
// ============================================================================

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child-stream seed derivation. Every fan-out (batch samples, episodes,
/// Monte-Carlo candidates) gets its own stream via derive_seed(master, index)
/// so results are independent of worker count and iteration order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x51ed27f4a1533d1bULL));
}

struct Rng {
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  void fill_normal(Vec& out) {
    for (double& v : out) v = normal();
  }
  Vec normal_vec(std::size_t n) {
    Vec out(n);
    fill_normal(out);
    return out;
  }

  /// Derived child stream; independent of how much of this stream was consumed.
  Rng split(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// ============================================================================
// Execution mode
// ============================================================================

/// Serial is the reference path; Parallel runs the same per-index work under
/// OpenMP. Kernels are written so both produce bit-identical results (per-item
/// RNG streams, fixed reduction order), which the tests assert.
enum class Exec { Serial, Parallel };

template <class F>
void for_index(std::int64_t n, Exec mode, F&& body) {
  if (mode == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) body(i);
  }
}

// ============================================================================
// Small vector helpers
// ============================================================================

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" +
                         std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return dot(a, a); }

inline bool all_finite(const Vec& a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// FNV-1a, used as the integrity checksum in the binary file formats.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace codi

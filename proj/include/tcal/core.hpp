#pragma once

// Shared vocabulary for the tcal library: error types, label conventions and
// small numeric helpers used by every module.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace tcal {

/// Base class for every error raised by the library.
class exception : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CSV cells, labels, shapes).
class data_error : public exception {
  public:
    using exception::exception;
};

/// Model estimation failed (too few rows, covariance not positive-definite).
class fit_error : public exception {
  public:
    using exception::exception;
};

/// Invalid argument to a calibration or simulation routine.
class argument_error : public exception {
  public:
    using exception::exception;
};

/// Class labels are 1..k. Zero marks a point that was not assigned.
using label_t = int;
inline constexpr label_t abstain_label = 0;

inline constexpr double infinity = std::numeric_limits<double>::infinity();

using seed_t = std::uint64_t;

namespace detail {

// SplitMix64 finalizer; turns (seed, stream index) into well-mixed substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic child seed for substream `index` of `seed`.
constexpr seed_t substream(seed_t seed, std::uint64_t index) noexcept {
    return detail::mix64(detail::mix64(seed) ^ detail::mix64(index + 0x632BE59BD9B4E019ULL));
}

}  // namespace tcal

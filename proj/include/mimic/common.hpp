#pragma once

/** \file common.hpp
 *  \brief Error types, seeded random streams and stable hashing shared by every module.
 */

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace mimic {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated a precondition (bad shape, bad id, bad config value).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared in a loss, gradient or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

using TermId = std::uint32_t;
using DocIndex = std::uint32_t;

/** \brief Deterministic random stream.
 *
 * Wraps mt19937_64, whose output sequence is fixed by the standard, and
 * derives doubles, bounded integers and shuffles with its own arithmetic so
 * that a seed reproduces the same bits with any standard library.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in the open interval (0, 1).
  double uniform_open() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling on the largest multiple of n.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream number (splitmix64 finalizer).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a. Stable across platforms; used for manifests, not security.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value);

}  // namespace mimic

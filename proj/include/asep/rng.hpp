#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace asep {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hash of a (seed, stream, counter) triple. Every draw in the library is a
/// pure function of such a key, so streams can be split and replayed.
constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t counter) noexcept {
  return mix64(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL)) + counter);
}

/// Maps 64 random bits to a double in [0, 1) with 53 bits of resolution.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based generator keyed by (seed, stream-id).
///
/// Satisfies UniformRandomBitGenerator, but the uniform()/exponential()
/// members are preferred: they are bit-reproducible across standard
/// libraries, unlike the std:: distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    return hash_key(seed_, stream_, counter_++);
  }

  /// Uniform on [0, 1).
  constexpr double uniform() noexcept { return to_unit((*this)()); }

  /// Exponential with the given rate (rate > 0).
  double exponential(double rate) noexcept {
    return -std::log1p(-uniform()) / rate;
  }

  /// Independent generator for a sub-stream.
  constexpr CounterRng split(std::uint64_t child) const noexcept {
    return CounterRng(hash_key(seed_, stream_, ~child), child);
  }

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t stream() const noexcept { return stream_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace asep

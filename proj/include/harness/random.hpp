#pragma once

#include <cstdint>
#include <limits>

namespace harness {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream: the k-th output is mix64(state + k * golden).
/// Two streams built from the same key produce identical sequences, so a
/// stream is fully determined by the key it was derived from.
class CounterStream {
 public:
  using result_type = std::uint64_t;

  constexpr explicit CounterStream(std::uint64_t key) noexcept : state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += kGolden;
    return mix64(state_);
  }

  constexpr std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Uniform on the open interval (0, 1) with 53 random bits.
template <class Urbg>
inline double uniform_open01(Urbg& g) {
  return (static_cast<double>(g() >> 11) + 0.5) * 0x1.0p-53;
}

/// Key for replica `replica` of an experiment seeded with `seed`.
inline constexpr std::uint64_t replica_key(std::uint64_t seed, std::uint64_t replica) noexcept {
  return mix64(seed ^ mix64(replica + 0x632be59bd9b4e019ULL));
}

/// Key for all draws at time `time` within a replica.
inline constexpr std::uint64_t row_key(std::uint64_t replica_key, std::int64_t time) noexcept {
  return mix64(replica_key ^ mix64(static_cast<std::uint64_t>(time) + 0x8cb92ba72f3d8dd7ULL));
}

/// Stream for a single lattice site at a given time.
inline constexpr CounterStream site_stream(std::uint64_t row_key, std::uint64_t site_code) noexcept {
  return CounterStream(mix64(row_key + site_code * kGolden));
}

}  // namespace harness

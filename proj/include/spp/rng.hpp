#pragma once

#include <cstdint>
#include <limits>

namespace spp {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t s = a ^ (b + 0x632BE59BD9B4E019ULL + (a << 6) + (a >> 2));
  return splitmix64(s);
}

/// Seeded random stream satisfying UniformRandomBitGenerator.
///
/// Streams are cheap to construct, so callers derive a fresh one per
/// (seed, node, iteration) key instead of sharing a mutable generator. The
/// value drawn for a key depends only on the key, never on evaluation order.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Stream(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr Stream keyed(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
    return Stream(mix_key(mix_key(mix_key(seed, a), b), c));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept { return splitmix64(state_); }

 private:
  std::uint64_t state_;
};

// Purpose tags keep streams drawn from one seed disjoint.
namespace stream_tag {
inline constexpr std::uint64_t graph = 0x67726170ULL;
inline constexpr std::uint64_t problem = 0x70726f62ULL;
inline constexpr std::uint64_t noise = 0x6e6f6973ULL;
}  // namespace stream_tag

/// Stream for the stochastic draw of `node` at `iteration`.
inline constexpr Stream noise_stream(std::uint64_t seed, std::uint64_t node,
                                     std::uint64_t iteration) noexcept {
  return Stream::keyed(seed ^ stream_tag::noise, node, iteration);
}

}  // namespace spp

#pragma once

// Counter-based random numbers.
//
// A stream is a 64-bit key derived from (seed, stream id); variate k of a
// stream is a pure function of (key, k). Monte Carlo draws address their own
// substreams, so results do not depend on evaluation order or thread count.

#include <cstdint>

namespace rdcbias {

std::uint64_t splitmix64(std::uint64_t x);

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  // Child stream; substream(i).substream(j) addresses pair (i, j).
  RandomStream substream(std::uint64_t id) const;

  std::uint64_t bits(std::uint64_t counter) const;
  // Uniform on the open interval (0, 1).
  double uniform(std::uint64_t counter) const;
  // Standard normal (Box-Muller on uniforms 2k and 2k + 1).
  double normal(std::uint64_t counter) const;

  std::uint64_t key() const { return key_; }

 private:
  explicit RandomStream(std::uint64_t key) : key_(key) {}
  std::uint64_t key_;
};

}  // namespace rdcbias

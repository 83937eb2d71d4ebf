#include "rdcbias/random.hpp"

#include <cmath>
#include <numbers>

namespace rdcbias {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : key_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + kGolden))) {}

RandomStream RandomStream::substream(std::uint64_t id) const {
  return RandomStream(splitmix64(key_ ^ splitmix64(id * 0xD1B54A32D192ED03ULL + 1)));
}

// Position `counter` of the SplitMix64 sequence started at key_.
std::uint64_t RandomStream::bits(std::uint64_t counter) const {
  return splitmix64(key_ + counter * kGolden);
}

double RandomStream::uniform(std::uint64_t counter) const {
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal(std::uint64_t counter) const {
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace rdcbias

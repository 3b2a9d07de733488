#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace dvton {

// Seeded random stream with platform-independent distributions.
//
// std::mt19937_64 is fully specified by the standard, but the standard
// distributions are not, so uniform and normal draws are derived from the raw
// engine output here. A stream's state can be serialized and restored exactly.
class RandomStream {
 public:
  RandomStream() : RandomStream(0) {}
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  // Stream for one named concern, derived from a master seed.
  static RandomStream named(std::uint64_t master_seed, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; one engine pair per draw.
  double normal();

  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const RandomStream& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return fnv1a(s.data(), s.size(), seed);
}

}  // namespace dvton

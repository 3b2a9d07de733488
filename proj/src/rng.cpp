#include "dvton/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dvton/error.hpp"

namespace dvton {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kCheckpoint: return "checkpoint";
  }
  return "unknown";
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

RandomStream RandomStream::named(std::uint64_t master_seed, std::string_view name) {
  return RandomStream(splitmix64(master_seed ^ fnv1a(name)));
}

double RandomStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double RandomStream::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string RandomStream::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void RandomStream::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  require(!is.fail(), ErrorKind::kFormat, "corrupt random stream state");
}

}  // namespace dvton

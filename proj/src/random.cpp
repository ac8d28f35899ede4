#include "bagg/random.hpp"

#include <limits>

namespace bagg {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer
std::uint64_t SeedKey::mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

SeedKey& SeedKey::add(std::string_view part) {
  // Length prefix keeps ("ab","c") and ("a","bc") apart.
  state_ = mix(state_ ^ mix(part.size()));
  state_ = mix(state_ ^ fnv1a64(part));
  return *this;
}

SeedKey& SeedKey::add(std::uint64_t part) {
  state_ = mix(state_ ^ mix(part ^ 0x3c6ef372fe94f82bULL));
  return *this;
}

std::uint64_t Rng::uniform_index(std::uint64_t bound) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

}  // namespace bagg

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace bagg {

/// Seed-derivation helpers. Every random stream in the toolkit is derived by
/// hashing a master seed together with the identifiers of the work item, so
/// results never depend on the order in which items are processed.
class SeedKey {
 public:
  explicit SeedKey(std::uint64_t seed) : state_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  SeedKey& add(std::string_view part);
  SeedKey& add(std::uint64_t part);

  std::uint64_t value() const { return mix(state_); }

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t state_;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Random stream with platform-independent output. std::mt19937_64 has a
/// standardized sequence; the distributions are implemented here because the
/// standard library ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
  SeedKey key(seed);
  for (auto part : parts) key.add(part);
  return Rng(key.value());
}

}  // namespace bagg

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dgcw {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Counter-based generator keyed by (seed, purpose, index). Streams with
// different keys are independent, so work can be drawn in any order or on
// any thread and still reproduce.
class KeyedRng {
 public:
  KeyedRng(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0)
      : key_(splitmix64(splitmix64(seed ^ fnv1a(purpose)) + splitmix64(index + 0x632be59bd9b4e019ull))) {}

  std::uint64_t next_u64() { return splitmix64(key_ + 0xd1342543de82ef95ull * ++counter_); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0, n)
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }
  bool bernoulli(double p) { return uniform() < p; }
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  KeyedRng split(std::string_view purpose, std::uint64_t index = 0) const {
    return KeyedRng(key_, purpose, index);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dgcw

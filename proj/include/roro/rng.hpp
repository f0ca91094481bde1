#pragma once

// Seed-stream derivation. Every stochastic component draws from an engine
// seeded by mixing a global seed with stable identifiers (query id, rollout
// index, step index, purpose tag), so results do not depend on scheduling.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace roro {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; stable across platforms unlike std::hash.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// An immutable stream key; `child` derives independent sub-streams.
class StreamKey {
 public:
  constexpr StreamKey() = default;
  explicit constexpr StreamKey(std::uint64_t v) : value_(v) {}

  StreamKey child(std::uint64_t tag) const { return StreamKey(splitmix64(value_ ^ splitmix64(tag))); }
  StreamKey child(std::string_view tag) const { return child(stable_hash(tag)); }
  StreamKey child(std::initializer_list<std::uint64_t> tags) const {
    StreamKey k = *this;
    for (auto t : tags) k = k.child(t);
    return k;
  }

  std::mt19937_64 engine() const { return std::mt19937_64(splitmix64(value_)); }
  std::uint64_t value() const { return value_; }

 private:
  std::uint64_t value_ = 0x5eedULL;
};

// Stream for one trajectory: (global seed, query id, rollout index).
inline StreamKey trajectory_stream(std::uint64_t seed, std::string_view query_id,
                                   std::uint64_t rollout) {
  return StreamKey(seed).child(query_id).child(rollout);
}

inline double uniform01(std::mt19937_64& g) {
  // 53 random bits, in [0, 1).
  return static_cast<double>(g() >> 11) * (1.0 / 9007199254740992.0);
}

inline double standard_normal(std::mt19937_64& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(g);
}

}  // namespace roro

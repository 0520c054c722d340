#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rmf {

// splitmix64 finalizer; decorrelates nearby seeds before feeding mt19937_64.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the tag so named streams ("env", "explore", ...) never collide
// by accident with index arithmetic.
inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derived seed for stream `tag` with optional per-event index. Same base seed
// and tag always yield the same stream; distinct tags give independent ones,
// so interleaving draws from one stream never shifts another.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(base ^ hash_tag(tag));
  return splitmix64(h ^ splitmix64(index + 0x51ed2701a3c5e091ULL));
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(base, tag, index));
}

}  // namespace rmf

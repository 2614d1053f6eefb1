#pragma once

#include <cstdint>
#include <string_view>

namespace taskbank {

// splitmix64 finalizer; spreads nearby integers over the full 64-bit range.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a. Used instead of std::hash so derived seeds are identical across
// standard library implementations.
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return mix64(base ^ mix64(hash_tag(tag)));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  return mix64(base ^ mix64(salt + 0x632be59bd9b4e019ULL));
}

}  // namespace taskbank

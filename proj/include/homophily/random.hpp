#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace homophily {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent per-agent streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(master) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t stable_hash(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace homophily

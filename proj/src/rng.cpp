#include "mubsde/rng.hpp"

namespace mubsde {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path_index) {
  std::uint64_t state = seed;
  const std::uint64_t a = splitmix64(state);
  state ^= 0x6a09e667f3bcc909ULL + path_index;
  const std::uint64_t b = splitmix64(state);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(path_index),
                    static_cast<std::uint32_t>(path_index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace mubsde

#pragma once

#include <cstdint>
#include <random>

namespace mubsde {

/// Independent, reproducible substream for one path: the (seed, path index)
/// pair is mixed through splitmix64 before seeding the engine, so streams do
/// not overlap for neighboring indices.
std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path_index);

}  // namespace mubsde

#pragma once

#include <cstdint>
#include <initializer_list>

namespace udi {

// Counter-based draws: every value is a pure function of (seed, key), so the
// same node/rank/ordinal always sees the same jitter regardless of event order.

std::uint64_t mix64(std::uint64_t x);
std::uint64_t keyed_bits(std::uint64_t seed, std::initializer_list<std::uint64_t> key);

/// Uniform in (0, 1).
double keyed_uniform(std::uint64_t seed, std::initializer_list<std::uint64_t> key);

/// Exponential with the given mean; mean <= 0 yields 0.
double keyed_exponential(std::uint64_t seed, std::initializer_list<std::uint64_t> key, double mean);

/// Stream identifiers that keep unrelated draws independent.
enum class Stream : std::uint64_t {
    MountJitter = 1,
    RankSetup = 2,
    IdentityService = 3,
    Noise = 4,
};

}  // namespace udi

#include "udi/common/rng.hpp"

#include <cmath>

namespace udi {

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finaliser
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t keyed_bits(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = mix64(seed);
    for (auto k : key) h = mix64(h ^ mix64(k));
    return h;
}

double keyed_uniform(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    auto bits = keyed_bits(seed, key) >> 11;  // 53 significant bits
    return (static_cast<double>(bits) + 0.5) / 9007199254740992.0;
}

double keyed_exponential(std::uint64_t seed, std::initializer_list<std::uint64_t> key, double mean) {
    if (mean <= 0) return 0.0;
    return -mean * std::log(keyed_uniform(seed, key));
}

}  // namespace udi

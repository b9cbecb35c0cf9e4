#include "aoc/common.hpp"

#include <cmath>
#include <numbers>

namespace aoc {

std::string_view to_string(Difficulty d)
{
    switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
    }
    return "unknown";
}

Difficulty difficulty_from_string(std::string_view s)
{
    if (s == "easy") return Difficulty::Easy;
    if (s == "medium") return Difficulty::Medium;
    if (s == "hard") return Difficulty::Hard;
    throw InvalidArgument("unknown difficulty '" + std::string(s) + "'");
}

std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi)
{
    if (hi < lo) throw InvalidArgument("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(rng());
    // rejection keeps the draw unbiased
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
}

double uniform_real(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng)
{
    // Box-Muller, one draw per call
    double u1 = uniform_real(rng);
    while (u1 <= 0.0) u1 = uniform_real(rng);
    const double u2 = uniform_real(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
    // splitmix64 finalizer over the combined words
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : salt) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix_seed(seed, h);
}

}  // namespace aoc

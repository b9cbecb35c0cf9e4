#ifndef AOC_COMMON_HPP
#define AOC_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace aoc {

/// Activation vector at the configured intervention site.
using HiddenState = Eigen::VectorXd;

enum class Difficulty { Easy, Medium, Hard };

std::string_view to_string(Difficulty d);
Difficulty difficulty_from_string(std::string_view s);

/// Bad input to a library operation.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Configuration or cross-field inconsistency (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An invariant audit over produced records failed (CLI exit code 1).
class AuditFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// std::uniform_int_distribution is implementation-defined; corpus files must be
// byte-identical across standard libraries, so sampling goes through these.
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);
double uniform_real(Rng& rng);
double standard_normal(Rng& rng);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);

}  // namespace aoc

#endif

#ifndef AOC_TESTS_SUPPORT_HPP
#define AOC_TESTS_SUPPORT_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Core>

namespace aoc_test {

inline constexpr int kPropertyCases = 1000;

/// Minimal generator for property tests; one fixed seed per test keeps
/// failures reproducible.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng_); }
    bool coin() { return integer(0, 1) == 1; }
    double normal() { return std::normal_distribution<double>()(rng_); }

    Eigen::VectorXd vector(Eigen::Index n, double scale = 1.0)
    {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * normal();
        return v;
    }

    /// Random point of the probability simplex, sometimes with exact zeros.
    Eigen::VectorXd distribution(Eigen::Index n)
    {
        Eigen::VectorXd p(n);
        for (Eigen::Index i = 0; i < n; ++i) p(i) = (integer(0, 5) == 0) ? 0.0 : real(0.0, 1.0);
        if (p.sum() == 0.0) p(integer(0, n - 1)) = 1.0;
        return p / p.sum();
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("aoc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace aoc_test

#endif

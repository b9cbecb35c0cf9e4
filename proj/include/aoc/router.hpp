#ifndef AOC_ROUTER_HPP
#define AOC_ROUTER_HPP

#include <memory>
#include <string_view>

#include "aoc/problem.hpp"

namespace aoc {

enum class RouterSource { OracleLabel, StepCountHeuristic, BaselineLengthProxy };

std::string_view to_string(RouterSource s);
RouterSource router_source_from_string(std::string_view s);

struct RouterConfig {
    RouterSource source = RouterSource::StepCountHeuristic;
    int t1 = 3;
    int t2 = 5;

    void validate() const;
};

/// Assigns a difficulty once per problem, before generation starts.
class DifficultyClassifier {
public:
    virtual ~DifficultyClassifier() = default;
    virtual Difficulty classify(const Problem& problem) const = 0;
};

class ConfiguredClassifier final : public DifficultyClassifier {
public:
    explicit ConfiguredClassifier(RouterConfig config);
    Difficulty classify(const Problem& problem) const override;
    const RouterConfig& config() const { return config_; }

private:
    RouterConfig config_;
};

Difficulty classify(const Problem& problem, const RouterConfig& config);

std::unique_ptr<DifficultyClassifier> make_classifier(const RouterConfig& config);

}  // namespace aoc

#endif

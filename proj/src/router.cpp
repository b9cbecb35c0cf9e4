#include "aoc/router.hpp"

#include <string>

namespace aoc {

std::string_view to_string(RouterSource s)
{
    switch (s) {
    case RouterSource::OracleLabel: return "oracle_label";
    case RouterSource::StepCountHeuristic: return "step_count";
    case RouterSource::BaselineLengthProxy: return "baseline_length";
    }
    return "unknown";
}

RouterSource router_source_from_string(std::string_view s)
{
    if (s == "oracle_label") return RouterSource::OracleLabel;
    if (s == "step_count") return RouterSource::StepCountHeuristic;
    if (s == "baseline_length") return RouterSource::BaselineLengthProxy;
    throw InvalidArgument("unknown router source '" + std::string(s) + "'");
}

void RouterConfig::validate() const
{
    if (t1 <= 0 || t2 <= 0) throw InvalidArgument("router: thresholds must be positive");
    if (t1 >= t2) throw InvalidArgument("router: t1 must be < t2");
}

ConfiguredClassifier::ConfiguredClassifier(RouterConfig config) : config_(config)
{
    config_.validate();
}

Difficulty ConfiguredClassifier::classify(const Problem& problem) const
{
    return aoc::classify(problem, config_);
}

Difficulty classify(const Problem& problem, const RouterConfig& config)
{
    switch (config.source) {
    case RouterSource::OracleLabel:
        if (!problem.difficulty) throw InvalidArgument("router: problem " + problem.id + " has no label");
        return *problem.difficulty;
    case RouterSource::StepCountHeuristic:
        if (problem.chain_steps < 1) throw InvalidArgument("router: problem " + problem.id + " has no steps");
        return difficulty_from_count(problem.chain_steps, config.t1, config.t2);
    case RouterSource::BaselineLengthProxy:
        if (!problem.baseline_tokens)
            throw InvalidArgument("router: problem " + problem.id + " has no baseline length");
        return difficulty_from_count(*problem.baseline_tokens, config.t1, config.t2);
    }
    throw InvalidArgument("router: unknown source");
}

std::unique_ptr<DifficultyClassifier> make_classifier(const RouterConfig& config)
{
    return std::make_unique<ConfiguredClassifier>(config);
}

}  // namespace aoc

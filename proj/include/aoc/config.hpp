#ifndef AOC_CONFIG_HPP
#define AOC_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aoc/corpus.hpp"
#include "aoc/router.hpp"
#include "aoc/scheduler.hpp"
#include "aoc/tiny_transformer.hpp"
#include "aoc/tpv.hpp"

namespace aoc {

enum class BackendType { TinyTransformer, Synthetic };

std::string_view to_string(BackendType t);
BackendType backend_type_from_string(std::string_view s);

struct SyntheticSection {
    Eigen::Index dim = 64;
    double step_increment = 0.05;
    double noise_sigma_rel = 0.0;  // noise_sigma as a multiple of |theta*|
    double initial_progress = 0.0;
    double logit_sharpness = 10.0;
    std::size_t context_limit = 4096;
};

struct BackendSection {
    BackendType type = BackendType::TinyTransformer;
    TinyTransformerConfig tiny_transformer;
    SyntheticSection synthetic;
    std::size_t train_size = 20000;  // training problems, generated apart from the evaluation corpus
};

struct TpvSection {
    double ridge_lambda = kDefaultRidgeLambda;
    std::string site = "final";
    int fit_budget = 0;  // 0: as long as the backend context allows
};

/// Strengths are written in nominal units (Easy 50 / Medium 30 / Hard 10, static
/// 50 and 100) and multiplied by alpha_scale before they reach the backend.
/// With calibration_scales set, fit-tpv picks the scale per fitted backend and
/// alpha_scale is ignored.
struct ScheduleSection {
    AlphaScheduleConfig nominal;
    std::vector<double> alpha_static = {50.0, 100.0};
    double alpha_scale = 1.0;
    std::vector<double> calibration_scales;  // candidates, strictly increasing
    std::size_t calibration_size = 100;      // problems, disjoint from corpus and training set

    bool calibrated() const { return !calibration_scales.empty(); }

    AlphaScheduleConfig scaled() const;
};

struct HarnessSection {
    std::vector<int> budgets = {64, 128, 256};
    std::vector<std::uint64_t> seeds;  // empty: the global seed alone
    unsigned threads = 1;
    bool dump_traces = false;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";
    CorpusConfig corpus;
    BackendSection backend;
    TpvSection tpv;
    ScheduleSection schedule;
    RouterConfig router;
    HarnessSection harness;

    /// Pushes the global seed and shared fields into the module configs.
    void resolve();
    /// Every field and cross-field check; throws ConfigError.
    void validate() const;

    std::vector<std::uint64_t> eval_seeds() const;
};

/// Parses a JSON document. Unknown keys are rejected. The result is resolved
/// and validated.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> output_dir;
};

/// Applies flag overrides, then resolves and validates again.
void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides);

/// Resolved configuration as JSON, written next to every artifact.
std::string config_to_json_text(const ExperimentConfig& config);

}  // namespace aoc

#endif

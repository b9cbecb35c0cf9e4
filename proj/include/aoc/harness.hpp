#ifndef AOC_HARNESS_HPP
#define AOC_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aoc/backend.hpp"
#include "aoc/router.hpp"
#include "aoc/scheduler.hpp"
#include "aoc/tpv.hpp"

namespace aoc {

/// One evaluated method. Base runs with steering disabled entirely.
struct MethodSpec {
    std::string id;
    AlphaScheduleConfig schedule;
    bool steering = true;
};

struct GenerationRecord {
    std::string problem_id;
    std::string method;
    int budget = 0;
    std::uint64_t seed = 0;
    std::vector<TokenId> tokens;
    std::string text;
    int token_count = 0;
    bool ended = false;
    bool answered = false;
    bool correct = false;
    std::optional<long> extracted_answer;
    Difficulty routed = Difficulty::Medium;
    double alpha_init = 0.0;
    double alpha_lo = 0.0;  // bounds implied by the method's effective config
    double alpha_hi = 0.0;
    AlphaTrace alpha_trace;
};

struct MetricsRow {
    std::string method;
    int budget = 0;
    std::uint64_t seed = 0;
    std::size_t correct = 0;
    std::size_t answered = 0;
    std::size_t ended = 0;
    std::size_t n = 0;
    double mean_tokens = 0.0;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;

    const MetricsRow& at(std::string_view method, int budget, std::uint64_t seed) const;
};

struct HarnessOptions {
    int prompt_steps = 8;  // prompt padding width
    unsigned threads = 1;
};

struct EvaluationResult {
    MetricsTable table;
    std::vector<GenerationRecord> records;
};

/// Integer following the first "ANSWER=" occurrence. The number must be closed
/// by a non-digit character, so a budget cut inside the answer yields nothing.
std::optional<long> extract_answer(std::string_view text);

/// Steered greedy generation of one problem. Per step: u_t from the unsteered
/// logits, alpha_t from the schedule, steer by alpha_t * theta for the next
/// step while inside the think span. Stops at the end marker or the budget.
GenerationRecord run_generation(Backend& backend, const Tpv* tpv, const MethodSpec& method,
                                const DifficultyClassifier& router, const Problem& problem, int budget,
                                std::uint64_t seed, const HarnessOptions& options = {});

/// Runs every (method, budget, seed, problem). Problems are spread across
/// cloned backends; results are reduced in problem-id order.
EvaluationResult evaluate(const Backend& prototype, const Tpv* tpv, std::span<const MethodSpec> methods,
                          std::span<const Problem> eval_set, std::span<const int> budgets,
                          std::span<const std::uint64_t> seeds, const DifficultyClassifier& router,
                          const HarnessOptions& options = {});

/// Counts per (method, budget, seed) in roster order.
MetricsTable aggregate(std::span<const GenerationRecord> records, std::span<const MethodSpec> methods,
                       std::span<const int> budgets, std::span<const std::uint64_t> seeds);

/// Base, static strengths (given in nominal units, scaled), and HAC.
std::vector<MethodSpec> main_roster(const AlphaScheduleConfig& schedule, std::span<const double> static_alphas,
                                    double alpha_scale);

/// Base, HAC without CG-aI (UAOnly on the configured alpha_base/alpha_max),
/// HAC without UA-aS (CGOnly), full HAC.
std::vector<MethodSpec> ablation_roster(const AlphaScheduleConfig& schedule);

EvaluationResult run_ablation(const Backend& prototype, const Tpv& tpv, const AlphaScheduleConfig& schedule,
                              std::span<const Problem> eval_set, std::span<const int> budgets,
                              std::span<const std::uint64_t> seeds, const DifficultyClassifier& router,
                              const HarnessOptions& options = {});

/// Fills Problem::baseline_tokens with the unsteered generation length.
void annotate_baseline_lengths(const Backend& prototype, std::span<Problem> problems, int budget,
                               const HarnessOptions& options = {});

/// Throws AuditFailure listing every violated record or row invariant.
void audit(const EvaluationResult& result);

std::string metrics_to_csv(const MetricsTable& table);
std::string metrics_to_markdown(const MetricsTable& table, std::span<const MethodSpec> methods,
                                std::span<const int> budgets, std::span<const std::uint64_t> seeds);
std::string record_to_json_line(const GenerationRecord& record);

}  // namespace aoc

#endif

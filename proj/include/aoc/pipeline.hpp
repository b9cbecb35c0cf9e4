#ifndef AOC_PIPELINE_HPP
#define AOC_PIPELINE_HPP

#include <exception>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "aoc/config.hpp"
#include "aoc/harness.hpp"
#include "aoc/synthetic_backend.hpp"
#include "aoc/tpv.hpp"

namespace aoc {

/// File names inside the output directory.
namespace artifact {
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kWeights = "weights.bin";
inline constexpr const char* kTrainReport = "train_report.json";
inline constexpr const char* kTpv = "tpv.txt";
inline constexpr const char* kFitReport = "fit_report.json";
inline constexpr const char* kResultsCsv = "results.csv";
inline constexpr const char* kResultsMd = "results.md";
inline constexpr const char* kAblationCsv = "ablation.csv";
inline constexpr const char* kAblationMd = "ablation.md";
inline constexpr const char* kTraces = "traces.jsonl";
inline constexpr const char* kAblationTraces = "ablation_traces.jsonl";
inline constexpr const char* kCalibration = "calibration.json";
inline constexpr const char* kResultsConfig = "results.config.json";
inline constexpr const char* kAblationConfig = "ablation.config.json";
}  // namespace artifact

/// Hidden states of one unsteered generation, from the first generated token
/// up to and including the step that emitted think-close.
struct ThinkTrajectory {
    std::vector<HiddenState> states;
    bool closed = false;  // think-close appeared within the budget
};

ThinkTrajectory collect_think_trajectory(Backend& backend, const Problem& problem, int budget, std::uint64_t seed,
                                         int prompt_steps);

struct FitResult {
    Tpv tpv;
    std::size_t trajectories = 0;
    std::size_t skipped = 0;  // generations that never closed the think span
};

/// Unsteered generation over the fit set, then regression on every
/// think-span state. Throws when no trajectory has a non-empty think span.
FitResult collect_and_fit(Backend& backend, std::span<const Problem> fit_set, int budget, std::uint64_t seed,
                          double ridge_lambda, int prompt_steps);

SyntheticBackendConfig synthetic_config(const ExperimentConfig& config);

/// Backend for the configured type; the transformer loads its checkpoint.
std::unique_ptr<Backend> open_backend(const ExperimentConfig& config);

/// Problems the transformer is trained on: drawn from their own seed stream,
/// with every question that occurs in the evaluation corpus removed.
std::vector<Problem> training_corpus(const ExperimentConfig& config, std::span<const Problem> corpus);

/// Problems for choosing the strength scale: their own seed stream, with every
/// corpus and training question removed.
std::vector<Problem> calibration_problems(const ExperimentConfig& config, std::span<const Problem> corpus);

struct CalibrationPoint {
    double scale = 0.0;
    std::vector<std::size_t> correct;  // total over budgets, per steered method of the main roster
    std::size_t sum = 0;
};

struct CalibrationResult {
    double scale = 0.0;
    std::vector<std::string> methods;
    std::vector<CalibrationPoint> points;
};

/// Evaluates the steered methods of the main roster at every candidate scale
/// and keeps the one with the most correct answers summed over methods and
/// budgets. Ties go to the smaller scale.
CalibrationResult calibrate_alpha_scale(const ExperimentConfig& config, const Backend& backend, const Tpv& tpv,
                                        std::span<const Problem> problems);

/// The config eval and ablate run with: alpha_scale comes from the
/// calibration artifact when calibration is enabled.
ExperimentConfig effective_config(const ExperimentConfig& config);

// Pipeline stages. Each reads the artifacts of earlier stages from
// config.output_dir and refuses to replace its own outputs unless overwrite.
void cmd_corpus_gen(const ExperimentConfig& config, bool overwrite);
void cmd_backend_train(const ExperimentConfig& config, bool overwrite);
FitResult cmd_fit_tpv(const ExperimentConfig& config, bool overwrite);
/// Both evaluation stages audit their records; AuditFailure propagates after
/// the outputs are written.
EvaluationResult cmd_eval(const ExperimentConfig& config, bool overwrite);
EvaluationResult cmd_ablate(const ExperimentConfig& config, bool overwrite);

inline constexpr int kExitOk = 0;
inline constexpr int kExitAudit = 1;
inline constexpr int kExitUsage = 2;

/// Process exit code for an exception escaping a stage: audit failures map to
/// kExitAudit, everything else to kExitUsage.
int exit_code_for(const std::exception_ptr& error);

}  // namespace aoc

#endif

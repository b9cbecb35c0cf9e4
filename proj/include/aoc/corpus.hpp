#ifndef AOC_CORPUS_HPP
#define AOC_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aoc/problem.hpp"

namespace aoc {

/// Generator parameters for chained addition/subtraction problems.
///
/// Every running value stays inside [0, value_max] and every operand inside
/// [1, operand_max], so all numbers are one or two digits. Traces write running
/// values zero-padded to two digits. After the chain, the trace restates the
/// result a random number of times in [tail_min, tail_max]: redundant
/// verification that a budget-limited generator can skip without changing the
/// answer.
struct CorpusConfig {
    std::size_t size = 330;
    double fit_fraction = 30.0 / 330.0;
    std::uint64_t seed = 1;
    int min_steps = 1;
    int max_steps = 8;
    int operand_max = 9;
    int value_max = 99;
    int tail_min = 0;
    int tail_max = 16;
    int t1 = 3;  // difficulty thresholds on chain steps
    int t2 = 5;

    void validate() const;
};

struct CorpusSplit {
    std::vector<Problem> fit_set;
    std::vector<Problem> eval_set;
};

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerMarker = "ANSWER=";
inline constexpr std::string_view kEndMarker = "#";

Problem generate_problem(std::uint64_t rng_seed, int chain_steps, const CorpusConfig& config = {});

/// config.size problems with ids p00000.., chain lengths drawn uniformly.
std::vector<Problem> generate_corpus(const CorpusConfig& config);

/// Seeded shuffle per difficulty stratum, then partition. The fit set holds
/// round(n * fit_fraction) problems, allocated across strata by largest
/// remainder so every stratum is within one problem of proportional.
CorpusSplit make_split(std::span<const Problem> problems, double fit_fraction, std::uint64_t seed);

/// Model input: "Q:" + question padded with '_' to a fixed width + "?" + think-open.
/// The fixed width puts every trace position at a problem-independent offset.
std::string render_prompt(const Problem& problem, int max_steps);

/// Value of a question string such as "12+7-3".
long evaluate_question(std::string_view question);

std::string problem_to_json_line(const Problem& p);
Problem problem_from_json_line(const std::string& line);

void write_corpus(std::span<const Problem> problems, const std::filesystem::path& path);
std::vector<Problem> read_corpus(const std::filesystem::path& path);

void write_split_manifest(const CorpusSplit& split, double fit_fraction, std::uint64_t seed,
                          const std::filesystem::path& path);
/// Rebuilds a split from a corpus and a manifest written by write_split_manifest.
CorpusSplit read_split(std::span<const Problem> corpus, const std::filesystem::path& manifest);

}  // namespace aoc

#endif

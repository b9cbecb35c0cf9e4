#ifndef AOC_PROBLEM_HPP
#define AOC_PROBLEM_HPP

#include <optional>
#include <string>

#include "aoc/common.hpp"

namespace aoc {

/// One synthetic reasoning task.
struct Problem {
    std::string id;
    std::string question;  // e.g. "12+7-3"
    long gold_answer = 0;
    std::optional<Difficulty> difficulty;  // label assigned at generation time
    int chain_steps = 0;
    std::string gold_trace;  // "<think>...</think>ANSWER=<n>#"
    // Unsteered generation length, filled in when a baseline run is recorded.
    std::optional<int> baseline_tokens;
};

/// Easy if count <= t1, Hard if count > t2, Medium otherwise.
inline Difficulty difficulty_from_count(long count, long t1, long t2)
{
    if (count <= t1) return Difficulty::Easy;
    if (count > t2) return Difficulty::Hard;
    return Difficulty::Medium;
}

}  // namespace aoc

#endif

#ifndef AOC_SCHEDULER_HPP
#define AOC_SCHEDULER_HPP

#include <algorithm>
#include <cmath>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "aoc/common.hpp"

namespace aoc {

enum class ScheduleMode { Static, CGOnly, UAOnly, HAC };

std::string_view to_string(ScheduleMode m);
ScheduleMode schedule_mode_from_string(std::string_view s);

/// Controller hyperparameters. All strengths are in backend units, i.e. already
/// multiplied by any calibration scale. In HAC mode alpha_base/alpha_max are not
/// used: the range is [alpha_init, alpha_init + delta] once the router has run.
struct AlphaScheduleConfig {
    ScheduleMode mode = ScheduleMode::HAC;
    double alpha_static = 100.0;
    double alpha_base = 10.0;
    double alpha_max = 50.0;
    double u_thr = 0.5;
    double k = 10.0;
    double delta = 40.0;
    double alpha_high = 50.0;  // easy
    double alpha_mid = 30.0;   // medium
    double alpha_low = 10.0;   // hard

    void validate() const;
};

struct AlphaStep {
    double u = 0.0;
    double alpha = 0.0;
    bool applied = false;  // false outside the think span or when steering is off
};
using AlphaTrace = std::vector<AlphaStep>;

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>
softmax(const Eigen::MatrixBase<Derived>& logits)
{
    using Scalar = typename Derived::Scalar;
    if (logits.size() == 0) throw InvalidArgument("softmax: empty logits");
    if (!logits.allFinite()) throw InvalidArgument("softmax: non-finite logits");
    const Scalar m = logits.maxCoeff();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

/// Shannon entropy (natural log) divided by ln|V|; 0 ln 0 := 0.
template <typename Derived>
double normalized_entropy(const Eigen::MatrixBase<Derived>& probs)
{
    const Eigen::Index v = probs.size();
    if (v < 2) throw InvalidArgument("normalized_entropy: vocabulary must have >= 2 entries");
    double sum = 0.0;
    double h = 0.0;
    for (Eigen::Index i = 0; i < v; ++i) {
        const double p = static_cast<double>(probs(i));
        if (!(p >= 0.0) || !std::isfinite(p))
            throw InvalidArgument("normalized_entropy: negative or non-finite probability");
        sum += p;
        if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(sum - 1.0) > 1e-6) throw InvalidArgument("normalized_entropy: probabilities do not sum to 1");
    const double u = h / std::log(static_cast<double>(v));
    return std::clamp(u, 0.0, 1.0);
}

double logistic(double x);

double cg_alpha_init(Difficulty difficulty, const AlphaScheduleConfig& config = {});

/// alpha_base + (alpha_max - alpha_base) * (1 - logistic(k (u - u_thr))).
double ua_alpha(double u, double alpha_base, double alpha_max, double u_thr, double k);

double hac_alpha(double alpha_init, double delta, double u, double u_thr, double k);

double next_alpha(const AlphaScheduleConfig& config, double alpha_init, double u);

/// Closed interval every alpha_t of a problem must lie in.
std::pair<double, double> alpha_bounds(const AlphaScheduleConfig& config, double alpha_init);

}  // namespace aoc

#endif

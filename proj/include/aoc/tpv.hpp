#ifndef AOC_TPV_HPP
#define AOC_TPV_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aoc/common.hpp"

namespace aoc {

struct ProgressSample {
    HiddenState hidden;
    double progress = 0.0;  // j/N, 1-based j
};

struct TpvFitMeta {
    std::size_t sample_count = 0;
    double ridge_lambda = 0.0;
    double residual_rmse = 0.0;
    double theta_norm = 0.0;
};

/// Thinking progress vector: a linear readout h -> theta.h + intercept of the
/// position of a hidden state within its reasoning trace. theta is stored raw
/// (not normalized) so intervention strengths act on regression units.
struct Tpv {
    Eigen::VectorXd theta;
    double intercept = 0.0;
    TpvFitMeta fit_meta;
    std::string backend_id;
    std::uint64_t seed = 0;

    Eigen::Index hidden_width() const { return theta.size(); }
};

inline constexpr double kDefaultRidgeLambda = 1e-6;

/// Pairs every state of one trajectory with its normalized 1-based position.
std::vector<ProgressSample> collect_samples(std::span<const HiddenState> trajectory);

/// Least-squares fit of progress on hidden state with an unpenalized intercept.
/// ridge_lambda > 0 solves the ridge normal equations; ridge_lambda == 0 returns
/// the minimum-norm least-squares solution. Sums are accumulated in double.
Tpv fit_tpv(std::span<const ProgressSample> samples, double ridge_lambda = kDefaultRidgeLambda);

template <typename Derived>
double predict_progress(const Tpv& tpv, const Eigen::MatrixBase<Derived>& h)
{
    if (h.size() != tpv.hidden_width())
        throw InvalidArgument("predict_progress: width mismatch");
    return tpv.theta.dot(h.template cast<double>()) + tpv.intercept;
}

/// h + alpha * theta. The intercept does not participate.
HiddenState apply_intervention(const HiddenState& h, const Tpv& tpv, double alpha);

/// Key-value text document; doubles are written with 17 significant digits so
/// a save/load cycle is bit-exact.
std::string tpv_to_text(const Tpv& tpv);
Tpv tpv_from_text(const std::string& text);
void save_tpv(const Tpv& tpv, const std::filesystem::path& path);
Tpv load_tpv(const std::filesystem::path& path);

}  // namespace aoc

#endif

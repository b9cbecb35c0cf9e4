#ifndef AOC_SYNTHETIC_BACKEND_HPP
#define AOC_SYNTHETIC_BACKEND_HPP

#include <string>

#include "aoc/backend.hpp"

namespace aoc {

/// Closed-form stand-in for a reasoning model.
///
/// A latent progress c starts at initial_progress and advances by
/// step_increment per step. The emitted hidden state is h_t = c_t theta* + eps
/// (observation noise only). A pending steering delta enters the transition:
/// c_{t+1} = ((c_t theta* + delta) . theta*) / (theta* . theta*) + step_increment.
/// The think span emits one step symbol per step until c >= 1, then
/// think-close, the answer marker, the answer digits and the end marker.
struct SyntheticBackendConfig {
    Eigen::VectorXd planted_direction;
    double step_increment = 0.05;
    double noise_sigma = 0.0;
    double initial_progress = 0.0;
    double logit_sharpness = 10.0;
    std::size_t context_limit = 4096;

    void validate() const;
};

/// Progress within this distance of 1 counts as finished; shared with the
/// closed form so both agree on exact boundary cases.
inline constexpr double kSyntheticEndTolerance = 1e-9;

/// Planted direction drawn from a standard normal with the given seed.
SyntheticBackendConfig make_synthetic_config(Eigen::Index dim, std::uint64_t seed, double step_increment,
                                             double noise_sigma_rel, double initial_progress);

/// Number of step symbols emitted before think-close under constant strength alpha
/// along a fitted direction with theta . theta* = theta_dot_thetastar.
long steps_to_end_closed_form(const SyntheticBackendConfig& config, double alpha, double theta_dot_thetastar);

class SyntheticBackend final : public Backend {
public:
    explicit SyntheticBackend(SyntheticBackendConfig config);

    std::string id() const override { return "synthetic"; }
    Eigen::Index hidden_width() const override { return config_.planted_direction.size(); }
    std::size_t context_limit() const override { return config_.context_limit; }
    std::unique_ptr<Backend> clone() const override;

    BackendStepOutput step(std::span<const TokenId> context) override;

    const SyntheticBackendConfig& config() const { return config_; }
    double progress() const { return progress_; }

protected:
    void on_reset(std::uint64_t seed) override;

private:
    enum class Phase { Think, Answer, Done };

    SyntheticBackendConfig config_;
    double direction_sq_norm_;
    Rng rng_;
    Phase phase_ = Phase::Think;
    double progress_ = 0.0;
    std::size_t prompt_len_ = 0;
    std::size_t emitted_ = 0;
    std::vector<TokenId> answer_tokens_;
    std::size_t answer_pos_ = 0;
};

}  // namespace aoc

#endif

#include "aoc/synthetic_backend.hpp"

#include <cmath>

#include "aoc/corpus.hpp"

namespace aoc {

void SyntheticBackendConfig::validate() const
{
    if (planted_direction.size() == 0) throw ConfigError("synthetic: planted direction is empty");
    if (!planted_direction.allFinite() || !(planted_direction.norm() > 0.0))
        throw ConfigError("synthetic: planted direction must be finite and non-zero");
    if (!(step_increment > 0.0 && step_increment < 1.0)) throw ConfigError("synthetic: step_increment must lie in (0, 1)");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("synthetic: noise_sigma must be >= 0");
    if (!(initial_progress >= 0.0 && initial_progress < 1.0))
        throw ConfigError("synthetic: initial_progress must lie in [0, 1)");
    if (!(logit_sharpness > 0.0)) throw ConfigError("synthetic: logit_sharpness must be positive");
    if (context_limit < 2) throw ConfigError("synthetic: context limit too small");
}

SyntheticBackendConfig make_synthetic_config(Eigen::Index dim, std::uint64_t seed, double step_increment,
                                             double noise_sigma_rel, double initial_progress)
{
    if (dim <= 0) throw ConfigError("synthetic: dim must be positive");
    Rng rng(mix_seed(seed, "planted-direction"));
    SyntheticBackendConfig c;
    c.planted_direction.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) c.planted_direction(i) = standard_normal(rng);
    c.step_increment = step_increment;
    c.noise_sigma = noise_sigma_rel * c.planted_direction.norm();
    c.initial_progress = initial_progress;
    c.validate();
    return c;
}

long steps_to_end_closed_form(const SyntheticBackendConfig& config, double alpha, double theta_dot_thetastar)
{
    const double sq = config.planted_direction.squaredNorm();
    const double inc = config.step_increment + alpha * theta_dot_thetastar / sq;
    if (!(inc > 0.0)) throw InvalidArgument("steps_to_end_closed_form: non-positive effective increment");
    const double remaining = 1.0 - kSyntheticEndTolerance - config.initial_progress;
    if (remaining <= 0.0) return 0;
    return static_cast<long>(std::ceil(remaining / inc));
}

SyntheticBackend::SyntheticBackend(SyntheticBackendConfig config) : config_(std::move(config))
{
    config_.validate();
    direction_sq_norm_ = config_.planted_direction.squaredNorm();
    on_reset(0);
}

std::unique_ptr<Backend> SyntheticBackend::clone() const
{
    return std::make_unique<SyntheticBackend>(config_);
}

void SyntheticBackend::on_reset(std::uint64_t seed)
{
    rng_.seed(mix_seed(seed, "synthetic-noise"));
    phase_ = Phase::Think;
    progress_ = config_.initial_progress;
    prompt_len_ = 0;
    emitted_ = 0;
    answer_tokens_.clear();
    answer_pos_ = 0;
}

BackendStepOutput SyntheticBackend::step(std::span<const TokenId> context)
{
    check_context(context);
    const auto& v = vocab();
    if (prompt_len_ == 0) {
        // first step of the stream: the prompt carries the question
        prompt_len_ = context.size();
        const std::string text = v.decode({context.begin(), context.end()});
        const auto q0 = text.find("Q:");
        const auto q1 = text.find('?');
        if (q0 == std::string::npos || q1 == std::string::npos || q1 < q0)
            throw InvalidArgument("synthetic: prompt has no question");
        std::string q = text.substr(q0 + 2, q1 - q0 - 2);
        while (!q.empty() && q.back() == '_') q.pop_back();
        answer_tokens_ = v.encode(std::string(kAnswerMarker) + std::to_string(evaluate_question(q)) +
                                  std::string(kEndMarker));
    }
    if (context.size() != prompt_len_ + emitted_)
        throw InvalidArgument("synthetic: context does not extend the current stream");
    if (phase_ == Phase::Done) throw InvalidArgument("synthetic: stream already ended");

    const Eigen::VectorXd& dir = config_.planted_direction;
    const auto steering = take_steering();
    if (phase_ == Phase::Think && emitted_ > 0) {
        // the previous step's clean state, plus any steering, drives the transition
        Eigen::VectorXd h = progress_ * dir;
        if (steering) h += *steering;
        progress_ = h.dot(dir) / direction_sq_norm_ + config_.step_increment;
    }

    BackendStepOutput out;
    out.hidden = progress_ * dir;
    if (config_.noise_sigma > 0.0)
        for (Eigen::Index i = 0; i < out.hidden.size(); ++i) out.hidden(i) += config_.noise_sigma * standard_normal(rng_);

    const double kappa = config_.logit_sharpness;
    out.logits = Eigen::VectorXd::Constant(v.size(), -2.0 * kappa);
    if (phase_ == Phase::Think) {
        const double margin = progress_ - (1.0 - kSyntheticEndTolerance);
        out.logits(v.think_step()) = 0.0;
        out.logits(v.think_close()) = kappa * margin;
        // tie at margin 0 resolves to think-close, which has the lower id
        out.token = greedy_token(out.logits);
        if (out.token == v.think_close()) phase_ = Phase::Answer;
    } else {
        out.token = answer_tokens_.at(answer_pos_++);
        out.logits(out.token) = kappa;
        if (out.token == v.end()) phase_ = Phase::Done;
    }
    out.emitted_logits = out.logits;
    out.is_end = out.token == v.end();
    ++emitted_;
    return out;
}

}  // namespace aoc

#include "aoc/backend.hpp"

#include <spdlog/spdlog.h>

namespace aoc {

TokenId greedy_token(const Eigen::VectorXd& logits)
{
    if (logits.size() == 0) throw InvalidArgument("greedy_token: empty logits");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i)
        if (logits(i) > logits(best)) best = i;
    return static_cast<TokenId>(best);
}

void Backend::reset(std::uint64_t seed)
{
    pending_.reset();
    on_reset(seed);
}

void Backend::steer(const Eigen::VectorXd& delta)
{
    if (delta.size() != hidden_width()) throw InvalidArgument("steer: width mismatch");
    if (!delta.allFinite()) throw InvalidArgument("steer: non-finite delta");
    if (pending_) spdlog::warn("{}: steer called twice before a step; replacing the pending delta", id());
    pending_ = delta;
}

std::optional<Eigen::VectorXd> Backend::take_steering()
{
    auto out = std::move(pending_);
    pending_.reset();
    return out;
}

void Backend::check_context(std::span<const TokenId> context) const
{
    if (context.empty()) throw InvalidArgument(id() + ": empty context");
    if (context.size() > context_limit())
        throw InvalidArgument(id() + ": context overflow (" + std::to_string(context.size()) + " > " +
                              std::to_string(context_limit()) + ")");
    for (auto t : context)
        if (t < 0 || t >= vocab().size()) throw InvalidArgument(id() + ": token id out of range");
}

}  // namespace aoc

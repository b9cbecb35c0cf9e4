#ifndef AOC_BACKEND_HPP
#define AOC_BACKEND_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include <Eigen/Core>

#include "aoc/common.hpp"
#include "aoc/vocab.hpp"

namespace aoc {

struct BackendStepOutput {
    Eigen::VectorXd logits;          // unsteered next-token logits
    HiddenState hidden;              // site activation before any steering this step
    Eigen::VectorXd emitted_logits;  // logits the emitted token is chosen from
    TokenId token = 0;               // greedy choice over emitted_logits
    bool is_end = false;             // token is the end-of-sequence marker
};

/// Index of the first maximal entry.
TokenId greedy_token(const Eigen::VectorXd& logits);

/// Generation backend with a one-shot steering hook.
///
/// A steer(delta) call is consumed by the next step() call and then cleared.
/// One instance serves one generation stream at a time; use clone() to obtain
/// independent instances that share read-only weights.
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string id() const = 0;
    virtual Eigen::Index hidden_width() const = 0;
    virtual std::size_t context_limit() const = 0;
    virtual std::unique_ptr<Backend> clone() const = 0;

    const Vocabulary& vocab() const { return default_vocabulary(); }

    /// Begin a new stream. seed drives any stochastic component.
    void reset(std::uint64_t seed);

    /// context = prompt followed by every token emitted so far in this stream.
    virtual BackendStepOutput step(std::span<const TokenId> context) = 0;

    void steer(const Eigen::VectorXd& delta);
    bool steering_pending() const { return pending_.has_value(); }

protected:
    virtual void on_reset(std::uint64_t seed) = 0;
    std::optional<Eigen::VectorXd> take_steering();
    void check_context(std::span<const TokenId> context) const;

private:
    std::optional<Eigen::VectorXd> pending_;
};

}  // namespace aoc

#endif

#ifndef AOC_TINY_TRANSFORMER_HPP
#define AOC_TINY_TRANSFORMER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aoc/backend.hpp"
#include "aoc/problem.hpp"

namespace aoc {

/// Where steering is added. Final is the post-norm representation feeding the
/// logits head; Block(i) is the residual stream after block i (0-based).
struct InterventionSite {
    enum class Kind { Final, Block } kind = Kind::Final;
    int block = 0;

    static InterventionSite parse(const std::string& s);
    std::string to_string() const;
};

struct TinyTransformerConfig {
    int layers = 2;
    int heads = 4;
    int width = 64;
    int context = 288;
    int train_steps = 8000;
    int batch_size = 8;
    int warmup_steps = 100;
    double learning_rate = 3e-3;
    double grad_clip = 1.0;
    std::uint64_t seed = 1;
    int max_steps = 8;  // prompt padding width, must match the corpus
    InterventionSite site;

    void validate() const;
};

struct ParamSlot {
    std::size_t offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

struct BlockSlots {
    ParamSlot ln1_g, ln1_b, wqkv, bqkv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct ModelLayout {
    ParamSlot tok_emb, pos_emb;
    std::vector<BlockSlots> blocks;
    ParamSlot lnf_g, lnf_b, head_w, head_b;
    std::size_t total = 0;

    ModelLayout(const TinyTransformerConfig& config, int vocab_size);
};

/// Flat float parameter block plus the layout that slices it.
struct TransformerWeights {
    TinyTransformerConfig config;
    int vocab_size = 0;
    std::vector<float> params;

    TransformerWeights(const TinyTransformerConfig& config, int vocab_size);
    ModelLayout layout() const { return ModelLayout(config, vocab_size); }
};

/// Random initialization; deterministic in config.seed.
TransformerWeights init_weights(const TinyTransformerConfig& config, int vocab_size);

/// Prompt followed by the gold trace, tokenized.
std::vector<TokenId> training_sequence(const Problem& problem, int max_steps);

/// Teacher-forced loss on trace tokens (prompt positions are not scored).
/// When grad is non-null the parameter gradient is accumulated into it scaled by
/// grad_scale. Returns the summed cross entropy and the scored-token count.
struct SequenceLoss {
    double sum = 0.0;
    std::size_t count = 0;
};
SequenceLoss sequence_loss(const TransformerWeights& weights, std::span<const TokenId> tokens, std::size_t prompt_len,
                           std::vector<float>* grad = nullptr, float grad_scale = 1.0f);

/// Full-sequence forward: logits for every position (rows) and the site
/// activation of every position.
struct SequenceForward {
    Eigen::MatrixXf logits;
    Eigen::MatrixXf site;
};
SequenceForward forward_sequence(const TransformerWeights& weights, std::span<const TokenId> tokens);

struct TrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> loss_curve;  // mean batch loss every report interval
};

using TrainProgress = std::function<void(int step, double loss)>;

/// Autoregressive next-token training with Adam on batches sampled from the
/// corpus. Single-threaded and bit-reproducible for a given seed.
TransformerWeights train_tiny_transformer(std::span<const Problem> corpus, const TinyTransformerConfig& config,
                                          TrainReport* report = nullptr, const TrainProgress& progress = {});

/// Mean per-token loss on the given problems.
double evaluate_loss(const TransformerWeights& weights, std::span<const Problem> problems);

/// Binary checkpoint: magic, version, config echo (JSON), raw little-endian floats.
void save_weights(const TransformerWeights& weights, const std::filesystem::path& path);
TransformerWeights load_weights(const std::filesystem::path& path);

std::string config_to_json(const TinyTransformerConfig& config);
TinyTransformerConfig config_from_json(const std::string& text);

/// Incremental (KV-cached) greedy generation over shared read-only weights.
class TinyTransformerBackend final : public Backend {
public:
    explicit TinyTransformerBackend(std::shared_ptr<const TransformerWeights> weights);

    std::string id() const override { return "tiny_transformer"; }
    Eigen::Index hidden_width() const override { return weights_->config.width; }
    std::size_t context_limit() const override { return static_cast<std::size_t>(weights_->config.context); }
    std::unique_ptr<Backend> clone() const override;

    BackendStepOutput step(std::span<const TokenId> context) override;

    const TransformerWeights& weights() const { return *weights_; }

protected:
    void on_reset(std::uint64_t seed) override;

private:
    Eigen::RowVectorXf embed(TokenId token, std::size_t pos) const;
    // Blocks [first, end) at one position; writes that position's cache rows.
    Eigen::RowVectorXf run_blocks(Eigen::RowVectorXf x, std::size_t pos, int first, int end);

    std::shared_ptr<const TransformerWeights> weights_;
    ModelLayout layout_;
    std::vector<Eigen::MatrixXf> keys_, values_;  // per block, context x width
    std::vector<TokenId> cached_;
};

}  // namespace aoc

#endif

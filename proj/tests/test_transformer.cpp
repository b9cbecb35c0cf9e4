#include <doctest.h>

#include "aoc/corpus.hpp"
#include "aoc/tiny_transformer.hpp"
#include "support.hpp"

using namespace aoc;

namespace {

TinyTransformerConfig small_config()
{
    TinyTransformerConfig c;
    c.layers = 2;
    c.heads = 2;
    c.width = 16;
    c.context = 64;
    c.max_steps = 3;
    c.train_steps = 150;
    c.batch_size = 4;
    c.warmup_steps = 10;
    c.seed = 5;
    return c;
}

CorpusConfig small_corpus()
{
    CorpusConfig c;
    c.size = 64;
    c.max_steps = 3;
    c.tail_max = 2;
    c.t1 = 1;
    c.t2 = 2;
    return c;
}

std::vector<TokenId> sample_sequence()
{
    const auto p = generate_problem(9, 3, small_corpus());
    return training_sequence(p, 3);
}

}  // namespace

TEST_CASE("intervention site parsing")
{
    CHECK(InterventionSite::parse("final").kind == InterventionSite::Kind::Final);
    const auto b = InterventionSite::parse("block:1");
    CHECK(b.kind == InterventionSite::Kind::Block);
    CHECK(b.block == 1);
    CHECK(b.to_string() == "block:1");
    CHECK_THROWS_AS(InterventionSite::parse("block:x"), ConfigError);
    CHECK_THROWS_AS(InterventionSite::parse("middle"), ConfigError);
}

TEST_CASE("config validation")
{
    auto c = small_config();
    CHECK_NOTHROW(c.validate());
    c.layers = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.width = 130;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.width = 15;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.site = InterventionSite::parse("block:2");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("analytic gradient matches central differences")
{
    auto cfg = small_config();
    TransformerWeights w = init_weights(cfg, default_vocabulary().size());
    // larger weights than the init so every path carries signal
    aoc_test::Gen g(51);
    for (auto& p : w.params) p += static_cast<float>(0.1 * g.normal());
    const auto seq = sample_sequence();
    const std::size_t prompt = 12;

    std::vector<float> grad(w.params.size(), 0.0f);
    sequence_loss(w, seq, prompt, &grad, 1.0f);

    const auto loss_at = [&](std::size_t i, float h) {
        TransformerWeights v = w;
        v.params[i] += h;
        return sequence_loss(v, seq, prompt).sum;
    };
    int checked = 0, agreeing = 0;
    for (int c = 0; c < 60; ++c) {
        const auto i = static_cast<std::size_t>(g.integer(0, static_cast<long>(w.params.size()) - 1));
        const float h = 1e-2f;
        const double numeric = (loss_at(i, h) - loss_at(i, -h)) / (2.0 * h);
        if (std::abs(numeric) < 1e-3 && std::abs(grad[i]) < 1e-3) continue;
        ++checked;
        if (std::abs(numeric - grad[i]) <= 2e-2 * std::max(std::abs(numeric), 1e-1)) ++agreeing;
    }
    CHECK(checked >= 20);
    CHECK(agreeing >= checked - 1);  // float32 differences can miss on a kink
}

TEST_CASE("incremental decoding matches the full forward pass")
{
    for (const char* site : {"final", "block:0"}) {
        auto cfg = small_config();
        cfg.site = InterventionSite::parse(site);
        auto w = std::make_shared<TransformerWeights>(init_weights(cfg, default_vocabulary().size()));
        aoc_test::Gen g(52);
        for (auto& p : w->params) p += static_cast<float>(0.1 * g.normal());
        const auto seq = sample_sequence();
        const auto full = forward_sequence(*w, seq);

        TinyTransformerBackend b(w);
        b.reset(0);
        for (std::size_t n = 12; n <= seq.size(); ++n) {
            const auto out = b.step(std::span(seq).first(n));
            const auto row = static_cast<Eigen::Index>(n - 1);
            CHECK((out.logits - full.logits.row(row).transpose().cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
            CHECK((out.hidden - full.site.row(row).transpose().cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
            CHECK(out.emitted_logits == out.logits);
        }
        // a context that does not extend the cache is recomputed from scratch
        const auto again = b.step(std::span(seq).first(14));
        CHECK((again.logits - full.logits.row(13).transpose().cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("steering at the final site is a logit shift through the head")
{
    auto cfg = small_config();
    auto w = std::make_shared<TransformerWeights>(init_weights(cfg, default_vocabulary().size()));
    const auto seq = sample_sequence();
    TinyTransformerBackend b(w);
    b.reset(0);
    const auto plain = b.step(std::span(seq).first(15));
    b.reset(0);
    aoc_test::Gen g(53);
    const Eigen::VectorXd delta = g.vector(cfg.width);
    b.steer(delta);
    const auto steered = b.step(std::span(seq).first(15));
    CHECK((steered.logits - plain.logits).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(steered.hidden == plain.hidden);

    const ModelLayout L = w->layout();
    const Eigen::Map<const Eigen::MatrixXf> head(w->params.data() + L.head_w.offset, L.head_w.rows, L.head_w.cols);
    const Eigen::VectorXd expected = plain.logits + head.cast<double>().transpose() * delta;
    CHECK((steered.emitted_logits - expected).cwiseAbs().maxCoeff() < 1e-4);

    b.steer(Eigen::VectorXd::Zero(cfg.width));
    const auto zero = b.step(std::span(seq).first(16));
    CHECK(zero.emitted_logits == zero.logits);
}

TEST_CASE("steering at a block site changes later positions through the cache")
{
    auto cfg = small_config();
    cfg.site = InterventionSite::parse("block:0");
    auto w = std::make_shared<TransformerWeights>(init_weights(cfg, default_vocabulary().size()));
    aoc_test::Gen g(54);
    for (auto& p : w->params) p += static_cast<float>(0.1 * g.normal());
    const auto seq = sample_sequence();
    TinyTransformerBackend a(w), b(w);
    a.reset(0);
    b.reset(0);
    a.step(std::span(seq).first(14));
    b.step(std::span(seq).first(14));
    b.steer(g.vector(cfg.width, 3.0));
    const auto sa = a.step(std::span(seq).first(15));
    const auto sb = b.step(std::span(seq).first(15));
    CHECK((sa.logits - sb.logits).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((sb.emitted_logits - sb.logits).cwiseAbs().maxCoeff() > 1e-3);
    const auto na = a.step(std::span(seq).first(16));
    const auto nb = b.step(std::span(seq).first(16));
    CHECK((na.logits - nb.logits).cwiseAbs().maxCoeff() > 1e-5);
}

TEST_CASE("training lowers the loss and is reproducible")
{
    const auto corpus = generate_corpus(small_corpus());
    TrainReport r1, r2;
    const auto w1 = train_tiny_transformer(corpus, small_config(), &r1);
    const auto w2 = train_tiny_transformer(corpus, small_config(), &r2);
    CHECK(r1.final_loss < r1.initial_loss);
    CHECK(w1.params == w2.params);
    CHECK(r1.loss_curve == r2.loss_curve);
    CHECK_THROWS_AS(train_tiny_transformer(std::span<const Problem>{}, small_config()), InvalidArgument);
}

TEST_CASE("checkpoint round trip and header checks")
{
    const auto w = init_weights(small_config(), default_vocabulary().size());
    const auto dir = aoc_test::scratch_dir("ckpt");
    save_weights(w, dir / "w.bin");
    const auto back = load_weights(dir / "w.bin");
    CHECK(back.params == w.params);
    CHECK(config_to_json(back.config) == config_to_json(w.config));

    std::string bytes = aoc_test::slurp(dir / "w.bin");
    CHECK(bytes.compare(0, 7, "AOCTINY") == 0);
    bytes[0] = 'X';
    {
        std::ofstream os(dir / "bad.bin", std::ios::binary);
        os << bytes;
    }
    CHECK_THROWS_AS(load_weights(dir / "bad.bin"), InvalidArgument);
    bytes = aoc_test::slurp(dir / "w.bin");
    {
        std::ofstream os(dir / "short.bin", std::ios::binary);
        os << bytes.substr(0, bytes.size() - 8);
    }
    CHECK_THROWS_AS(load_weights(dir / "short.bin"), InvalidArgument);
}

TEST_CASE("context overflow is rejected")
{
    auto w = std::make_shared<TransformerWeights>(init_weights(small_config(), default_vocabulary().size()));
    TinyTransformerBackend b(w);
    b.reset(0);
    std::vector<TokenId> long_ctx(65, 5);
    CHECK_THROWS_AS(b.step(long_ctx), InvalidArgument);
    CHECK_THROWS_AS(b.steer(Eigen::VectorXd::Zero(3)), InvalidArgument);
}

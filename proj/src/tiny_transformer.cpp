#include "aoc/tiny_transformer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <json.hpp>

#include "aoc/corpus.hpp"

namespace aoc {

namespace {

using MatF = Eigen::MatrixXf;
using RowF = Eigen::RowVectorXf;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian floats");

constexpr char kMagic[8] = {'A', 'O', 'C', 'T', 'I', 'N', 'Y', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr float kLnEps = 1e-5f;

Eigen::Map<const MatF> cmat(const std::vector<float>& p, const ParamSlot& s)
{
    return {p.data() + s.offset, s.rows, s.cols};
}
Eigen::Map<MatF> mmat(std::vector<float>& p, const ParamSlot& s)
{
    return {p.data() + s.offset, s.rows, s.cols};
}
Eigen::Map<const RowF> crow(const std::vector<float>& p, const ParamSlot& s)
{
    return {p.data() + s.offset, s.cols};
}
Eigen::Map<RowF> mrow(std::vector<float>& p, const ParamSlot& s)
{
    return {p.data() + s.offset, s.cols};
}

struct LnCache {
    MatF xhat;
    Eigen::VectorXf rstd;
};

MatF layer_norm(const MatF& x, const Eigen::Map<const RowF>& g, const Eigen::Map<const RowF>& b, LnCache* cache)
{
    const Eigen::VectorXf mean = x.rowwise().mean();
    MatF xc = x.colwise() - mean;
    const Eigen::VectorXf var = xc.array().square().rowwise().mean();
    const Eigen::VectorXf rstd = (var.array() + kLnEps).rsqrt();
    MatF xhat = xc.array().colwise() * rstd.array();
    MatF y = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = rstd;
    }
    return y;
}

MatF layer_norm_backward(const MatF& dy, const LnCache& c, const Eigen::Map<const RowF>& g, Eigen::Map<RowF> dg,
                         Eigen::Map<RowF> db)
{
    dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    db += dy.colwise().sum();
    const MatF dxhat = dy.array().rowwise() * g.array();
    const Eigen::VectorXf m1 = dxhat.rowwise().mean();
    const Eigen::VectorXf m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
    MatF dx = (dxhat.colwise() - m1) - (c.xhat.array().colwise() * m2.array()).matrix();
    return dx.array().colwise() * c.rstd.array();
}

RowF layer_norm_row(const RowF& x, const Eigen::Map<const RowF>& g, const Eigen::Map<const RowF>& b)
{
    const float mean = x.mean();
    const RowF xc = x.array() - mean;
    const float rstd = 1.0f / std::sqrt(xc.squaredNorm() / static_cast<float>(x.size()) + kLnEps);
    return (xc.array() * rstd * g.array() + b.array()).matrix();
}

constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)

template <typename A>
auto gelu(const A& x)
{
    return 0.5f * x * (1.0f + (kGeluC * (x + 0.044715f * x.cube())).tanh());
}

MatF gelu_grad(const MatF& x)
{
    const Eigen::ArrayXXf a = x.array();
    const Eigen::ArrayXXf t = (kGeluC * (a + 0.044715f * a.cube())).tanh();
    return (0.5f * (1.0f + t) + 0.5f * a * (1.0f - t.square()) * kGeluC * (1.0f + 3.0f * 0.044715f * a.square()))
        .matrix();
}

struct BlockCache {
    LnCache ln1;
    MatF xn;
    MatF qkv;
    std::vector<MatF> probs;
    MatF attn;
    LnCache ln2;
    MatF yn;
    MatF pre;
    MatF act;
};

struct ForwardCache {
    std::vector<BlockCache> blocks;
    LnCache lnf;
    MatF fn;
};

/// Causal multi-head attention over a full sequence.
MatF attention(const MatF& qkv, int heads, int width, std::vector<MatF>* probs_out)
{
    const Eigen::Index t = qkv.rows();
    const int hd = width / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    MatF out(t, width);
    if (probs_out) probs_out->resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const auto q = qkv.middleCols(h * hd, hd);
        const auto k = qkv.middleCols(width + h * hd, hd);
        const auto v = qkv.middleCols(2 * width + h * hd, hd);
        MatF p = (q * k.transpose()) * scale;
        for (Eigen::Index i = 0; i < t; ++i) {
            const float m = p.row(i).head(i + 1).maxCoeff();
            float sum = 0.0f;
            for (Eigen::Index j = 0; j <= i; ++j) {
                p(i, j) = std::exp(p(i, j) - m);
                sum += p(i, j);
            }
            p.row(i).head(i + 1) /= sum;
            p.row(i).tail(t - i - 1).setZero();
        }
        out.middleCols(h * hd, hd) = p * v;
        if (probs_out) (*probs_out)[static_cast<std::size_t>(h)] = std::move(p);
    }
    return out;
}

/// Forward over a whole sequence; returns the final-normed representation.
MatF forward_full(const TransformerWeights& w, const ModelLayout& L, std::span<const TokenId> tokens,
                  ForwardCache* cache, MatF* site_out)
{
    const auto& p = w.params;
    const auto& cfg = w.config;
    const auto t = static_cast<Eigen::Index>(tokens.size());
    const auto tok = cmat(p, L.tok_emb);
    const auto pos = cmat(p, L.pos_emb);
    MatF x(t, cfg.width);
    for (Eigen::Index i = 0; i < t; ++i) x.row(i) = tok.row(tokens[static_cast<std::size_t>(i)]) + pos.row(i);

    if (cache) cache->blocks.resize(L.blocks.size());
    for (std::size_t b = 0; b < L.blocks.size(); ++b) {
        const auto& s = L.blocks[b];
        BlockCache local;
        BlockCache& c = cache ? cache->blocks[b] : local;
        MatF xn = layer_norm(x, crow(p, s.ln1_g), crow(p, s.ln1_b), &c.ln1);
        MatF qkv = (xn * cmat(p, s.wqkv)).rowwise() + crow(p, s.bqkv);
        MatF attn = attention(qkv, cfg.heads, cfg.width, cache ? &c.probs : nullptr);
        x += (attn * cmat(p, s.wo)).rowwise() + crow(p, s.bo);
        MatF yn = layer_norm(x, crow(p, s.ln2_g), crow(p, s.ln2_b), &c.ln2);
        MatF pre = (yn * cmat(p, s.w1)).rowwise() + crow(p, s.b1);
        MatF act = gelu(pre.array()).matrix();
        x += (act * cmat(p, s.w2)).rowwise() + crow(p, s.b2);
        if (site_out && cfg.site.kind == InterventionSite::Kind::Block && cfg.site.block == static_cast<int>(b))
            *site_out = x;
        if (cache) {
            c.xn = std::move(xn);
            c.qkv = std::move(qkv);
            c.attn = std::move(attn);
            c.yn = std::move(yn);
            c.pre = std::move(pre);
            c.act = std::move(act);
        }
    }
    LnCache lnf;
    MatF fn = layer_norm(x, crow(p, L.lnf_g), crow(p, L.lnf_b), cache ? &cache->lnf : &lnf);
    if (site_out && cfg.site.kind == InterventionSite::Kind::Final) *site_out = fn;
    return fn;
}

void backward_full(const TransformerWeights& w, const ModelLayout& L, std::span<const TokenId> tokens,
                   const ForwardCache& c, const MatF& dlogits, std::vector<float>& g)
{
    const auto& p = w.params;
    const auto& cfg = w.config;
    const int width = cfg.width;
    const int hd = width / cfg.heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

    mmat(g, L.head_w) += c.fn.transpose() * dlogits;
    mrow(g, L.head_b) += dlogits.colwise().sum();
    MatF dfn = dlogits * cmat(p, L.head_w).transpose();
    MatF dx = layer_norm_backward(dfn, c.lnf, crow(p, L.lnf_g), mrow(g, L.lnf_g), mrow(g, L.lnf_b));

    for (std::size_t bi = L.blocks.size(); bi-- > 0;) {
        const auto& s = L.blocks[bi];
        const auto& bc = c.blocks[bi];

        // MLP
        mmat(g, s.w2) += bc.act.transpose() * dx;
        mrow(g, s.b2) += dx.colwise().sum();
        MatF dpre = (dx * cmat(p, s.w2).transpose()).cwiseProduct(gelu_grad(bc.pre));
        mmat(g, s.w1) += bc.yn.transpose() * dpre;
        mrow(g, s.b1) += dpre.colwise().sum();
        MatF dyn = dpre * cmat(p, s.w1).transpose();
        dx += layer_norm_backward(dyn, bc.ln2, crow(p, s.ln2_g), mrow(g, s.ln2_g), mrow(g, s.ln2_b));

        // attention
        mmat(g, s.wo) += bc.attn.transpose() * dx;
        mrow(g, s.bo) += dx.colwise().sum();
        const MatF dattn = dx * cmat(p, s.wo).transpose();
        MatF dqkv(bc.qkv.rows(), 3 * width);
        for (int h = 0; h < cfg.heads; ++h) {
            const auto q = bc.qkv.middleCols(h * hd, hd);
            const auto k = bc.qkv.middleCols(width + h * hd, hd);
            const auto v = bc.qkv.middleCols(2 * width + h * hd, hd);
            const MatF& pr = bc.probs[static_cast<std::size_t>(h)];
            const auto dout = dattn.middleCols(h * hd, hd);
            const MatF dp = dout * v.transpose();
            dqkv.middleCols(2 * width + h * hd, hd) = pr.transpose() * dout;
            const Eigen::VectorXf rows = (dp.array() * pr.array()).rowwise().sum();
            const MatF ds = (pr.array() * (dp.colwise() - rows).array()).matrix() * scale;
            dqkv.middleCols(h * hd, hd) = ds * k;
            dqkv.middleCols(width + h * hd, hd) = ds.transpose() * q;
        }
        mmat(g, s.wqkv) += bc.xn.transpose() * dqkv;
        mrow(g, s.bqkv) += dqkv.colwise().sum();
        const MatF dxn = dqkv * cmat(p, s.wqkv).transpose();
        dx += layer_norm_backward(dxn, bc.ln1, crow(p, s.ln1_g), mrow(g, s.ln1_g), mrow(g, s.ln1_b));
    }

    auto dtok = mmat(g, L.tok_emb);
    auto dpos = mmat(g, L.pos_emb);
    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
        dtok.row(tokens[static_cast<std::size_t>(i)]) += dx.row(i);
        dpos.row(i) += dx.row(i);
    }
}

std::size_t prompt_length(const Problem& problem, int max_steps)
{
    return default_vocabulary().encode(render_prompt(problem, max_steps)).size();
}

}  // namespace

InterventionSite InterventionSite::parse(const std::string& s)
{
    InterventionSite site;
    if (s == "final") return site;
    if (s.rfind("block:", 0) == 0) {
        site.kind = Kind::Block;
        try {
            site.block = std::stoi(s.substr(6));
        } catch (const std::exception&) {
            throw ConfigError("bad intervention site '" + s + "'");
        }
        if (site.block < 0) throw ConfigError("bad intervention site '" + s + "'");
        return site;
    }
    throw ConfigError("bad intervention site '" + s + "' (expected final or block:<i>)");
}

std::string InterventionSite::to_string() const
{
    return kind == Kind::Final ? "final" : "block:" + std::to_string(block);
}

void TinyTransformerConfig::validate() const
{
    if (layers < 1 || layers > 4) throw ConfigError("tiny_transformer: layers must lie in [1, 4]");
    if (heads < 1) throw ConfigError("tiny_transformer: heads must be positive");
    if (width < 1 || width > 128) throw ConfigError("tiny_transformer: width must lie in [1, 128]");
    if (width % heads != 0) throw ConfigError("tiny_transformer: width must be divisible by heads");
    if (context < 2) throw ConfigError("tiny_transformer: context must be >= 2");
    if (train_steps < 0) throw ConfigError("tiny_transformer: train_steps must be >= 0");
    if (batch_size < 1) throw ConfigError("tiny_transformer: batch_size must be positive");
    if (warmup_steps < 0) throw ConfigError("tiny_transformer: warmup_steps must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("tiny_transformer: learning_rate must be positive");
    if (!(grad_clip > 0.0)) throw ConfigError("tiny_transformer: grad_clip must be positive");
    if (max_steps < 1) throw ConfigError("tiny_transformer: max_steps must be positive");
    if (site.kind == InterventionSite::Kind::Block && site.block >= layers)
        throw ConfigError("tiny_transformer: intervention block out of range");
}

ModelLayout::ModelLayout(const TinyTransformerConfig& config, int vocab_size)
{
    std::size_t off = 0;
    auto slot = [&](Eigen::Index r, Eigen::Index c) {
        ParamSlot s{off, r, c};
        off += s.size();
        return s;
    };
    const Eigen::Index d = config.width;
    tok_emb = slot(vocab_size, d);
    pos_emb = slot(config.context, d);
    for (int l = 0; l < config.layers; ++l) {
        BlockSlots b;
        b.ln1_g = slot(1, d);
        b.ln1_b = slot(1, d);
        b.wqkv = slot(d, 3 * d);
        b.bqkv = slot(1, 3 * d);
        b.wo = slot(d, d);
        b.bo = slot(1, d);
        b.ln2_g = slot(1, d);
        b.ln2_b = slot(1, d);
        b.w1 = slot(d, 4 * d);
        b.b1 = slot(1, 4 * d);
        b.w2 = slot(4 * d, d);
        b.b2 = slot(1, d);
        blocks.push_back(b);
    }
    lnf_g = slot(1, d);
    lnf_b = slot(1, d);
    head_w = slot(d, vocab_size);
    head_b = slot(1, vocab_size);
    total = off;
}

TransformerWeights::TransformerWeights(const TinyTransformerConfig& cfg, int vocab)
    : config(cfg), vocab_size(vocab), params(ModelLayout(cfg, vocab).total, 0.0f)
{
}

TransformerWeights init_weights(const TinyTransformerConfig& config, int vocab_size)
{
    config.validate();
    TransformerWeights w(config, vocab_size);
    const ModelLayout L = w.layout();
    Rng rng(mix_seed(config.seed, "init"));
    auto normal = [&](const ParamSlot& s, double std) {
        for (std::size_t i = 0; i < s.size(); ++i)
            w.params[s.offset + i] = static_cast<float>(std * standard_normal(rng));
    };
    auto fill = [&](const ParamSlot& s, float v) { std::fill_n(w.params.begin() + static_cast<long>(s.offset), s.size(), v); };
    const double resid_std = 0.02 / std::sqrt(2.0 * config.layers);
    normal(L.tok_emb, 0.02);
    normal(L.pos_emb, 0.02);
    for (const auto& b : L.blocks) {
        fill(b.ln1_g, 1.0f);
        normal(b.wqkv, 0.02);
        normal(b.wo, resid_std);
        fill(b.ln2_g, 1.0f);
        normal(b.w1, 0.02);
        normal(b.w2, resid_std);
    }
    fill(L.lnf_g, 1.0f);
    normal(L.head_w, 0.02);
    return w;
}

std::vector<TokenId> training_sequence(const Problem& problem, int max_steps)
{
    const std::string text = render_prompt(problem, max_steps) + problem.gold_trace.substr(kThinkOpen.size());
    return default_vocabulary().encode(text);
}

SequenceForward forward_sequence(const TransformerWeights& weights, std::span<const TokenId> tokens)
{
    if (tokens.empty() || tokens.size() > static_cast<std::size_t>(weights.config.context))
        throw InvalidArgument("forward_sequence: sequence length outside [1, context]");
    const ModelLayout L = weights.layout();
    SequenceForward out;
    const MatF fn = forward_full(weights, L, tokens, nullptr, &out.site);
    out.logits = (fn * cmat(weights.params, L.head_w)).rowwise() + crow(weights.params, L.head_b);
    return out;
}

SequenceLoss sequence_loss(const TransformerWeights& weights, std::span<const TokenId> tokens, std::size_t prompt_len,
                           std::vector<float>* grad, float grad_scale)
{
    if (tokens.size() < 2 || tokens.size() > static_cast<std::size_t>(weights.config.context))
        throw InvalidArgument("sequence_loss: sequence length outside [2, context]");
    if (prompt_len < 1 || prompt_len >= tokens.size()) throw InvalidArgument("sequence_loss: bad prompt length");
    const ModelLayout L = weights.layout();
    ForwardCache cache;
    const MatF fn = forward_full(weights, L, tokens, grad ? &cache : nullptr, nullptr);
    const MatF logits = (fn * cmat(weights.params, L.head_w)).rowwise() + crow(weights.params, L.head_b);

    SequenceLoss loss;
    MatF dlogits;
    if (grad) dlogits = MatF::Zero(logits.rows(), logits.cols());
    const Eigen::Index t = logits.rows();
    for (Eigen::Index i = static_cast<Eigen::Index>(prompt_len) - 1; i < t - 1; ++i) {
        const TokenId target = tokens[static_cast<std::size_t>(i + 1)];
        const float m = logits.row(i).maxCoeff();
        const RowF e = (logits.row(i).array() - m).exp();
        const float z = e.sum();
        loss.sum += static_cast<double>(std::log(z) + m - logits(i, target));
        ++loss.count;
        if (grad) {
            dlogits.row(i) = e / z * grad_scale;
            dlogits(i, target) -= grad_scale;
        }
    }
    if (grad) {
        cache.fn = fn;
        backward_full(weights, L, tokens, cache, dlogits, *grad);
    }
    return loss;
}

double evaluate_loss(const TransformerWeights& weights, std::span<const Problem> problems)
{
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : problems) {
        const auto seq = training_sequence(p, weights.config.max_steps);
        const auto l = sequence_loss(weights, seq, prompt_length(p, weights.config.max_steps));
        sum += l.sum;
        count += l.count;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

TransformerWeights train_tiny_transformer(std::span<const Problem> corpus, const TinyTransformerConfig& config,
                                          TrainReport* report, const TrainProgress& progress)
{
    if (corpus.empty()) throw InvalidArgument("train_tiny_transformer: empty corpus");
    config.validate();
#if defined(__GLIBC__)
    // Activation buffers sit just above glibc's mmap threshold; serving them
    // from the heap avoids a page-fault storm on every step.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    const auto& vocab = default_vocabulary();
    TransformerWeights w = init_weights(config, vocab.size());

    std::vector<std::vector<TokenId>> sequences;
    std::vector<std::size_t> prompts;
    sequences.reserve(corpus.size());
    for (const auto& p : corpus) {
        sequences.push_back(training_sequence(p, config.max_steps));
        prompts.push_back(prompt_length(p, config.max_steps));
        if (sequences.back().size() > static_cast<std::size_t>(config.context))
            throw ConfigError("train_tiny_transformer: training sequence longer than context");
    }

    const std::size_t probe = std::min<std::size_t>(64, corpus.size());
    if (report) report->initial_loss = evaluate_loss(w, corpus.first(probe));

    const std::size_t n = w.params.size();
    std::vector<float> grad(n), m(n, 0.0f), v(n, 0.0f);
    constexpr float beta1 = 0.9f, beta2 = 0.98f, eps = 1e-8f;
    Rng rng(mix_seed(config.seed, "batches"));
    double window = 0.0;
    int window_count = 0;

    for (int step = 0; step < config.train_steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0f);
        std::vector<std::size_t> batch(static_cast<std::size_t>(config.batch_size));
        std::size_t scored = 0;
        for (auto& idx : batch) {
            idx = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(corpus.size()) - 1));
            scored += sequences[idx].size() - prompts[idx];
        }
        const float scale = 1.0f / static_cast<float>(scored);
        double batch_loss = 0.0;
        for (auto idx : batch) batch_loss += sequence_loss(w, sequences[idx], prompts[idx], &grad, scale).sum;
        batch_loss /= static_cast<double>(scored);

        double norm_sq = 0.0;
        for (float gi : grad) norm_sq += static_cast<double>(gi) * gi;
        const double norm = std::sqrt(norm_sq);
        const float clip = norm > config.grad_clip ? static_cast<float>(config.grad_clip / norm) : 1.0f;

        // linear warmup, cosine decay to a tenth of the peak
        double lr = config.learning_rate;
        if (step < config.warmup_steps) {
            lr *= static_cast<double>(step + 1) / config.warmup_steps;
        } else {
            const double span = std::max(1, config.train_steps - config.warmup_steps);
            const double frac = (step - config.warmup_steps) / span;
            lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.141592653589793 * frac));
        }
        const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step + 1));
        const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step + 1));
        const float step_size = static_cast<float>(lr) / bc1;
        for (std::size_t i = 0; i < n; ++i) {
            const float gi = grad[i] * clip;
            m[i] = beta1 * m[i] + (1.0f - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0f - beta2) * gi * gi;
            w.params[i] -= step_size * m[i] / (std::sqrt(v[i] / bc2) + eps);
        }

        window += batch_loss;
        ++window_count;
        if ((step + 1) % 50 == 0 || step + 1 == config.train_steps) {
            const double mean = window / window_count;
            if (report) report->loss_curve.push_back(mean);
            if (progress) progress(step + 1, mean);
            window = 0.0;
            window_count = 0;
        }
    }
    if (report) report->final_loss = evaluate_loss(w, corpus.first(probe));
    return w;
}

std::string config_to_json(const TinyTransformerConfig& c)
{
    nlohmann::ordered_json j;
    j["layers"] = c.layers;
    j["heads"] = c.heads;
    j["width"] = c.width;
    j["context"] = c.context;
    j["train_steps"] = c.train_steps;
    j["batch_size"] = c.batch_size;
    j["warmup_steps"] = c.warmup_steps;
    j["learning_rate"] = c.learning_rate;
    j["grad_clip"] = c.grad_clip;
    j["seed"] = c.seed;
    j["max_steps"] = c.max_steps;
    j["site"] = c.site.to_string();
    return j.dump();
}

TinyTransformerConfig config_from_json(const std::string& text)
{
    const auto j = nlohmann::json::parse(text);
    TinyTransformerConfig c;
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.width = j.at("width");
    c.context = j.at("context");
    c.train_steps = j.at("train_steps");
    c.batch_size = j.at("batch_size");
    c.warmup_steps = j.at("warmup_steps");
    c.learning_rate = j.at("learning_rate");
    c.grad_clip = j.at("grad_clip");
    c.seed = j.at("seed");
    c.max_steps = j.at("max_steps");
    c.site = InterventionSite::parse(j.at("site").get<std::string>());
    return c;
}

void save_weights(const TransformerWeights& weights, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot write " + path.string());
    const std::string cfg = config_to_json(weights.config);
    auto put32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
    os.write(kMagic, sizeof kMagic);
    put32(kCheckpointVersion);
    put32(static_cast<std::uint32_t>(weights.vocab_size));
    put32(static_cast<std::uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const std::uint64_t count = weights.params.size();
    os.write(reinterpret_cast<const char*>(&count), sizeof count);
    os.write(reinterpret_cast<const char*>(weights.params.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!os) throw InvalidArgument("short write to " + path.string());
}

TransformerWeights load_weights(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("cannot read " + path.string());
    char magic[sizeof kMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw InvalidArgument("checkpoint: bad magic");
    auto get32 = [&] {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    };
    const auto version = get32();
    if (version != kCheckpointVersion) throw InvalidArgument("checkpoint: unsupported version");
    const auto vocab = static_cast<int>(get32());
    const auto cfg_len = get32();
    std::string cfg(cfg_len, '\0');
    is.read(cfg.data(), cfg_len);
    if (!is) throw InvalidArgument("checkpoint: truncated header");
    TinyTransformerConfig config = config_from_json(cfg);
    config.validate();
    if (vocab != default_vocabulary().size()) throw InvalidArgument("checkpoint: vocabulary size mismatch");
    TransformerWeights w(config, vocab);
    std::uint64_t count = 0;
    is.read(reinterpret_cast<char*>(&count), sizeof count);
    if (count != w.params.size()) throw InvalidArgument("checkpoint: parameter count does not match config");
    is.read(reinterpret_cast<char*>(w.params.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw InvalidArgument("checkpoint: truncated parameter block");
    return w;
}

// ---------------------------------------------------------------------------
// incremental inference

TinyTransformerBackend::TinyTransformerBackend(std::shared_ptr<const TransformerWeights> weights)
    : weights_(std::move(weights)), layout_(weights_->config, weights_->vocab_size)
{
    weights_->config.validate();
    if (weights_->vocab_size != vocab().size()) throw InvalidArgument("tiny_transformer: vocabulary size mismatch");
    const auto& c = weights_->config;
    keys_.assign(static_cast<std::size_t>(c.layers), MatF::Zero(c.context, c.width));
    values_ = keys_;
}

std::unique_ptr<Backend> TinyTransformerBackend::clone() const
{
    return std::make_unique<TinyTransformerBackend>(weights_);
}

void TinyTransformerBackend::on_reset(std::uint64_t)
{
    cached_.clear();
}

Eigen::RowVectorXf TinyTransformerBackend::embed(TokenId token, std::size_t pos) const
{
    const auto& p = weights_->params;
    return cmat(p, layout_.tok_emb).row(token) + cmat(p, layout_.pos_emb).row(static_cast<Eigen::Index>(pos));
}

Eigen::RowVectorXf TinyTransformerBackend::run_blocks(Eigen::RowVectorXf x, std::size_t pos, int first, int end)
{
    const auto& p = weights_->params;
    const auto& cfg = weights_->config;
    const int d = cfg.width;
    const int hd = d / cfg.heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    const auto n = static_cast<Eigen::Index>(pos) + 1;
    for (int b = first; b < end; ++b) {
        const auto& s = layout_.blocks[static_cast<std::size_t>(b)];
        auto& keys = keys_[static_cast<std::size_t>(b)];
        auto& values = values_[static_cast<std::size_t>(b)];
        const RowF xn = layer_norm_row(x, crow(p, s.ln1_g), crow(p, s.ln1_b));
        const RowF qkv = xn * cmat(p, s.wqkv) + crow(p, s.bqkv);
        keys.row(static_cast<Eigen::Index>(pos)) = qkv.segment(d, d);
        values.row(static_cast<Eigen::Index>(pos)) = qkv.segment(2 * d, d);
        RowF attn(d);
        for (int h = 0; h < cfg.heads; ++h) {
            const auto q = qkv.segment(h * hd, hd);
            Eigen::VectorXf sc = keys.block(0, h * hd, n, hd) * q.transpose() * scale;
            sc = (sc.array() - sc.maxCoeff()).exp();
            sc /= sc.sum();
            attn.segment(h * hd, hd) = sc.transpose() * values.block(0, h * hd, n, hd);
        }
        x += attn * cmat(p, s.wo) + crow(p, s.bo);
        const RowF yn = layer_norm_row(x, crow(p, s.ln2_g), crow(p, s.ln2_b));
        const RowF pre = yn * cmat(p, s.w1) + crow(p, s.b1);
        const RowF act = gelu(pre.array()).matrix();
        x += act * cmat(p, s.w2) + crow(p, s.b2);
    }
    return x;
}

BackendStepOutput TinyTransformerBackend::step(std::span<const TokenId> context)
{
    check_context(context);
    const auto& p = weights_->params;
    const auto& cfg = weights_->config;

    // reuse the cache only when the context extends what was already processed
    std::size_t start = cached_.size();
    if (start >= context.size() || !std::equal(cached_.begin(), cached_.end(), context.begin())) {
        cached_.clear();
        start = 0;
    }
    for (std::size_t i = start; i + 1 < context.size(); ++i) {
        run_blocks(embed(context[i], i), i, 0, cfg.layers);
        cached_.push_back(context[i]);
    }

    const auto steering = take_steering();
    const RowF delta = steering ? RowF(steering->cast<float>().transpose()) : RowF();
    const std::size_t last = context.size() - 1;
    const auto lnf_g = crow(p, layout_.lnf_g);
    const auto lnf_b = crow(p, layout_.lnf_b);
    const auto head_w = cmat(p, layout_.head_w);
    const auto head_b = crow(p, layout_.head_b);

    RowF site, logits, emitted;
    if (cfg.site.kind == InterventionSite::Kind::Block) {
        const int split = cfg.site.block + 1;
        site = run_blocks(embed(context[last], last), last, 0, split);
        // the unsteered pass runs first; a steered pass then overwrites this
        // position's cache rows so later positions attend to the steered state
        logits = layer_norm_row(run_blocks(site, last, split, cfg.layers), lnf_g, lnf_b) * head_w + head_b;
        emitted = steering ? RowF(layer_norm_row(run_blocks(site + delta, last, split, cfg.layers), lnf_g, lnf_b) *
                                      head_w +
                                  head_b)
                           : logits;
    } else {
        site = layer_norm_row(run_blocks(embed(context[last], last), last, 0, cfg.layers), lnf_g, lnf_b);
        logits = site * head_w + head_b;
        emitted = steering ? RowF((site + delta) * head_w + head_b) : logits;
    }
    cached_.push_back(context[last]);

    BackendStepOutput out;
    out.hidden = site.transpose().cast<double>();
    out.logits = logits.transpose().cast<double>();
    out.emitted_logits = emitted.transpose().cast<double>();
    out.token = greedy_token(out.emitted_logits);
    out.is_end = out.token == vocab().end();
    return out;
}

}  // namespace aoc

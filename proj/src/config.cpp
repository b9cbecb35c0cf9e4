#include "aoc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace aoc {

namespace {

using nlohmann::json;

// Reads a section while rejecting keys the schema does not know.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key)
    {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const
    {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ConfigError(name_ + ": unknown key '" + key + "'");
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

std::string qualified(const std::string& section, const std::string& what)
{
    return section + ": " + what;
}

void require(bool ok, const std::string& message)
{
    if (!ok) throw ConfigError(message);
}

std::size_t prompt_tokens(int max_steps)
{
    Problem probe;
    probe.question = "1+1";
    return default_vocabulary().encode(render_prompt(probe, max_steps)).size();
}

}  // namespace

std::string_view to_string(BackendType t)
{
    return t == BackendType::Synthetic ? "synthetic" : "tiny_transformer";
}

BackendType backend_type_from_string(std::string_view s)
{
    if (s == "tiny_transformer") return BackendType::TinyTransformer;
    if (s == "synthetic") return BackendType::Synthetic;
    throw ConfigError("backend.type: unknown backend '" + std::string(s) + "'");
}

AlphaScheduleConfig ScheduleSection::scaled() const
{
    AlphaScheduleConfig c = nominal;
    c.alpha_static *= alpha_scale;
    c.alpha_base *= alpha_scale;
    c.alpha_max *= alpha_scale;
    c.delta *= alpha_scale;
    c.alpha_high *= alpha_scale;
    c.alpha_mid *= alpha_scale;
    c.alpha_low *= alpha_scale;
    return c;
}

void ExperimentConfig::resolve()
{
    corpus.seed = seed;
    auto& tt = backend.tiny_transformer;
    tt.seed = mix_seed(seed, "backend");
    tt.max_steps = corpus.max_steps;
    try {
        tt.site = InterventionSite::parse(tpv.site);
    } catch (const ConfigError&) {
        // reported by validate()
    }
}

std::vector<std::uint64_t> ExperimentConfig::eval_seeds() const
{
    if (harness.seeds.empty()) return {seed};
    return harness.seeds;
}

void ExperimentConfig::validate() const
{
    require(!output_dir.empty(), "output_dir: must not be empty");
    try {
        corpus.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }

    // site syntax first, so the backend checks below see a parsed value
    const InterventionSite site = InterventionSite::parse(tpv.site);
    require(std::isfinite(tpv.ridge_lambda) && tpv.ridge_lambda >= 0.0,
            qualified("tpv", "ridge_lambda must be finite and >= 0"));
    require(tpv.fit_budget >= 0, qualified("tpv", "fit_budget must be >= 0"));

    const std::size_t prompt = prompt_tokens(corpus.max_steps);
    if (backend.type == BackendType::TinyTransformer) {
        backend.tiny_transformer.validate();
        require(backend.train_size >= 1, qualified("backend", "train_size must be positive"));
        if (site.kind == InterventionSite::Kind::Block)
            require(site.block < backend.tiny_transformer.layers,
                    qualified("tpv", "site block index exceeds the transformer depth"));
        const auto ctx = static_cast<std::size_t>(backend.tiny_transformer.context);
        for (int b : harness.budgets)
            require(b < 1 || prompt + static_cast<std::size_t>(b) <= ctx,
                    qualified("harness", "prompt plus budget " + std::to_string(b) + " exceeds the transformer context"));
        require(tpv.fit_budget == 0 || prompt + static_cast<std::size_t>(tpv.fit_budget) <= ctx,
                qualified("tpv", "prompt plus fit_budget exceeds the transformer context"));
        // longest possible gold sequence must fit for training
        const std::size_t longest = prompt + static_cast<std::size_t>(corpus.max_steps) * 8 +
                                    static_cast<std::size_t>(corpus.tail_max) * 5 + 6;
        require(longest <= ctx, qualified("backend", "context too short for the longest corpus trace"));
    } else {
        const auto& s = backend.synthetic;
        require(s.dim >= 1, qualified("backend.synthetic", "dim must be positive"));
        require(s.step_increment > 0.0 && s.step_increment < 1.0,
                qualified("backend.synthetic", "step_increment must lie in (0, 1)"));
        require(std::isfinite(s.noise_sigma_rel) && s.noise_sigma_rel >= 0.0,
                qualified("backend.synthetic", "noise_sigma_rel must be >= 0"));
        require(s.initial_progress >= 0.0 && s.initial_progress < 1.0,
                qualified("backend.synthetic", "initial_progress must lie in [0, 1)"));
        require(s.logit_sharpness > 0.0, qualified("backend.synthetic", "logit_sharpness must be positive"));
        require(s.context_limit > prompt, qualified("backend.synthetic", "context_limit shorter than the prompt"));
        require(site.kind == InterventionSite::Kind::Final,
                qualified("tpv", "the synthetic backend exposes only the final site"));
        for (int b : harness.budgets)
            require(b < 1 || prompt + static_cast<std::size_t>(b) <= s.context_limit,
                    qualified("harness", "prompt plus budget exceeds the synthetic context"));
    }

    require(std::isfinite(schedule.alpha_scale) && schedule.alpha_scale > 0.0,
            qualified("schedule", "alpha_scale must be positive"));
    require(!schedule.alpha_static.empty(), qualified("schedule", "alpha_static must list at least one strength"));
    for (double a : schedule.alpha_static)
        require(std::isfinite(a) && a >= 0.0, qualified("schedule", "alpha_static entries must be >= 0"));
    for (std::size_t i = 0; i < schedule.calibration_scales.size(); ++i) {
        const double v = schedule.calibration_scales[i];
        require(std::isfinite(v) && v > 0.0, qualified("schedule", "calibration_scales must be positive"));
        require(i == 0 || v > schedule.calibration_scales[i - 1],
                qualified("schedule", "calibration_scales must be strictly increasing"));
    }
    require(schedule.calibration_size >= 1, qualified("schedule", "calibration_size must be positive"));
    try {
        schedule.nominal.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    try {
        router.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }

    require(!harness.budgets.empty(), qualified("harness", "budgets must not be empty"));
    for (std::size_t i = 0; i < harness.budgets.size(); ++i) {
        require(harness.budgets[i] >= 1, qualified("harness", "budgets must be >= 1"));
        require(i == 0 || harness.budgets[i] > harness.budgets[i - 1],
                qualified("harness", "budgets must be strictly increasing"));
    }
    std::set<std::uint64_t> unique(harness.seeds.begin(), harness.seeds.end());
    require(unique.size() == harness.seeds.size(), qualified("harness", "seeds must be distinct"));
    require(harness.threads >= 1, qualified("harness", "threads must be >= 1"));
}

ExperimentConfig config_from_json_text(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    ExperimentConfig c;
    Section top(root, "config");
    top.get("seed", c.seed);
    std::string out = c.output_dir.string();
    top.get("output_dir", out);
    c.output_dir = out;

    if (const json* j = top.child("corpus")) {
        Section s(*j, "corpus");
        s.get("size", c.corpus.size);
        s.get("fit_fraction", c.corpus.fit_fraction);
        s.get("min_steps", c.corpus.min_steps);
        s.get("max_steps", c.corpus.max_steps);
        s.get("operand_max", c.corpus.operand_max);
        s.get("value_max", c.corpus.value_max);
        s.get("tail_min", c.corpus.tail_min);
        s.get("tail_max", c.corpus.tail_max);
        s.get("t1", c.corpus.t1);
        s.get("t2", c.corpus.t2);
        s.finish();
    }
    if (const json* j = top.child("backend")) {
        Section s(*j, "backend");
        std::string type(to_string(c.backend.type));
        s.get("type", type);
        c.backend.type = backend_type_from_string(type);
        s.get("train_size", c.backend.train_size);
        if (const json* t = s.child("tiny_transformer")) {
            Section ts(*t, "backend.tiny_transformer");
            auto& tt = c.backend.tiny_transformer;
            ts.get("layers", tt.layers);
            ts.get("heads", tt.heads);
            ts.get("width", tt.width);
            ts.get("context", tt.context);
            ts.get("train_steps", tt.train_steps);
            ts.get("batch_size", tt.batch_size);
            ts.get("warmup_steps", tt.warmup_steps);
            ts.get("learning_rate", tt.learning_rate);
            ts.get("grad_clip", tt.grad_clip);
            ts.finish();
        }
        if (const json* t = s.child("synthetic")) {
            Section ss(*t, "backend.synthetic");
            auto& sy = c.backend.synthetic;
            ss.get("dim", sy.dim);
            ss.get("step_increment", sy.step_increment);
            ss.get("noise_sigma_rel", sy.noise_sigma_rel);
            ss.get("initial_progress", sy.initial_progress);
            ss.get("logit_sharpness", sy.logit_sharpness);
            ss.get("context_limit", sy.context_limit);
            ss.finish();
        }
        s.finish();
    }
    if (const json* j = top.child("tpv")) {
        Section s(*j, "tpv");
        s.get("ridge_lambda", c.tpv.ridge_lambda);
        s.get("site", c.tpv.site);
        s.get("fit_budget", c.tpv.fit_budget);
        s.finish();
    }
    if (const json* j = top.child("schedule")) {
        Section s(*j, "schedule");
        auto& p = c.schedule.nominal;
        std::string mode(to_string(p.mode));
        s.get("mode", mode);
        try {
            p.mode = schedule_mode_from_string(mode);
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("schedule.mode: ") + e.what());
        }
        s.get("alpha_static", c.schedule.alpha_static);
        s.get("alpha_scale", c.schedule.alpha_scale);
        s.get("calibration_scales", c.schedule.calibration_scales);
        s.get("calibration_size", c.schedule.calibration_size);
        s.get("alpha_base", p.alpha_base);
        s.get("alpha_max", p.alpha_max);
        s.get("u_thr", p.u_thr);
        s.get("k", p.k);
        s.get("delta", p.delta);
        s.get("alpha_high", p.alpha_high);
        s.get("alpha_mid", p.alpha_mid);
        s.get("alpha_low", p.alpha_low);
        s.finish();
        // the single-strength field tracks the first static baseline
        if (!c.schedule.alpha_static.empty()) p.alpha_static = c.schedule.alpha_static.front();
    }
    if (const json* j = top.child("router")) {
        Section s(*j, "router");
        std::string source(to_string(c.router.source));
        s.get("source", source);
        try {
            c.router.source = router_source_from_string(source);
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("router.source: ") + e.what());
        }
        s.get("t1", c.router.t1);
        s.get("t2", c.router.t2);
        s.finish();
    }
    if (const json* j = top.child("harness")) {
        Section s(*j, "harness");
        s.get("budgets", c.harness.budgets);
        s.get("seeds", c.harness.seeds);
        s.get("threads", c.harness.threads);
        s.get("dump_traces", c.harness.dump_traces);
        s.finish();
    }
    top.finish();
    c.resolve();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides)
{
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.output_dir) config.output_dir = *overrides.output_dir;
    config.resolve();
    config.validate();
}

std::string config_to_json_text(const ExperimentConfig& c)
{
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir.string();
    auto& co = j["corpus"];
    co["size"] = c.corpus.size;
    co["fit_fraction"] = c.corpus.fit_fraction;
    co["min_steps"] = c.corpus.min_steps;
    co["max_steps"] = c.corpus.max_steps;
    co["operand_max"] = c.corpus.operand_max;
    co["value_max"] = c.corpus.value_max;
    co["tail_min"] = c.corpus.tail_min;
    co["tail_max"] = c.corpus.tail_max;
    co["t1"] = c.corpus.t1;
    co["t2"] = c.corpus.t2;
    auto& b = j["backend"];
    b["type"] = std::string(to_string(c.backend.type));
    b["train_size"] = c.backend.train_size;
    const auto& tt = c.backend.tiny_transformer;
    b["tiny_transformer"] = {{"layers", tt.layers},           {"heads", tt.heads},
                             {"width", tt.width},             {"context", tt.context},
                             {"train_steps", tt.train_steps}, {"batch_size", tt.batch_size},
                             {"warmup_steps", tt.warmup_steps}, {"learning_rate", tt.learning_rate},
                             {"grad_clip", tt.grad_clip}};
    const auto& sy = c.backend.synthetic;
    b["synthetic"] = {{"dim", sy.dim},
                      {"step_increment", sy.step_increment},
                      {"noise_sigma_rel", sy.noise_sigma_rel},
                      {"initial_progress", sy.initial_progress},
                      {"logit_sharpness", sy.logit_sharpness},
                      {"context_limit", sy.context_limit}};
    j["tpv"] = {{"ridge_lambda", c.tpv.ridge_lambda}, {"site", c.tpv.site}, {"fit_budget", c.tpv.fit_budget}};
    const auto& p = c.schedule.nominal;
    auto& s = j["schedule"];
    s["mode"] = std::string(to_string(p.mode));
    s["alpha_static"] = c.schedule.alpha_static;
    s["alpha_scale"] = c.schedule.alpha_scale;
    s["calibration_scales"] = c.schedule.calibration_scales;
    s["calibration_size"] = c.schedule.calibration_size;
    s["alpha_base"] = p.alpha_base;
    s["alpha_max"] = p.alpha_max;
    s["u_thr"] = p.u_thr;
    s["k"] = p.k;
    s["delta"] = p.delta;
    s["alpha_high"] = p.alpha_high;
    s["alpha_mid"] = p.alpha_mid;
    s["alpha_low"] = p.alpha_low;
    j["router"] = {{"source", std::string(to_string(c.router.source))}, {"t1", c.router.t1}, {"t2", c.router.t2}};
    j["harness"] = {{"budgets", c.harness.budgets},
                    {"seeds", c.harness.seeds},
                    {"threads", c.harness.threads},
                    {"dump_traces", c.harness.dump_traces}};
    return j.dump(2) + "\n";
}

}  // namespace aoc

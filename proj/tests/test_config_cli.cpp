#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "aoc/config.hpp"
#include "aoc/pipeline.hpp"
#include "support.hpp"

using namespace aoc;
using nlohmann::json;

namespace {

std::string default_text()
{
    return aoc_test::slurp(std::string(AOC_SOURCE_DIR) + "/configs/default.json");
}

// Default document with one field replaced.
std::string with(const std::string& section, const std::string& key, const json& value)
{
    json j = json::parse(default_text());
    if (section.empty())
        j[key] = value;
    else
        j[section][key] = value;
    return j.dump();
}

json synthetic_doc(const std::filesystem::path& out)
{
    json j;
    j["seed"] = 4;
    j["output_dir"] = out.string();
    j["corpus"] = {{"size", 60}, {"fit_fraction", 0.25}};
    j["backend"] = {{"type", "synthetic"},
                    {"synthetic", {{"dim", 16}, {"step_increment", 0.05}, {"noise_sigma_rel", 0.0}}}};
    j["schedule"] = {{"alpha_scale", 0.02}};
    j["harness"] = {{"budgets", {16, 32, 64}}};
    return j;
}

std::filesystem::path write_config(const std::filesystem::path& dir, const json& j)
{
    const auto p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

// Runs the CLI quietly and returns its exit status.
int run_cli(const std::string& args)
{
    const std::string cmd = "AOC_LOG_LEVEL=off \"" + std::string(AOC_CLI_PATH) + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("shipped configs parse and validate")
{
    const auto c = config_from_json_text(default_text());
    CHECK(c.backend.type == BackendType::TinyTransformer);
    CHECK(c.harness.budgets == std::vector<int>{64, 128, 256});
    CHECK(c.schedule.alpha_static == std::vector<double>{50, 100});
    CHECK(c.eval_seeds() == std::vector<std::uint64_t>{1});
    const auto s = load_config(std::string(AOC_SOURCE_DIR) + "/configs/synthetic.json");
    CHECK(s.backend.type == BackendType::Synthetic);
    // serialized form parses back to the same document
    CHECK(config_to_json_text(config_from_json_text(config_to_json_text(c))) == config_to_json_text(c));
}

TEST_CASE("schedule strengths are scaled together")
{
    auto c = config_from_json_text(with("schedule", "alpha_scale", 0.5));
    const auto s = c.schedule.scaled();
    CHECK(s.alpha_mid == doctest::Approx(15.0));
    CHECK(s.delta == doctest::Approx(20.0));
    CHECK(s.alpha_base == doctest::Approx(5.0));
    CHECK(s.u_thr == doctest::Approx(0.5));
    CHECK(s.k == doctest::Approx(10.0));
}

TEST_CASE("invalid fields are rejected")
{
    const std::vector<std::tuple<std::string, std::string, json>> bad = {
        {"", "output_dir", ""},
        {"", "unknown_top", 1},
        {"", "seed", "one"},
        {"corpus", "size", 0},
        {"corpus", "fit_fraction", 1.0},
        {"corpus", "max_steps", 0},
        {"corpus", "t1", 9},
        {"corpus", "colour", "red"},
        {"backend", "type", "gpt"},
        {"backend", "train_size", 0},
        {"tpv", "ridge_lambda", -1.0},
        {"tpv", "site", "block:7"},
        {"tpv", "site", "middle"},
        {"tpv", "fit_budget", -3},
        {"tpv", "fit_budget", 1000},
        {"schedule", "alpha_scale", 0.0},
        {"schedule", "alpha_static", json::array()},
        {"schedule", "alpha_static", {50, -1}},
        {"schedule", "mode", "turbo"},
        {"schedule", "alpha_base", 60},
        {"schedule", "u_thr", 1.5},
        {"schedule", "k", 0},
        {"schedule", "delta", -1},
        {"schedule", "calibration_scales", {0.5, 0.2}},
        {"schedule", "calibration_scales", {0.0, 0.2}},
        {"schedule", "calibration_size", 0},
        {"router", "source", "coin"},
        {"router", "t1", 6},
        {"harness", "budgets", json::array()},
        {"harness", "budgets", {128, 64}},
        {"harness", "budgets", {64, 64}},
        {"harness", "budgets", {0, 64}},
        {"harness", "budgets", {64, 1000}},
        {"harness", "seeds", {1, 1}},
        {"harness", "threads", 0},
    };
    for (const auto& [section, key, value] : bad) {
        CAPTURE(section);
        CAPTURE(key);
        CHECK_THROWS_AS(config_from_json_text(with(section, key, value)), ConfigError);
    }
    CHECK_THROWS_AS(config_from_json_text("{not json"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("[]"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

    json j = json::parse(default_text());
    j["backend"]["tiny_transformer"]["width"] = 30;  // not divisible by 4 heads
    CHECK_THROWS_AS(config_from_json_text(j.dump()), ConfigError);
    j = json::parse(default_text());
    j["backend"]["tiny_transformer"]["context"] = 100;  // shorter than the longest trace
    CHECK_THROWS_AS(config_from_json_text(j.dump()), ConfigError);
    j = json::parse(default_text());
    j["backend"]["tiny_transformer"]["dropout"] = 0.1;
    CHECK_THROWS_AS(config_from_json_text(j.dump()), ConfigError);
    j = synthetic_doc("x");
    j["tpv"] = {{"site", "block:0"}};
    CHECK_THROWS_AS(config_from_json_text(j.dump()), ConfigError);
    j = synthetic_doc("x");
    j["backend"]["synthetic"]["step_increment"] = 1.5;
    CHECK_THROWS_AS(config_from_json_text(j.dump()), ConfigError);
}

TEST_CASE("overrides re-resolve the seed")
{
    auto c = config_from_json_text(default_text());
    const auto backend_seed = c.backend.tiny_transformer.seed;
    ConfigOverrides o;
    o.seed = 9;
    o.output_dir = "elsewhere";
    apply_overrides(c, o);
    CHECK(c.seed == 9);
    CHECK(c.corpus.seed == 9);
    CHECK(c.output_dir == "elsewhere");
    CHECK(c.backend.tiny_transformer.seed != backend_seed);
    CHECK(c.eval_seeds() == std::vector<std::uint64_t>{9});
}

TEST_CASE("cli exit codes")
{
    const auto dir = aoc_test::scratch_dir("cli");
    const auto cfg = write_config(dir, synthetic_doc(dir / "run"));
    const std::string base = "--config \"" + cfg.string() + "\"";

    CHECK(run_cli("") == 2);
    CHECK(run_cli("launch") == 2);
    CHECK(run_cli("corpus-gen --bogus") == 2);
    CHECK(run_cli("corpus-gen --config /nonexistent.json") == 2);
    CHECK(run_cli("eval " + base) == 2);  // nothing produced yet
    CHECK(run_cli("--help") == 0);

    CHECK(run_cli("corpus-gen " + base) == 0);
    const auto first = aoc_test::slurp(dir / "run" / "corpus.jsonl");
    CHECK(run_cli("corpus-gen " + base) == 2);  // refuses to overwrite
    CHECK(run_cli("corpus-gen --overwrite " + base) == 0);
    CHECK(aoc_test::slurp(dir / "run" / "corpus.jsonl") == first);
    CHECK(run_cli("corpus-gen --overwrite --seed 5 " + base) == 0);
    CHECK(aoc_test::slurp(dir / "run" / "corpus.jsonl") != first);
    CHECK(run_cli("corpus-gen --overwrite " + base) == 0);

    CHECK(run_cli("backend-train " + base) == 0);
    CHECK(run_cli("fit-tpv " + base) == 0);
    CHECK(run_cli("eval " + base) == 0);
    CHECK(run_cli("ablate " + base) == 0);
    CHECK(run_cli("eval " + base) == 2);
    CHECK(std::filesystem::exists(dir / "run" / "results.md"));
    CHECK(std::filesystem::exists(dir / "run" / "ablation.csv"));

    // a transformer config without a checkpoint is a usage error
    CHECK(run_cli("fit-tpv --config \"" + std::string(AOC_SOURCE_DIR) + "/configs/default.json\" --out \"" +
                  (dir / "empty").string() + "\"") == 2);
}

TEST_CASE("synthetic pipeline recovers the planted direction")
{
    const auto dir = aoc_test::scratch_dir("pipeline");
    const auto c = config_from_json_text(synthetic_doc(dir).dump());
    cmd_corpus_gen(c, false);
    cmd_backend_train(c, false);
    const auto fit = cmd_fit_tpv(c, false);
    CHECK(fit.skipped == 0);
    CHECK(fit.trajectories == 15);
    // every trajectory has 20 think steps plus the closing step
    CHECK(fit.tpv.fit_meta.sample_count == 15 * 21);
    CHECK(fit.tpv.fit_meta.residual_rmse <= 1e-8);
    const auto planted = synthetic_config(c).planted_direction;
    CHECK(std::abs(fit.tpv.theta.normalized().dot(planted.normalized())) > 1 - 1e-9);

    const auto eval = cmd_eval(c, false);
    CHECK(eval.table.rows.size() == 4 * 3);
    const auto& base = eval.table.at("base", 64, 4);
    CHECK(base.correct == base.n);
    CHECK(base.mean_tokens > eval.table.at("hac", 64, 4).mean_tokens);
    CHECK(eval.table.at("static_a100", 64, 4).mean_tokens < eval.table.at("static_a50", 64, 4).mean_tokens);
    CHECK_THROWS_AS(cmd_eval(c, false), ConfigError);
    CHECK_NOTHROW(cmd_eval(c, true));
}

TEST_CASE("calibrated strength scale is chosen per backend and recorded")
{
    const auto dir = aoc_test::scratch_dir("calibration");
    auto doc = synthetic_doc(dir);
    doc["schedule"]["calibration_scales"] = {0.001, 0.02, 0.05};
    doc["schedule"]["calibration_size"] = 20;
    const auto c = config_from_json_text(doc.dump());
    CHECK_THROWS_AS(effective_config(c), ConfigError);  // nothing calibrated yet

    cmd_corpus_gen(c, false);
    const auto corpus = read_corpus(dir / artifact::kCorpus);
    const auto cal = calibration_problems(c, corpus);
    REQUIRE(cal.size() == 20);
    std::set<std::string> seen;
    for (const auto& p : corpus) seen.insert(p.question);
    for (const auto& p : training_corpus(c, corpus)) seen.insert(p.question);
    for (const auto& p : cal) CHECK(seen.count(p.question) == 0);

    cmd_fit_tpv(c, false);
    const auto report = json::parse(aoc_test::slurp(dir / artifact::kCalibration));
    REQUIRE(report["candidates"].size() == 3);
    CHECK(report["methods"] == json({"static_a50", "static_a100", "hac"}));
    // 20 think steps never fit in budget 16 unsteered; stronger scales finish more problems
    std::size_t best = 0;
    double best_scale = 0;
    for (const auto& p : report["candidates"])
        if (p["sum"].get<std::size_t>() > best) {
            best = p["sum"];
            best_scale = p["scale"];
        }
    CHECK(report["alpha_scale"].get<double>() == best_scale);
    CHECK(effective_config(c).schedule.alpha_scale == best_scale);

    cmd_eval(c, false);
    const auto recorded = config_from_json_text(aoc_test::slurp(dir / artifact::kResultsConfig));
    CHECK(recorded.schedule.alpha_scale == best_scale);
    CHECK(aoc_test::slurp(dir / artifact::kResultsMd).find("alpha scale") != std::string::npos);
}

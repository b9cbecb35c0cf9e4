#include "aoc/pipeline.hpp"

#include <fstream>
#include <set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "aoc/tiny_transformer.hpp"

namespace aoc {

namespace {

namespace fs = std::filesystem;

fs::path out_path(const ExperimentConfig& c, const char* name)
{
    return c.output_dir / name;
}

void ensure_writable(const ExperimentConfig& c, std::initializer_list<const char*> names, bool overwrite)
{
    std::error_code ec;
    fs::create_directories(c.output_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + c.output_dir.string() + ": " + ec.message());
    if (overwrite) return;
    for (const char* n : names)
        if (fs::exists(c.output_dir / n))
            throw ConfigError(out_path(c, n).string() + " exists; pass --overwrite to replace it");
}

void require_artifact(const fs::path& p, const char* produced_by)
{
    if (!fs::exists(p)) throw ConfigError("missing " + p.string() + " (run " + produced_by + " first)");
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + p.string());
    os << text;
}

CorpusSplit load_split(const ExperimentConfig& c)
{
    require_artifact(out_path(c, artifact::kCorpus), "corpus-gen");
    require_artifact(out_path(c, artifact::kSplit), "corpus-gen");
    const auto corpus = read_corpus(out_path(c, artifact::kCorpus));
    return read_split(corpus, out_path(c, artifact::kSplit));
}

Tpv load_fitted_tpv(const ExperimentConfig& c, const Backend& backend)
{
    require_artifact(out_path(c, artifact::kTpv), "fit-tpv");
    Tpv tpv = load_tpv(out_path(c, artifact::kTpv));
    if (tpv.hidden_width() != backend.hidden_width())
        throw ConfigError("TPV width " + std::to_string(tpv.hidden_width()) + " does not match backend width " +
                          std::to_string(backend.hidden_width()));
    if (tpv.backend_id != backend.id())
        throw ConfigError("TPV was fitted on backend '" + tpv.backend_id + "', config selects '" + backend.id() + "'");
    return tpv;
}

std::size_t prompt_len(const ExperimentConfig& c)
{
    Problem probe;
    probe.question = "1";
    return default_vocabulary().encode(render_prompt(probe, c.corpus.max_steps)).size();
}

HarnessOptions harness_options(const ExperimentConfig& c)
{
    HarnessOptions o;
    o.prompt_steps = c.corpus.max_steps;
    o.threads = c.harness.threads;
    return o;
}

void prepare_router_inputs(const ExperimentConfig& c, const Backend& backend, std::vector<Problem>& eval_set)
{
    if (c.router.source == RouterSource::BaselineLengthProxy)
        annotate_baseline_lengths(backend, eval_set, c.harness.budgets.back(), harness_options(c));
}

void write_evaluation(const ExperimentConfig& c, const EvaluationResult& r, std::span<const MethodSpec> roster,
                      const char* csv, const char* md, const char* traces, const std::string& title)
{
    const auto seeds = c.eval_seeds();
    write_text(out_path(c, csv), metrics_to_csv(r.table));
    std::string doc = "# " + title + "\n\nglobal seed " + std::to_string(c.seed) + ", backend " +
                      std::string(to_string(c.backend.type)) + ", alpha scale " +
                      nlohmann::json(c.schedule.alpha_scale).dump() + "\n\n";
    doc += metrics_to_markdown(r.table, roster, c.harness.budgets, seeds);
    write_text(out_path(c, md), doc);
    if (c.harness.dump_traces) {
        std::ofstream os(out_path(c, traces), std::ios::binary);
        for (const auto& rec : r.records) os << record_to_json_line(rec) << '\n';
    }
}

}  // namespace

ThinkTrajectory collect_think_trajectory(Backend& backend, const Problem& problem, int budget, std::uint64_t seed,
                                         int prompt_steps)
{
    const auto& vocab = backend.vocab();
    std::vector<TokenId> context = vocab.encode(render_prompt(problem, prompt_steps));
    backend.reset(mix_seed(seed, problem.id));
    ThinkTrajectory traj;
    for (int t = 0; t < budget; ++t) {
        const auto out = backend.step(context);
        traj.states.push_back(out.hidden);
        context.push_back(out.token);
        if (out.token == vocab.think_close()) {
            traj.closed = true;
            break;
        }
        if (out.is_end) break;
    }
    return traj;
}

FitResult collect_and_fit(Backend& backend, std::span<const Problem> fit_set, int budget, std::uint64_t seed,
                          double ridge_lambda, int prompt_steps)
{
    if (fit_set.empty()) throw InvalidArgument("collect_and_fit: no trajectories to fit");
    FitResult result;
    std::vector<ProgressSample> samples;
    for (const auto& p : fit_set) {
        const auto traj = collect_think_trajectory(backend, p, budget, seed, prompt_steps);
        if (!traj.closed || traj.states.empty()) {
            ++result.skipped;
            spdlog::warn("fit: {} did not close its think span within {} tokens; skipped", p.id, budget);
            continue;
        }
        const auto s = collect_samples(traj.states);
        samples.insert(samples.end(), s.begin(), s.end());
        ++result.trajectories;
    }
    if (samples.empty()) throw InvalidArgument("collect_and_fit: every think span was empty");
    result.tpv = fit_tpv(samples, ridge_lambda);
    result.tpv.backend_id = backend.id();
    result.tpv.seed = seed;
    return result;
}

SyntheticBackendConfig synthetic_config(const ExperimentConfig& c)
{
    const auto& s = c.backend.synthetic;
    auto sc = make_synthetic_config(s.dim, mix_seed(c.seed, "synthetic"), s.step_increment, s.noise_sigma_rel,
                                    s.initial_progress);
    sc.logit_sharpness = s.logit_sharpness;
    sc.context_limit = s.context_limit;
    return sc;
}

std::unique_ptr<Backend> open_backend(const ExperimentConfig& c)
{
    if (c.backend.type == BackendType::Synthetic) return std::make_unique<SyntheticBackend>(synthetic_config(c));
    const auto path = out_path(c, artifact::kWeights);
    require_artifact(path, "backend-train");
    auto weights = std::make_shared<TransformerWeights>(load_weights(path));
    // the checkpoint fixes the architecture; the site is a run-time choice
    const auto& want = c.backend.tiny_transformer;
    const auto& have = weights->config;
    if (have.layers != want.layers || have.heads != want.heads || have.width != want.width ||
        have.context != want.context || have.max_steps != want.max_steps)
        throw ConfigError("checkpoint architecture does not match the config");
    weights->config.site = want.site;
    weights->config.validate();
    return std::make_unique<TinyTransformerBackend>(std::move(weights));
}

namespace {

// Fresh problems from their own stream, skipping every excluded question.
std::vector<Problem> disjoint_problems(const ExperimentConfig& c, const std::set<std::string>& excluded,
                                       std::string_view salt, std::size_t count, const std::string& id_prefix)
{
    CorpusConfig tc = c.corpus;
    tc.seed = mix_seed(c.seed, salt);
    Rng rng(mix_seed(tc.seed, "steps"));
    std::vector<Problem> out;
    out.reserve(count);
    for (std::uint64_t i = 0; out.size() < count; ++i) {
        const int steps = static_cast<int>(uniform_int(rng, tc.min_steps, tc.max_steps));
        Problem p = generate_problem(mix_seed(tc.seed, i), steps, tc);
        if (i > 1000 * count) throw ConfigError(std::string(salt) + ": too few distinct questions");
        if (excluded.count(p.question)) continue;
        p.id = id_prefix + std::to_string(i);
        out.push_back(std::move(p));
    }
    return out;
}

std::set<std::string> questions_of(std::span<const Problem> problems)
{
    std::set<std::string> out;
    for (const auto& p : problems) out.insert(p.question);
    return out;
}

}  // namespace

std::vector<Problem> training_corpus(const ExperimentConfig& c, std::span<const Problem> corpus)
{
    return disjoint_problems(c, questions_of(corpus), "train-corpus", c.backend.train_size, "t");
}

std::vector<Problem> calibration_problems(const ExperimentConfig& c, std::span<const Problem> corpus)
{
    auto excluded = questions_of(corpus);
    excluded.merge(questions_of(training_corpus(c, corpus)));
    return disjoint_problems(c, excluded, "calibration-corpus", c.schedule.calibration_size, "c");
}

CalibrationResult calibrate_alpha_scale(const ExperimentConfig& c, const Backend& backend, const Tpv& tpv,
                                        std::span<const Problem> problems)
{
    if (!c.schedule.calibrated()) throw InvalidArgument("calibrate_alpha_scale: no candidate scales");
    std::vector<Problem> routed(problems.begin(), problems.end());
    prepare_router_inputs(c, backend, routed);
    const auto router = make_classifier(c.router);
    const std::vector<std::uint64_t> seeds = {c.seed};

    CalibrationResult result;
    std::size_t best = 0;
    for (double scale : c.schedule.calibration_scales) {
        ExperimentConfig trial = c;
        trial.schedule.alpha_scale = scale;
        auto roster = main_roster(trial.schedule.scaled(), trial.schedule.alpha_static, scale);
        roster.erase(std::remove_if(roster.begin(), roster.end(), [](const auto& m) { return !m.steering; }),
                     roster.end());
        const auto r = evaluate(backend, &tpv, roster, routed, c.harness.budgets, seeds, *router, harness_options(c));
        CalibrationPoint point{scale, {}, 0};
        result.methods.clear();
        for (const auto& m : roster) {
            std::size_t total = 0;
            for (int b : c.harness.budgets) total += r.table.at(m.id, b, c.seed).correct;
            result.methods.push_back(m.id);
            point.correct.push_back(total);
            point.sum += total;
        }
        spdlog::info("calibration: scale {:g} -> {} correct", scale, point.sum);
        if (result.points.empty() || point.sum > best) {
            best = point.sum;
            result.scale = scale;
        }
        result.points.push_back(std::move(point));
    }
    return result;
}

ExperimentConfig effective_config(const ExperimentConfig& c)
{
    if (!c.schedule.calibrated()) return c;
    const auto path = out_path(c, artifact::kCalibration);
    require_artifact(path, "fit-tpv");
    std::ifstream in(path);
    ExperimentConfig out = c;
    try {
        out.schedule.alpha_scale = nlohmann::json::parse(in).at("alpha_scale").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed " + path.string() + ": " + e.what());
    }
    out.validate();
    return out;
}

void cmd_corpus_gen(const ExperimentConfig& c, bool overwrite)
{
    ensure_writable(c, {artifact::kCorpus, artifact::kSplit}, overwrite);
    const auto corpus = generate_corpus(c.corpus);
    const auto split = make_split(corpus, c.corpus.fit_fraction, c.seed);
    write_corpus(corpus, out_path(c, artifact::kCorpus));
    write_split_manifest(split, c.corpus.fit_fraction, c.seed, out_path(c, artifact::kSplit));
    spdlog::info("corpus: {} problems ({} fit / {} eval) in {}", corpus.size(), split.fit_set.size(),
                 split.eval_set.size(), c.output_dir.string());
}

void cmd_backend_train(const ExperimentConfig& c, bool overwrite)
{
    if (c.backend.type == BackendType::Synthetic) {
        spdlog::info("backend-train: the synthetic backend has no weights; nothing to do");
        return;
    }
    ensure_writable(c, {artifact::kWeights, artifact::kTrainReport}, overwrite);
    require_artifact(out_path(c, artifact::kCorpus), "corpus-gen");
    const auto corpus = read_corpus(out_path(c, artifact::kCorpus));
    const auto train = training_corpus(c, corpus);
    spdlog::info("backend-train: {} training problems, {} steps", train.size(), c.backend.tiny_transformer.train_steps);
    TrainReport report;
    const auto weights = train_tiny_transformer(train, c.backend.tiny_transformer, &report, [](int step, double loss) {
        if (step % 250 == 0) spdlog::info("  step {:5d}  loss {:.4f}", step, loss);
    });
    save_weights(weights, out_path(c, artifact::kWeights));
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["train_problems"] = train.size();
    j["initial_loss"] = report.initial_loss;
    j["final_loss"] = report.final_loss;
    j["loss_curve"] = report.loss_curve;
    write_text(out_path(c, artifact::kTrainReport), j.dump(2) + "\n");
    spdlog::info("backend-train: loss {:.4f} -> {:.4f}", report.initial_loss, report.final_loss);
}

FitResult cmd_fit_tpv(const ExperimentConfig& c, bool overwrite)
{
    ensure_writable(c, {artifact::kTpv, artifact::kFitReport, artifact::kCalibration}, overwrite);
    const auto split = load_split(c);
    auto backend = open_backend(c);
    int budget = c.tpv.fit_budget;
    if (budget == 0) budget = static_cast<int>(backend->context_limit() - prompt_len(c));
    const auto fit = collect_and_fit(*backend, split.fit_set, budget, c.seed, c.tpv.ridge_lambda, c.corpus.max_steps);
    save_tpv(fit.tpv, out_path(c, artifact::kTpv));
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["backend"] = fit.tpv.backend_id;
    j["site"] = c.tpv.site;
    j["trajectories"] = fit.trajectories;
    j["skipped"] = fit.skipped;
    j["sample_count"] = fit.tpv.fit_meta.sample_count;
    j["ridge_lambda"] = fit.tpv.fit_meta.ridge_lambda;
    j["residual_rmse"] = fit.tpv.fit_meta.residual_rmse;
    j["theta_norm"] = fit.tpv.fit_meta.theta_norm;
    write_text(out_path(c, artifact::kFitReport), j.dump(2) + "\n");
    spdlog::info("fit-tpv: {} trajectories, {} samples, rmse {:.4g}, |theta| {:.4g}", fit.trajectories,
                 fit.tpv.fit_meta.sample_count, fit.tpv.fit_meta.residual_rmse, fit.tpv.fit_meta.theta_norm);

    if (c.schedule.calibrated()) {
        const auto corpus = read_corpus(out_path(c, artifact::kCorpus));
        const auto problems = calibration_problems(c, corpus);
        const auto cal = calibrate_alpha_scale(c, *backend, fit.tpv, problems);
        nlohmann::ordered_json cj;
        cj["alpha_scale"] = cal.scale;
        cj["problems"] = problems.size();
        cj["budgets"] = c.harness.budgets;
        cj["methods"] = cal.methods;
        auto& pts = cj["candidates"];
        pts = nlohmann::ordered_json::array();
        for (const auto& p : cal.points)
            pts.push_back({{"scale", p.scale}, {"correct", p.correct}, {"sum", p.sum}});
        write_text(out_path(c, artifact::kCalibration), cj.dump(2) + "\n");
        spdlog::info("fit-tpv: calibrated alpha scale {:g}", cal.scale);
    }
    return fit;
}

EvaluationResult cmd_eval(const ExperimentConfig& config, bool overwrite)
{
    const ExperimentConfig c = effective_config(config);
    ensure_writable(c, {artifact::kResultsCsv, artifact::kResultsMd, artifact::kTraces, artifact::kResultsConfig}, overwrite);
    auto split = load_split(c);
    const auto backend = open_backend(c);
    const Tpv tpv = load_fitted_tpv(c, *backend);
    prepare_router_inputs(c, *backend, split.eval_set);
    const auto router = make_classifier(c.router);
    const auto roster = main_roster(c.schedule.scaled(), c.schedule.alpha_static, c.schedule.alpha_scale);
    const auto seeds = c.eval_seeds();
    auto result = evaluate(*backend, &tpv, roster, split.eval_set, c.harness.budgets, seeds, *router,
                           harness_options(c));
    write_evaluation(c, result, roster, artifact::kResultsCsv, artifact::kResultsMd, artifact::kTraces,
                     "Main results");
    write_text(out_path(c, artifact::kResultsConfig), config_to_json_text(c));
    audit(result);
    return result;
}

EvaluationResult cmd_ablate(const ExperimentConfig& config, bool overwrite)
{
    const ExperimentConfig c = effective_config(config);
    ensure_writable(c, {artifact::kAblationCsv, artifact::kAblationMd, artifact::kAblationTraces, artifact::kAblationConfig}, overwrite);
    auto split = load_split(c);
    const auto backend = open_backend(c);
    const Tpv tpv = load_fitted_tpv(c, *backend);
    prepare_router_inputs(c, *backend, split.eval_set);
    const auto router = make_classifier(c.router);
    const auto schedule = c.schedule.scaled();
    const auto roster = ablation_roster(schedule);
    const auto seeds = c.eval_seeds();
    auto result = run_ablation(*backend, tpv, schedule, split.eval_set, c.harness.budgets, seeds, *router,
                               harness_options(c));
    write_evaluation(c, result, roster, artifact::kAblationCsv, artifact::kAblationMd, artifact::kAblationTraces,
                     "Ablation");
    write_text(out_path(c, artifact::kAblationConfig), config_to_json_text(c));
    audit(result);
    return result;
}

int exit_code_for(const std::exception_ptr& error)
{
    try {
        std::rethrow_exception(error);
    } catch (const AuditFailure& e) {
        spdlog::error("{}", e.what());
        return kExitAudit;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (...) {
        spdlog::error("unknown error");
        return kExitUsage;
    }
}

}  // namespace aoc

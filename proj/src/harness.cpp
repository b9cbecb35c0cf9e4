#include "aoc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "aoc/corpus.hpp"

namespace aoc {

namespace {

constexpr double kBoundsSlack = 1e-9;

std::string format_alpha_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

const MetricsRow& MetricsTable::at(std::string_view method, int budget, std::uint64_t seed) const
{
    for (const auto& r : rows)
        if (r.method == method && r.budget == budget && r.seed == seed) return r;
    throw InvalidArgument("metrics: no row for " + std::string(method) + " at budget " + std::to_string(budget));
}

std::optional<long> extract_answer(std::string_view text)
{
    const auto pos = text.find(kAnswerMarker);
    if (pos == std::string_view::npos) return std::nullopt;
    std::size_t i = pos + kAnswerMarker.size();
    bool negative = false;
    if (i < text.size() && text[i] == '-') {
        negative = true;
        ++i;
    }
    const std::size_t digits_start = i;
    long value = 0;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
        if (i - digits_start >= 18) return std::nullopt;
        value = value * 10 + (text[i] - '0');
        ++i;
    }
    if (i == digits_start || i == text.size()) return std::nullopt;
    return negative ? -value : value;
}

GenerationRecord run_generation(Backend& backend, const Tpv* tpv, const MethodSpec& method,
                                const DifficultyClassifier& router, const Problem& problem, int budget,
                                std::uint64_t seed, const HarnessOptions& options)
{
    if (budget < 1) throw InvalidArgument("run_generation: budget must be >= 1");
    if (method.steering) {
        if (!tpv) throw InvalidArgument("run_generation: steering requires a fitted TPV");
        if (tpv->hidden_width() != backend.hidden_width())
            throw InvalidArgument("run_generation: TPV width does not match backend width");
    }
    const auto& vocab = backend.vocab();

    GenerationRecord rec;
    rec.problem_id = problem.id;
    rec.method = method.id;
    rec.budget = budget;
    rec.seed = seed;
    rec.routed = router.classify(problem);
    rec.alpha_init = cg_alpha_init(rec.routed, method.schedule);
    std::tie(rec.alpha_lo, rec.alpha_hi) = alpha_bounds(method.schedule, rec.alpha_init);

    std::vector<TokenId> context = vocab.encode(render_prompt(problem, options.prompt_steps));
    backend.reset(mix_seed(seed, problem.id));
    bool in_think = true;
    for (int t = 0; t < budget; ++t) {
        const BackendStepOutput out = backend.step(context);
        const double u = normalized_entropy(softmax(out.logits));
        const double alpha = next_alpha(method.schedule, rec.alpha_init, u);
        const TokenId tok = out.token;
        rec.tokens.push_back(tok);
        context.push_back(tok);
        if (tok == vocab.think_close()) in_think = false;

        const bool apply = method.steering && in_think && !out.is_end;
        rec.alpha_trace.push_back({u, alpha, apply});
        if (out.is_end) {
            rec.ended = true;
            break;
        }
        if (apply) backend.steer(alpha * tpv->theta);
    }
    rec.token_count = static_cast<int>(rec.tokens.size());
    rec.text = vocab.decode(rec.tokens);
    rec.extracted_answer = extract_answer(rec.text);
    rec.answered = rec.extracted_answer.has_value();
    rec.correct = rec.answered && *rec.extracted_answer == problem.gold_answer;
    return rec;
}

EvaluationResult evaluate(const Backend& prototype, const Tpv* tpv, std::span<const MethodSpec> methods,
                          std::span<const Problem> eval_set, std::span<const int> budgets,
                          std::span<const std::uint64_t> seeds, const DifficultyClassifier& router,
                          const HarnessOptions& options)
{
    if (methods.empty() || eval_set.empty() || budgets.empty() || seeds.empty())
        throw InvalidArgument("evaluate: empty method, problem, budget or seed set");

    std::vector<const Problem*> problems;
    for (const auto& p : eval_set) problems.push_back(&p);
    std::stable_sort(problems.begin(), problems.end(), [](auto* a, auto* b) { return a->id < b->id; });

    struct Job {
        const MethodSpec* method;
        int budget;
        std::uint64_t seed;
        const Problem* problem;
    };
    std::vector<Job> jobs;
    for (const auto& m : methods)
        for (int b : budgets)
            for (auto s : seeds)
                for (auto* p : problems) jobs.push_back({&m, b, s, p});

    std::vector<GenerationRecord> records(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        auto backend = prototype.clone();
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& j = jobs[i];
            records[i] = run_generation(*backend, tpv, *j.method, router, *j.problem, j.budget, j.seed, options);
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(jobs.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr error;
        std::mutex error_mutex;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = jobs.size();
                }
            });
        for (auto& th : pool) th.join();
        if (error) std::rethrow_exception(error);
    }

    EvaluationResult result;
    result.table = aggregate(records, methods, budgets, seeds);
    result.records = std::move(records);
    return result;
}

MetricsTable aggregate(std::span<const GenerationRecord> records, std::span<const MethodSpec> methods,
                       std::span<const int> budgets, std::span<const std::uint64_t> seeds)
{
    std::map<std::tuple<std::string, int, std::uint64_t>, std::vector<const GenerationRecord*>> groups;
    for (const auto& r : records) groups[{r.method, r.budget, r.seed}].push_back(&r);

    MetricsTable table;
    for (const auto& m : methods)
        for (int b : budgets)
            for (auto s : seeds) {
                MetricsRow row{m.id, b, s};
                auto it = groups.find({m.id, b, s});
                if (it != groups.end()) {
                    auto recs = it->second;
                    std::stable_sort(recs.begin(), recs.end(),
                                     [](auto* a, auto* c) { return a->problem_id < c->problem_id; });
                    long total_tokens = 0;
                    for (auto* r : recs) {
                        row.correct += r->correct;
                        row.answered += r->answered;
                        row.ended += r->ended;
                        total_tokens += r->token_count;
                    }
                    row.n = recs.size();
                    row.mean_tokens = row.n ? static_cast<double>(total_tokens) / static_cast<double>(row.n) : 0.0;
                }
                table.rows.push_back(row);
            }
    return table;
}

std::vector<MethodSpec> main_roster(const AlphaScheduleConfig& schedule, std::span<const double> static_alphas,
                                    double alpha_scale)
{
    std::vector<MethodSpec> out;
    AlphaScheduleConfig base = schedule;
    base.mode = ScheduleMode::Static;
    base.alpha_static = 0.0;
    out.push_back({"base", base, false});
    for (double a : static_alphas) {
        AlphaScheduleConfig s = schedule;
        s.mode = ScheduleMode::Static;
        s.alpha_static = a * alpha_scale;
        out.push_back({"static_a" + format_alpha_label(a), s, true});
    }
    AlphaScheduleConfig hac = schedule;
    hac.mode = ScheduleMode::HAC;
    out.push_back({"hac", hac, true});
    return out;
}

std::vector<MethodSpec> ablation_roster(const AlphaScheduleConfig& schedule)
{
    std::vector<MethodSpec> out;
    AlphaScheduleConfig base = schedule;
    base.mode = ScheduleMode::Static;
    base.alpha_static = 0.0;
    out.push_back({"base", base, false});
    AlphaScheduleConfig ua = schedule;
    ua.mode = ScheduleMode::UAOnly;
    out.push_back({"hac_wo_cg", ua, true});
    AlphaScheduleConfig cg = schedule;
    cg.mode = ScheduleMode::CGOnly;
    out.push_back({"hac_wo_ua", cg, true});
    AlphaScheduleConfig hac = schedule;
    hac.mode = ScheduleMode::HAC;
    out.push_back({"hac", hac, true});
    return out;
}

EvaluationResult run_ablation(const Backend& prototype, const Tpv& tpv, const AlphaScheduleConfig& schedule,
                              std::span<const Problem> eval_set, std::span<const int> budgets,
                              std::span<const std::uint64_t> seeds, const DifficultyClassifier& router,
                              const HarnessOptions& options)
{
    const auto roster = ablation_roster(schedule);
    return evaluate(prototype, &tpv, roster, eval_set, budgets, seeds, router, options);
}

void annotate_baseline_lengths(const Backend& prototype, std::span<Problem> problems, int budget,
                               const HarnessOptions& options)
{
    auto backend = prototype.clone();
    AlphaScheduleConfig schedule;
    schedule.mode = ScheduleMode::Static;
    schedule.alpha_static = 0.0;
    const MethodSpec base{"base", schedule, false};
    RouterConfig oracle;
    oracle.source = RouterSource::StepCountHeuristic;
    const ConfiguredClassifier router(oracle);
    for (auto& p : problems) {
        Problem probe = p;
        if (probe.chain_steps < 1) probe.chain_steps = 1;
        const auto rec = run_generation(*backend, nullptr, base, router, probe, budget, 0, options);
        p.baseline_tokens = rec.token_count;
    }
}

void audit(const EvaluationResult& result)
{
    std::ostringstream problems;
    std::size_t violations = 0;
    auto fail = [&](const std::string& what) {
        if (violations++ < 20) problems << "  " << what << '\n';
    };
    for (const auto& r : result.records) {
        const std::string tag = r.method + "/" + r.problem_id + "@" + std::to_string(r.budget);
        if (r.token_count > r.budget) fail(tag + ": token_count exceeds budget");
        if (r.token_count != static_cast<int>(r.tokens.size())) fail(tag + ": token_count != tokens");
        if (r.alpha_trace.size() != static_cast<std::size_t>(r.token_count)) fail(tag + ": |alpha_trace| != token_count");
        if (r.answered != r.extracted_answer.has_value()) fail(tag + ": answered flag inconsistent");
        if (r.correct && !r.answered) fail(tag + ": correct without answer");
        for (const auto& s : r.alpha_trace) {
            if (!(s.u >= 0.0 && s.u <= 1.0)) fail(tag + ": u_t outside [0, 1]");
            if (s.alpha < r.alpha_lo - kBoundsSlack || s.alpha > r.alpha_hi + kBoundsSlack) {
                fail(tag + ": alpha_t outside schedule bounds");
                break;
            }
        }
    }
    for (const auto& row : result.table.rows) {
        const std::string tag = row.method + "@" + std::to_string(row.budget);
        if (row.correct > row.answered) fail(tag + ": correct > answered");
        if (row.answered > row.n) fail(tag + ": answered > n");
        if (row.ended > row.n) fail(tag + ": ended > n");
    }
    if (violations)
        throw AuditFailure("invariant audit failed (" + std::to_string(violations) + " violations)\n" + problems.str());
}

std::string metrics_to_csv(const MetricsTable& table)
{
    std::ostringstream os;
    os << "method,budget,seed,correct,answered,ended,n,mean_tokens\n";
    char buf[64];
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof buf, "%.4f", r.mean_tokens);
        os << r.method << ',' << r.budget << ',' << r.seed << ',' << r.correct << ',' << r.answered << ','
           << r.ended << ',' << r.n << ',' << buf << '\n';
    }
    return os.str();
}

std::string metrics_to_markdown(const MetricsTable& table, std::span<const MethodSpec> methods,
                                std::span<const int> budgets, std::span<const std::uint64_t> seeds)
{
    std::ostringstream os;
    char buf[64];
    for (auto seed : seeds) {
        std::size_t n = 0;
        for (const auto& r : table.rows)
            if (r.seed == seed) n = std::max(n, r.n);
        os << "### seed " << seed << " (N = " << n << ")\n\n| Method |";
        for (int b : budgets) os << " " << b << " #Cr | " << b << " #An | " << b << " #En | " << b << " tok |";
        os << "\n|---|";
        for (std::size_t i = 0; i < budgets.size(); ++i) os << "---:|---:|---:|---:|";
        os << '\n';
        for (const auto& m : methods) {
            os << "| " << m.id << " |";
            for (int b : budgets) {
                const auto& r = table.at(m.id, b, seed);
                std::snprintf(buf, sizeof buf, "%.1f", r.mean_tokens);
                os << ' ' << r.correct << " | " << r.answered << " | " << r.ended << " | " << buf << " |";
            }
            os << '\n';
        }
        os << '\n';
    }
    return os.str();
}

std::string record_to_json_line(const GenerationRecord& r)
{
    nlohmann::ordered_json j;
    j["problem_id"] = r.problem_id;
    j["method"] = r.method;
    j["budget"] = r.budget;
    j["seed"] = r.seed;
    j["text"] = r.text;
    j["token_count"] = r.token_count;
    j["ended"] = r.ended;
    j["answered"] = r.answered;
    j["correct"] = r.correct;
    j["extracted_answer"] = r.extracted_answer ? nlohmann::ordered_json(*r.extracted_answer) : nullptr;
    j["routed"] = std::string(to_string(r.routed));
    j["alpha_init"] = r.alpha_init;
    auto& trace = j["alpha_trace"];
    trace = nlohmann::ordered_json::array();
    for (const auto& s : r.alpha_trace) trace.push_back({s.u, s.alpha, s.applied});
    return j.dump();
}

}  // namespace aoc

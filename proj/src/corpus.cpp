#include "aoc/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

namespace aoc {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string two_digits(long v)
{
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02ld", v);
    return buf;
}

}  // namespace

void CorpusConfig::validate() const
{
    if (size == 0) throw ConfigError("corpus: size must be positive");
    if (!(fit_fraction > 0.0 && fit_fraction < 1.0)) throw ConfigError("corpus: fit_fraction must lie in (0, 1)");
    if (min_steps < 1) throw ConfigError("corpus: min_steps must be >= 1");
    if (max_steps < min_steps) throw ConfigError("corpus: max_steps < min_steps");
    if (operand_max < 1 || operand_max > 9) throw ConfigError("corpus: operand_max must lie in [1, 9]");
    if (value_max < operand_max || value_max > 99) throw ConfigError("corpus: value_max must lie in [operand_max, 99]");
    if (tail_min < 0 || tail_max < tail_min) throw ConfigError("corpus: need 0 <= tail_min <= tail_max");
    if (t1 <= 0 || t1 >= t2) throw ConfigError("corpus: need 0 < t1 < t2");
    const auto fit = std::llround(static_cast<double>(size) * fit_fraction);
    if (fit < 1 || fit >= static_cast<long long>(size)) throw ConfigError("corpus: split leaves an empty partition");
}

Problem generate_problem(std::uint64_t rng_seed, int chain_steps, const CorpusConfig& config)
{
    if (chain_steps < 1) throw InvalidArgument("generate_problem: chain_steps must be >= 1");
    Rng rng(rng_seed);

    long value = uniform_int(rng, 0, config.value_max);
    std::string question = two_digits(value);
    std::string body;
    for (int s = 0; s < chain_steps; ++s) {
        const bool can_add = value + 1 <= config.value_max;
        const bool can_sub = value - 1 >= 0;
        bool add = can_add;
        if (can_add && can_sub) add = uniform_int(rng, 0, 1) == 0;
        const long room = add ? config.value_max - value : value;
        const long operand = uniform_int(rng, 1, std::min<long>(config.operand_max, room));
        const long next = add ? value + operand : value - operand;
        const char op = add ? '+' : '-';
        question += op;
        question += std::to_string(operand);
        body += two_digits(value) + op + std::to_string(operand) + "=" + two_digits(next) + ";";
        value = next;
    }
    const long repeats = uniform_int(rng, config.tail_min, config.tail_max);
    for (long r = 0; r < repeats; ++r) body += "ok" + two_digits(value) + ";";

    Problem p;
    p.question = question;
    p.gold_answer = value;
    p.chain_steps = chain_steps;
    p.difficulty = difficulty_from_count(chain_steps, config.t1, config.t2);
    p.gold_trace = std::string(kThinkOpen) + body + std::string(kThinkClose) + std::string(kAnswerMarker) +
                   std::to_string(value) + std::string(kEndMarker);
    return p;
}

std::vector<Problem> generate_corpus(const CorpusConfig& config)
{
    config.validate();
    Rng rng(mix_seed(config.seed, "corpus"));
    std::vector<Problem> out;
    out.reserve(config.size);
    for (std::size_t i = 0; i < config.size; ++i) {
        const int steps = static_cast<int>(uniform_int(rng, config.min_steps, config.max_steps));
        Problem p = generate_problem(mix_seed(config.seed, static_cast<std::uint64_t>(i)), steps, config);
        char id[16];
        std::snprintf(id, sizeof id, "p%05zu", i);
        p.id = id;
        out.push_back(std::move(p));
    }
    return out;
}

CorpusSplit make_split(std::span<const Problem> problems, double fit_fraction, std::uint64_t seed)
{
    if (!(fit_fraction > 0.0 && fit_fraction < 1.0)) throw InvalidArgument("make_split: fit_fraction must lie in (0, 1)");
    const auto n = problems.size();
    const auto fit_total = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fit_fraction));
    if (n < 2 || fit_total == 0 || fit_total >= n) throw InvalidArgument("make_split: degenerate split sizes");

    // strata keyed by label; unlabeled problems form their own stratum
    std::array<std::vector<std::size_t>, 4> strata;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = problems[i].difficulty;
        strata[d ? static_cast<std::size_t>(*d) : 3].push_back(i);
    }

    std::array<std::size_t, 4> take{};
    std::array<double, 4> remainder{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        const double exact = static_cast<double>(strata[s].size()) * fit_fraction;
        take[s] = static_cast<std::size_t>(std::floor(exact));
        remainder[s] = exact - static_cast<double>(take[s]);
        assigned += take[s];
    }
    std::array<std::size_t, 4> order{0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < fit_total && i < order.size(); ++i) {
        if (take[order[i]] < strata[order[i]].size()) {
            ++take[order[i]];
            ++assigned;
        }
    }

    Rng rng(mix_seed(seed, "split"));
    std::vector<bool> in_fit(n, false);
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto& idx = strata[s];
        // Fisher-Yates with the portable sampler
        for (std::size_t i = idx.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)));
            std::swap(idx[i - 1], idx[j]);
        }
        for (std::size_t i = 0; i < take[s]; ++i) in_fit[idx[i]] = true;
    }

    CorpusSplit split;
    for (std::size_t i = 0; i < n; ++i) (in_fit[i] ? split.fit_set : split.eval_set).push_back(problems[i]);
    return split;
}

std::string render_prompt(const Problem& problem, int max_steps)
{
    std::string q = problem.question;
    const std::size_t width = 2 + 2 * static_cast<std::size_t>(max_steps);
    if (q.size() < width) q.append(width - q.size(), '_');
    return "Q:" + q + "?" + std::string(kThinkOpen);
}

long evaluate_question(std::string_view question)
{
    std::size_t i = 0;
    auto read_number = [&]() {
        if (i >= question.size() || question[i] < '0' || question[i] > '9')
            throw InvalidArgument("evaluate_question: expected digit in '" + std::string(question) + "'");
        long v = 0;
        while (i < question.size() && question[i] >= '0' && question[i] <= '9') v = v * 10 + (question[i++] - '0');
        return v;
    };
    long value = read_number();
    while (i < question.size()) {
        const char op = question[i++];
        if (op != '+' && op != '-') throw InvalidArgument("evaluate_question: bad operator");
        const long rhs = read_number();
        value = op == '+' ? value + rhs : value - rhs;
    }
    return value;
}

std::string problem_to_json_line(const Problem& p)
{
    ordered_json j;
    j["id"] = p.id;
    j["question"] = p.question;
    j["gold_answer"] = p.gold_answer;
    j["difficulty"] = p.difficulty ? std::string(to_string(*p.difficulty)) : std::string();
    j["chain_steps"] = p.chain_steps;
    j["gold_trace"] = p.gold_trace;
    return j.dump();
}

Problem problem_from_json_line(const std::string& line)
{
    try {
        const auto j = nlohmann::json::parse(line);
        Problem p;
        p.id = j.at("id").get<std::string>();
        p.question = j.at("question").get<std::string>();
        p.gold_answer = j.at("gold_answer").get<long>();
        const auto d = j.at("difficulty").get<std::string>();
        if (!d.empty()) p.difficulty = difficulty_from_string(d);
        p.chain_steps = j.at("chain_steps").get<int>();
        p.gold_trace = j.at("gold_trace").get<std::string>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("corpus record: ") + e.what());
    }
}

void write_corpus(std::span<const Problem> problems, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot write " + path.string());
    for (const auto& p : problems) os << problem_to_json_line(p) << '\n';
}

std::vector<Problem> read_corpus(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("cannot read " + path.string());
    std::vector<Problem> out;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) out.push_back(problem_from_json_line(line));
    return out;
}

void write_split_manifest(const CorpusSplit& split, double fit_fraction, std::uint64_t seed,
                          const std::filesystem::path& path)
{
    ordered_json j;
    j["seed"] = seed;
    j["fit_fraction"] = fit_fraction;
    j["fit_count"] = split.fit_set.size();
    j["eval_count"] = split.eval_set.size();
    auto ids = [](const std::vector<Problem>& ps) {
        std::vector<std::string> out;
        for (const auto& p : ps) out.push_back(p.id);
        return out;
    };
    j["fit_ids"] = ids(split.fit_set);
    j["eval_ids"] = ids(split.eval_set);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

CorpusSplit read_split(std::span<const Problem> corpus, const std::filesystem::path& manifest)
{
    std::ifstream is(manifest, std::ios::binary);
    if (!is) throw InvalidArgument("cannot read " + manifest.string());
    const auto j = nlohmann::json::parse(is);
    std::map<std::string, const Problem*> by_id;
    for (const auto& p : corpus) by_id[p.id] = &p;
    auto collect = [&](const char* key) {
        std::vector<Problem> out;
        for (const auto& id : j.at(key)) {
            auto it = by_id.find(id.get<std::string>());
            if (it == by_id.end()) throw InvalidArgument("split manifest references unknown id");
            out.push_back(*it->second);
        }
        return out;
    };
    return {collect("fit_ids"), collect("eval_ids")};
}

}  // namespace aoc

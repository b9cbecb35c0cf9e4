#include <doctest.h>

#include "aoc/router.hpp"
#include "support.hpp"

using namespace aoc;

namespace {

Problem with_steps(int steps)
{
    Problem p;
    p.id = "p";
    p.chain_steps = steps;
    return p;
}

}  // namespace

TEST_CASE("step-count heuristic with thresholds (3, 5)")
{
    const RouterConfig cfg;
    CHECK(classify(with_steps(2), cfg) == Difficulty::Easy);
    CHECK(classify(with_steps(3), cfg) == Difficulty::Easy);
    CHECK(classify(with_steps(4), cfg) == Difficulty::Medium);
    CHECK(classify(with_steps(5), cfg) == Difficulty::Medium);
    CHECK(classify(with_steps(6), cfg) == Difficulty::Hard);
    CHECK(classify(with_steps(7), cfg) == Difficulty::Hard);
}

TEST_CASE("oracle labels and baseline lengths")
{
    RouterConfig oracle;
    oracle.source = RouterSource::OracleLabel;
    Problem p = with_steps(1);
    CHECK_THROWS_AS(classify(p, oracle), InvalidArgument);
    p.difficulty = Difficulty::Hard;
    CHECK(classify(p, oracle) == Difficulty::Hard);

    RouterConfig length;
    length.source = RouterSource::BaselineLengthProxy;
    length.t1 = 60;
    length.t2 = 120;
    CHECK_THROWS_AS(classify(p, length), InvalidArgument);
    p.baseline_tokens = 60;
    CHECK(classify(p, length) == Difficulty::Easy);
    p.baseline_tokens = 61;
    CHECK(classify(p, length) == Difficulty::Medium);
    p.baseline_tokens = 121;
    CHECK(classify(p, length) == Difficulty::Hard);
}

TEST_CASE("router config validation and names")
{
    RouterConfig c;
    c.t1 = 5;
    c.t2 = 5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.t1 = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    for (auto s : {RouterSource::OracleLabel, RouterSource::StepCountHeuristic, RouterSource::BaselineLengthProxy})
        CHECK(router_source_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(router_source_from_string("llm"), InvalidArgument);
}

TEST_CASE("property: classification is deterministic and monotone in step count")
{
    aoc_test::Gen g(31);
    for (int c = 0; c < aoc_test::kPropertyCases; ++c) {
        RouterConfig cfg;
        cfg.t1 = static_cast<int>(g.integer(1, 10));
        cfg.t2 = cfg.t1 + static_cast<int>(g.integer(1, 10));
        const int s = static_cast<int>(g.integer(1, 30));
        const auto a = classify(with_steps(s), cfg);
        CHECK(a == classify(with_steps(s), cfg));
        CHECK(static_cast<int>(classify(with_steps(s + 1), cfg)) >= static_cast<int>(a));
        const auto clf = make_classifier(cfg);
        CHECK(clf->classify(with_steps(s)) == a);
    }
}

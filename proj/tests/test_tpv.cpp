#include <doctest.h>

#include <Eigen/Dense>

#include "aoc/tpv.hpp"
#include "support.hpp"

using namespace aoc;
using aoc_test::Gen;

namespace {

// Independent oracle: centered least squares through a full SVD, which yields
// the minimum-norm solution for rank-deficient systems. Ridge is folded in by
// stacking sqrt(lambda) I under the centered design.
std::pair<Eigen::VectorXd, double> oracle_fit(const std::vector<ProgressSample>& s, double lambda)
{
    const Eigen::Index n = static_cast<Eigen::Index>(s.size());
    const Eigen::Index d = s.front().hidden.size();
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X.row(i) = s[static_cast<std::size_t>(i)].hidden.transpose();
        y(i) = s[static_cast<std::size_t>(i)].progress;
    }
    const Eigen::RowVectorXd xm = X.colwise().mean();
    const double ym = y.mean();
    Eigen::MatrixXd A(n + (lambda > 0 ? d : 0), d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(A.rows());
    A.topRows(n) = X.rowwise() - xm;
    b.head(n) = y.array() - ym;
    if (lambda > 0) A.bottomRows(d) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(d, d);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    svd.setThreshold(1e-12);
    const Eigen::VectorXd theta = svd.solve(b);
    return {theta, ym - xm.dot(theta)};
}

std::vector<ProgressSample> linear_trajectory(const Eigen::VectorXd& w, int n)
{
    std::vector<HiddenState> states;
    for (int j = 1; j <= n; ++j) states.push_back(w * (static_cast<double>(j) / n));
    return collect_samples(states);
}

}  // namespace

TEST_CASE("collect_samples assigns 1-based normalized positions")
{
    std::vector<HiddenState> four(4, Eigen::VectorXd::Zero(3));
    const auto s = collect_samples(four);
    REQUIRE(s.size() == 4);
    CHECK(s[0].progress == 0.25);
    CHECK(s[1].progress == 0.5);
    CHECK(s[2].progress == 0.75);
    CHECK(s[3].progress == 1.0);

    std::vector<HiddenState> one(1, Eigen::VectorXd::Ones(2));
    CHECK(collect_samples(one).front().progress == 1.0);

    std::vector<HiddenState> mixed{Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(16)};
    CHECK_THROWS_AS(collect_samples(mixed), InvalidArgument);
    CHECK_THROWS_AS(collect_samples(std::vector<HiddenState>{}), InvalidArgument);
}

TEST_CASE("fit_tpv on an exactly linear two-dimensional trajectory")
{
    const auto s = linear_trajectory(Eigen::Vector2d(2.0, 0.0), 4);
    const Tpv t = fit_tpv(s, 0.0);
    // oracle values: theta = (0.5, 0), intercept = 0, rmse = 0
    CHECK(t.theta(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(t.theta(1)) < 1e-15);
    CHECK(std::abs(t.intercept) < 1e-12);
    CHECK(t.fit_meta.residual_rmse < 1e-12);
    CHECK(t.fit_meta.sample_count == 4);

    const auto [theta, b] = oracle_fit(s, 0.0);
    CHECK((t.theta - theta).norm() < 1e-12);
    CHECK(std::abs(t.intercept - b) < 1e-12);
}

TEST_CASE("fit_tpv with a constant target returns the zero vector")
{
    std::vector<ProgressSample> s;
    Gen g(11);
    for (int i = 0; i < 5; ++i) s.push_back({g.vector(3), 1.0});
    const Tpv t = fit_tpv(s, 0.0);
    CHECK(t.theta.norm() < 1e-12);
    CHECK(t.intercept == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit_tpv rejects degenerate input")
{
    std::vector<ProgressSample> one{{Eigen::VectorXd::Ones(2), 1.0}};
    CHECK_THROWS_AS(fit_tpv(one, 0.0), InvalidArgument);
    std::vector<ProgressSample> bad{{Eigen::VectorXd::Ones(2), 0.5}, {Eigen::VectorXd::Ones(2), 1.0}};
    bad[1].hidden(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fit_tpv(bad, 0.0), InvalidArgument);
    std::vector<ProgressSample> widths{{Eigen::VectorXd::Ones(2), 0.5}, {Eigen::VectorXd::Ones(3), 1.0}};
    CHECK_THROWS_AS(fit_tpv(widths, 0.0), InvalidArgument);
    CHECK_THROWS_AS(fit_tpv(linear_trajectory(Eigen::Vector2d(1, 1), 3), -1.0), InvalidArgument);
}

TEST_CASE("fit_tpv agrees with the SVD oracle on random problems")
{
    Gen g(12);
    for (int c = 0; c < 200; ++c) {
        const Eigen::Index d = g.integer(1, 12);
        const int n = static_cast<int>(g.integer(2, 30));  // both over- and underdetermined
        std::vector<ProgressSample> s;
        for (int i = 0; i < n; ++i) s.push_back({g.vector(d), g.real(0.0, 1.0)});
        const double lambda = g.coin() ? 0.0 : g.real(1e-4, 1.0);
        const Tpv t = fit_tpv(s, lambda);
        const auto [theta, b] = oracle_fit(s, lambda);
        CAPTURE(c);
        CHECK((t.theta - theta).norm() <= 1e-7 * std::max(1.0, theta.norm()));
        CHECK(std::abs(t.intercept - b) <= 1e-7 * std::max(1.0, std::abs(b)));
    }
}

TEST_CASE("exactly linear samples give a zero-residual certificate")
{
    Gen g(13);
    for (int c = 0; c < 100; ++c) {
        const Eigen::Index d = g.integer(2, 16);
        const Eigen::VectorXd w = g.vector(d);
        const Tpv t = fit_tpv(linear_trajectory(w, static_cast<int>(g.integer(3, 40))), 0.0);
        CHECK(t.fit_meta.residual_rmse <= 1e-8);
    }
}

TEST_CASE("noisy recovery of a planted direction")
{
    Gen g(14);
    const Eigen::Index d = 16;
    const Eigen::VectorXd w = g.vector(d);
    const double sigma = 0.01 * w.norm();
    std::vector<ProgressSample> s;
    for (int traj = 0; traj < 20; ++traj)
        for (int j = 1; j <= 100; ++j) {
            const double p = j / 100.0;
            s.push_back({p * w + g.vector(d, sigma), p});
        }
    const Tpv t = fit_tpv(s, 0.0);
    const double cosine = t.theta.dot(w) / (t.theta.norm() * w.norm());
    CHECK(std::abs(cosine) >= 0.99);
}

TEST_CASE("predict_progress and apply_intervention examples")
{
    Tpv t;
    t.theta = Eigen::Vector2d(0.5, 0.0);
    CHECK(predict_progress(t, Eigen::Vector2d(2.0, 0.0)) == 1.0);
    t.intercept = 0.1;
    CHECK(predict_progress(t, Eigen::Vector2d(1.0, 1.0)) == doctest::Approx(0.6));
    CHECK_THROWS_AS(predict_progress(t, Eigen::Vector3d(1, 1, 1)), InvalidArgument);

    Tpv zero;
    zero.theta = Eigen::Vector3d::Zero();
    zero.intercept = 0.3;
    CHECK(predict_progress(zero, Eigen::Vector3d(4, -2, 7)) == doctest::Approx(0.3));

    const HiddenState h = Eigen::Vector2d(1.0, 1.0);
    CHECK(apply_intervention(h, t, 0.0) == h);
    CHECK(apply_intervention(h, t, 2.0) == Eigen::Vector2d(2.0, 1.0));
    CHECK(h == Eigen::Vector2d(1.0, 1.0));
    CHECK(predict_progress(t, apply_intervention(h, t, 2.0)) - predict_progress(t, h) == doctest::Approx(0.5));
    CHECK_THROWS_AS(apply_intervention(Eigen::Vector3d::Zero(), t, 1.0), InvalidArgument);
    CHECK_THROWS_AS(apply_intervention(h, t, std::numeric_limits<double>::infinity()), InvalidArgument);
}

TEST_CASE("property: progress shift equals alpha |theta|^2")
{
    Gen g(15);
    for (int c = 0; c < aoc_test::kPropertyCases; ++c) {
        const Eigen::Index d = g.integer(1, 64);
        Tpv t;
        t.theta = g.vector(d);
        t.intercept = g.real(-1, 1);
        const HiddenState h = g.vector(d, 3.0);
        const double alpha = g.real(-100, 100);
        const double shift = predict_progress(t, apply_intervention(h, t, alpha)) - predict_progress(t, h);
        const double expected = alpha * t.theta.squaredNorm();
        CHECK(std::abs(shift - expected) <= 1e-6 * std::max(1.0, std::abs(expected)));
    }
}

TEST_CASE("property: interventions compose additively")
{
    Gen g(16);
    for (int c = 0; c < aoc_test::kPropertyCases; ++c) {
        const Eigen::Index d = g.integer(1, 64);
        Tpv t;
        t.theta = g.vector(d);
        const HiddenState h = g.vector(d, 3.0);
        const double a = g.real(-50, 50), b = g.real(-50, 50);
        const HiddenState twice = apply_intervention(apply_intervention(h, t, a), t, b);
        const HiddenState once = apply_intervention(h, t, a + b);
        for (Eigen::Index i = 0; i < d; ++i)
            CHECK(std::abs(twice(i) - once(i)) <= 1e-9 * std::max(1.0, std::abs(once(i))));
    }
}

TEST_CASE("fit is deterministic and the text form round-trips bit-exactly")
{
    Gen g(17);
    std::vector<ProgressSample> s;
    for (int i = 0; i < 40; ++i) s.push_back({g.vector(7), g.real(0, 1)});
    Tpv a = fit_tpv(s);
    const Tpv b = fit_tpv(s);
    CHECK(a.theta == b.theta);
    CHECK(a.intercept == b.intercept);

    a.backend_id = "synthetic";
    a.seed = 99;
    const Tpv r = tpv_from_text(tpv_to_text(a));
    CHECK(r.theta == a.theta);
    CHECK(r.intercept == a.intercept);
    CHECK(r.fit_meta.residual_rmse == a.fit_meta.residual_rmse);
    CHECK(r.fit_meta.ridge_lambda == a.fit_meta.ridge_lambda);
    CHECK(r.fit_meta.sample_count == a.fit_meta.sample_count);
    CHECK(r.backend_id == "synthetic");
    CHECK(r.seed == 99);
    CHECK(tpv_to_text(r) == tpv_to_text(a));

    const auto dir = aoc_test::scratch_dir("tpv");
    save_tpv(a, dir / "t.txt");
    CHECK(load_tpv(dir / "t.txt").theta == a.theta);
}

TEST_CASE("malformed TPV documents are rejected")
{
    CHECK_THROWS_AS(tpv_from_text("dim = 2\n"), InvalidArgument);
    Tpv t;
    t.theta = Eigen::Vector2d(1, 2);
    std::string text = tpv_to_text(t);
    text.replace(text.find("dim = 2"), 7, "dim = 3");
    CHECK_THROWS_AS(tpv_from_text(text), InvalidArgument);
    CHECK_THROWS_AS(tpv_from_text("garbage line\n"), InvalidArgument);
}

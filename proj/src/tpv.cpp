#include "aoc/tpv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Dense>

namespace aoc {

namespace {

std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const char* key)
{
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw InvalidArgument(std::string("tpv file: bad number for ") + key);
    return v;
}

}  // namespace

std::vector<ProgressSample> collect_samples(std::span<const HiddenState> trajectory)
{
    if (trajectory.empty()) throw InvalidArgument("collect_samples: empty trajectory");
    const auto width = trajectory.front().size();
    const auto n = static_cast<double>(trajectory.size());
    std::vector<ProgressSample> out;
    out.reserve(trajectory.size());
    for (std::size_t j = 0; j < trajectory.size(); ++j) {
        if (trajectory[j].size() != width)
            throw InvalidArgument("collect_samples: inconsistent hidden widths");
        out.push_back({trajectory[j], static_cast<double>(j + 1) / n});
    }
    return out;
}

Tpv fit_tpv(std::span<const ProgressSample> samples, double ridge_lambda)
{
    if (samples.size() < 2) throw InvalidArgument("fit_tpv: need at least 2 samples");
    if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda))
        throw InvalidArgument("fit_tpv: ridge_lambda must be finite and >= 0");

    const Eigen::Index d = samples.front().hidden.size();
    const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
    if (d == 0) throw InvalidArgument("fit_tpv: zero-width hidden states");

    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        if (s.hidden.size() != d) throw InvalidArgument("fit_tpv: inconsistent hidden widths");
        if (!s.hidden.allFinite() || !std::isfinite(s.progress))
            throw InvalidArgument("fit_tpv: non-finite input");
        X.row(i) = s.hidden.transpose();
        y(i) = s.progress;
    }

    // Centering removes the intercept from the penalized problem.
    const Eigen::RowVectorXd x_mean = X.colwise().mean();
    const double y_mean = y.mean();
    X.rowwise() -= x_mean;
    y.array() -= y_mean;

    Eigen::VectorXd theta;
    if (ridge_lambda > 0.0) {
        if (d <= n) {
            Eigen::MatrixXd gram = X.transpose() * X;
            gram.diagonal().array() += ridge_lambda;
            theta = gram.ldlt().solve(X.transpose() * y);
        } else {
            // dual form: theta = X^T (X X^T + lambda I)^-1 y
            Eigen::MatrixXd gram = X * X.transpose();
            gram.diagonal().array() += ridge_lambda;
            theta = X.transpose() * gram.ldlt().solve(y);
        }
    } else {
        theta = X.completeOrthogonalDecomposition().solve(y);
    }

    Tpv tpv;
    tpv.theta = theta;
    tpv.intercept = y_mean - x_mean.dot(theta);
    const Eigen::VectorXd residual = X * theta - y;
    tpv.fit_meta.sample_count = samples.size();
    tpv.fit_meta.ridge_lambda = ridge_lambda;
    tpv.fit_meta.residual_rmse = std::sqrt(residual.squaredNorm() / static_cast<double>(n));
    tpv.fit_meta.theta_norm = theta.norm();
    if (!tpv.theta.allFinite() || !std::isfinite(tpv.intercept))
        throw InvalidArgument("fit_tpv: solve produced non-finite weights");
    return tpv;
}

HiddenState apply_intervention(const HiddenState& h, const Tpv& tpv, double alpha)
{
    if (h.size() != tpv.hidden_width()) throw InvalidArgument("apply_intervention: width mismatch");
    if (!std::isfinite(alpha)) throw InvalidArgument("apply_intervention: non-finite alpha");
    return h + alpha * tpv.theta;
}

std::string tpv_to_text(const Tpv& tpv)
{
    std::ostringstream os;
    os << "# thinking progress vector\n";
    os << "dim = " << tpv.hidden_width() << '\n';
    os << "intercept = " << fmt_double(tpv.intercept) << '\n';
    os << "ridge_lambda = " << fmt_double(tpv.fit_meta.ridge_lambda) << '\n';
    os << "sample_count = " << tpv.fit_meta.sample_count << '\n';
    os << "residual_rmse = " << fmt_double(tpv.fit_meta.residual_rmse) << '\n';
    os << "theta_norm = " << fmt_double(tpv.fit_meta.theta_norm) << '\n';
    os << "backend_id = " << tpv.backend_id << '\n';
    os << "seed = " << tpv.seed << '\n';
    os << "theta =";
    for (Eigen::Index i = 0; i < tpv.theta.size(); ++i) os << ' ' << fmt_double(tpv.theta(i));
    os << '\n';
    return os.str();
}

Tpv tpv_from_text(const std::string& text)
{
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find(" =");
        if (eq == std::string::npos) throw InvalidArgument("tpv file: malformed line '" + line + "'");
        std::string value = line.substr(eq + 2);
        if (!value.empty() && value[0] == ' ') value.erase(0, 1);
        kv[line.substr(0, eq)] = value;
    }
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw InvalidArgument(std::string("tpv file: missing key ") + key);
        return it->second;
    };

    Tpv tpv;
    const long dim = std::stol(get("dim"));
    if (dim <= 0) throw InvalidArgument("tpv file: dim must be positive");
    tpv.intercept = parse_double(get("intercept"), "intercept");
    tpv.fit_meta.ridge_lambda = parse_double(get("ridge_lambda"), "ridge_lambda");
    tpv.fit_meta.sample_count = std::stoull(get("sample_count"));
    tpv.fit_meta.residual_rmse = parse_double(get("residual_rmse"), "residual_rmse");
    if (kv.count("theta_norm")) tpv.fit_meta.theta_norm = parse_double(kv["theta_norm"], "theta_norm");
    tpv.backend_id = get("backend_id");
    if (kv.count("seed")) tpv.seed = std::stoull(kv["seed"]);

    std::istringstream ts(get("theta"));
    std::vector<double> values;
    std::string tok;
    while (ts >> tok) values.push_back(parse_double(tok, "theta"));
    if (static_cast<long>(values.size()) != dim)
        throw InvalidArgument("tpv file: theta length does not match dim");
    tpv.theta = Eigen::Map<const Eigen::VectorXd>(values.data(), dim);
    if (!tpv.theta.allFinite() || !std::isfinite(tpv.intercept))
        throw InvalidArgument("tpv file: non-finite weights");
    return tpv;
}

void save_tpv(const Tpv& tpv, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot write " + path.string());
    os << tpv_to_text(tpv);
}

Tpv load_tpv(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return tpv_from_text(ss.str());
}

}  // namespace aoc

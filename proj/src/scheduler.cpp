#include "aoc/scheduler.hpp"

#include <string>

namespace aoc {

std::string_view to_string(ScheduleMode m)
{
    switch (m) {
    case ScheduleMode::Static: return "static";
    case ScheduleMode::CGOnly: return "cg_only";
    case ScheduleMode::UAOnly: return "ua_only";
    case ScheduleMode::HAC: return "hac";
    }
    return "unknown";
}

ScheduleMode schedule_mode_from_string(std::string_view s)
{
    if (s == "static") return ScheduleMode::Static;
    if (s == "cg_only") return ScheduleMode::CGOnly;
    if (s == "ua_only") return ScheduleMode::UAOnly;
    if (s == "hac") return ScheduleMode::HAC;
    throw InvalidArgument("unknown schedule mode '" + std::string(s) + "'");
}

void AlphaScheduleConfig::validate() const
{
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(alpha_static) || !finite(alpha_base) || !finite(alpha_max) || !finite(delta) ||
        !finite(alpha_high) || !finite(alpha_mid) || !finite(alpha_low))
        throw InvalidArgument("schedule: non-finite strength");
    if (!(u_thr > 0.0 && u_thr < 1.0)) throw InvalidArgument("schedule: u_thr must lie in (0, 1)");
    if (!(k > 0.0) || !finite(k)) throw InvalidArgument("schedule: k must be positive");
    if (delta < 0.0) throw InvalidArgument("schedule: delta must be >= 0");
    if (alpha_max < alpha_base) throw InvalidArgument("schedule: alpha_max < alpha_base");
}

double logistic(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double cg_alpha_init(Difficulty difficulty, const AlphaScheduleConfig& config)
{
    switch (difficulty) {
    case Difficulty::Easy: return config.alpha_high;
    case Difficulty::Medium: return config.alpha_mid;
    case Difficulty::Hard: return config.alpha_low;
    }
    throw InvalidArgument("cg_alpha_init: unknown difficulty");
}

double ua_alpha(double u, double alpha_base, double alpha_max, double u_thr, double k)
{
    if (!(u >= 0.0 && u <= 1.0)) throw InvalidArgument("ua_alpha: u outside [0, 1]");
    if (alpha_max < alpha_base) throw InvalidArgument("ua_alpha: alpha_max < alpha_base");
    if (!(k > 0.0)) throw InvalidArgument("ua_alpha: k must be positive");
    if (!std::isfinite(alpha_base) || !std::isfinite(alpha_max) || !std::isfinite(u_thr))
        throw InvalidArgument("ua_alpha: non-finite parameter");
    // 1 - logistic(x) == logistic(-x), which stays accurate in both tails
    const double a = alpha_base + (alpha_max - alpha_base) * logistic(-k * (u - u_thr));
    return std::clamp(a, alpha_base, alpha_max);
}

double hac_alpha(double alpha_init, double delta, double u, double u_thr, double k)
{
    if (!(delta >= 0.0)) throw InvalidArgument("hac_alpha: delta must be >= 0");
    return ua_alpha(u, alpha_init, alpha_init + delta, u_thr, k);
}

double next_alpha(const AlphaScheduleConfig& config, double alpha_init, double u)
{
    switch (config.mode) {
    case ScheduleMode::Static: return config.alpha_static;
    case ScheduleMode::CGOnly: return alpha_init;
    case ScheduleMode::UAOnly:
        return ua_alpha(u, config.alpha_base, config.alpha_max, config.u_thr, config.k);
    case ScheduleMode::HAC: return hac_alpha(alpha_init, config.delta, u, config.u_thr, config.k);
    }
    throw InvalidArgument("next_alpha: unknown mode");
}

std::pair<double, double> alpha_bounds(const AlphaScheduleConfig& config, double alpha_init)
{
    switch (config.mode) {
    case ScheduleMode::Static: return {config.alpha_static, config.alpha_static};
    case ScheduleMode::CGOnly: return {alpha_init, alpha_init};
    case ScheduleMode::UAOnly: return {config.alpha_base, config.alpha_max};
    case ScheduleMode::HAC: return {alpha_init, alpha_init + config.delta};
    }
    throw InvalidArgument("alpha_bounds: unknown mode");
}

}  // namespace aoc

#include "carve/carve_seq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "carve/detail/inversion.hpp"
#include "carve/errors.hpp"
#include "carve/gauss_core.hpp"

namespace carve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLogTiny = std::log(1e-300);

// d/du log Phibar(p + q u) = -q / mills(p + q u), formed in log space.
double log_factor_slope(double p, double q, double u) {
    const double x = p + q * u;
    return -q * std::exp(std_normal_log_pdf(x) - std_normal_log_survival(x));
}

// Mode of phi(u) Phibar(p + q u); the log density is strictly concave so the root is unique.
double weighted_mode(double p, double q) {
    auto h = [&](double u) { return -u + log_factor_slope(p, q, u); };
    double lo = -1.0;
    double hi = 1.0;
    while (h(lo) < 0.0) lo *= 2.0;
    while (h(hi) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (h(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

void SeqCarveProblem::validate() const {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw DomainError("SeqCarveProblem: rho must be positive");
    if (!std::isfinite(offset) || !std::isfinite(m)) throw DomainError("SeqCarveProblem: non-finite m or offset");
    if (sign != 1 && sign != -1) throw DomainError("SeqCarveProblem: sign must be +1 or -1");
}

double seq_survival_factor(double z, const SeqCarveProblem& prob) {
    prob.validate();
    return std_normal_survival(prob.sign * (prob.offset - z - prob.m) / prob.rho);
}

double seq_log_selection_probability(const SeqCarveProblem& prob) {
    prob.validate();
    return std_normal_log_survival(prob.sign * (prob.offset - prob.m) / std::sqrt(1.0 + prob.rho * prob.rho));
}

PivotResult weighted_gaussian_tail(double u0, double p, double q, const QuadratureConfig& cfg) {
    cfg.validate();
    if (std::isnan(u0) || !std::isfinite(p) || !std::isfinite(q)) {
        throw DomainError("weighted_gaussian_tail: invalid arguments");
    }
    const double log_den = std_normal_log_survival(p / std::sqrt(1.0 + q * q));
    if (log_den < kLogTiny) {
        throw RareEventUnderflow("selection probability below 1e-300 (log = " + std::to_string(log_den) + ")");
    }
    PivotResult out;
    out.denominator = std::exp(log_den);
    if (u0 == -kInf || u0 == kInf) {
        out.value = u0 < 0.0 ? 1.0 : 0.0;
        out.numerator = out.value * out.denominator;
        return out;
    }

    auto g = [&](double u) {
        return std::exp(std_normal_log_pdf(u) + std_normal_log_survival(p + q * u) - log_den);
    };
    const double mode = weighted_mode(p, q);
    const double radius = cfg.truncation_radius;  // log density has curvature >= 1, so sd <= 1
    double value;
    if (u0 >= mode) {
        const auto r = integrate(g, u0, u0 + radius, cfg);
        value = r.value;
        out.quadrature_error = r.error;
    } else {
        const auto r = integrate(g, std::min(u0, mode - radius), u0, cfg);
        value = 1.0 - r.value;
        out.quadrature_error = r.error;
    }
    out.value = std::clamp(value, 0.0, 1.0);
    out.numerator = out.value * out.denominator;
    return out;
}

PivotResult seq_pivot(double z_obs, const SeqCarveProblem& prob, const QuadratureConfig& cfg) {
    prob.validate();
    if (std::isnan(z_obs)) throw DomainError("seq_pivot: NaN statistic");
    const double s = prob.sign;
    return weighted_gaussian_tail(z_obs - prob.m, s * (prob.offset - prob.m) / prob.rho, -s / prob.rho, cfg);
}

ConfidenceInterval seq_confidence_interval(double z_obs, double rho, double offset, int sign, double level,
                                           const QuadratureConfig& cfg) {
    if (!(level > 0.0 && level < 1.0)) throw DomainError("seq_confidence_interval: level must lie in (0,1)");
    if (!std::isfinite(z_obs)) throw DomainError("seq_confidence_interval: non-finite statistic");
    SeqCarveProblem base{0.0, rho, offset, sign};
    base.validate();
    auto pivot_at = [&](double m) {
        SeqCarveProblem prob = base;
        prob.m = m;
        return seq_pivot(z_obs, prob, cfg).value;
    };
    ConfidenceInterval ci;
    ci.level = level;
    ci.lower = detail::invert_increasing(pivot_at, 0.5 * (1.0 - level), z_obs, 1e-8, ci.iterations);
    ci.upper = detail::invert_increasing(pivot_at, 0.5 * (1.0 + level), z_obs, 1e-8, ci.iterations);
    return ci;
}

double seq_carved_density(double z, const SeqCarveProblem& prob, const QuadratureConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(z)) throw DomainError("seq_carved_density: non-finite argument");
    const double log_den = seq_log_selection_probability(prob);
    if (log_den < kLogTiny) throw RareEventUnderflow("selection probability below 1e-300");
    const double log_factor = std_normal_log_survival(prob.sign * (prob.offset - z - prob.m) / prob.rho);
    return std::exp(std_normal_log_pdf(z) + log_factor - log_den);
}

}  // namespace carve

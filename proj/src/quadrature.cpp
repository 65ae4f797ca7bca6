#include "carve/quadrature.hpp"

#include <numbers>

#include "carve/gauss_core.hpp"

namespace carve {

void QuadratureConfig::validate() const {
    if (!(abs_tol > 0.0)) throw DomainError("QuadratureConfig: abs_tol must be > 0");
    if (!(rel_tol > 0.0)) throw DomainError("QuadratureConfig: rel_tol must be > 0");
    if (!(truncation_radius >= 8.0)) throw DomainError("QuadratureConfig: truncation_radius must be >= 8");
    if (max_refinements < 1) throw DomainError("QuadratureConfig: max_refinements must be >= 1");
}

namespace detail {

const GaussLegendreRule& gauss_legendre_rule() {
    static const GaussLegendreRule rule = [] {
        GaussLegendreRule r;
        constexpr int n = kGaussOrder;
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0;
                double p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            r.nodes[i] = -x;
            r.nodes[n - 1 - i] = x;
            r.weights[i] = w;
            r.weights[n - 1 - i] = w;
        }
        return r;
    }();
    return rule;
}

}  // namespace detail

QuadratureResult gauss_expectation(const std::function<double(double)>& f, const QuadratureConfig& cfg) {
    cfg.validate();
    const double r = cfg.truncation_radius;
    return integrate([&](double z) { return f(z) * kInvSqrt2Pi * std::exp(-0.5 * z * z); }, -r, r, cfg);
}

}  // namespace carve

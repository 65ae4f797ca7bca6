#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>

#include "carve/errors.hpp"

namespace carve {

struct QuadratureConfig {
    double abs_tol = 1e-12;
    double rel_tol = 1e-10;
    int max_refinements = 14;
    double truncation_radius = 10.0;  // in standard deviations

    // abs_tol > 0, rel_tol > 0, truncation_radius >= 8.
    void validate() const;
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;  // gap between the last two refinement levels
    int panels = 0;
};

namespace detail {

inline constexpr int kGaussOrder = 20;

struct GaussLegendreRule {
    std::array<double, kGaussOrder> nodes{};
    std::array<double, kGaussOrder> weights{};
};

const GaussLegendreRule& gauss_legendre_rule();

template <class F>
double composite_gauss_legendre(const F& f, double a, double b, int panels) {
    const auto& rule = gauss_legendre_rule();
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        double s = 0.0;
        for (int i = 0; i < kGaussOrder; ++i) {
            s += rule.weights[i] * f(mid + 0.5 * h * rule.nodes[i]);
        }
        total += 0.5 * h * s;
    }
    return total;
}

}  // namespace detail

// Composite Gauss-Legendre on [a,b]; the panel count doubles until two successive estimates
// differ by less than max(abs_tol, rel_tol * |estimate|).
template <class F>
QuadratureResult integrate(const F& f, double a, double b, const QuadratureConfig& cfg) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw DomainError("integrate: limits must be finite");
    }
    if (a == b) return {0.0, 0.0, 0};
    if (a > b) {
        auto r = integrate(f, b, a, cfg);
        r.value = -r.value;
        return r;
    }
    int panels = 2;
    double prev = detail::composite_gauss_legendre(f, a, b, panels);
    double gap = 0.0;
    for (int level = 0; level < cfg.max_refinements; ++level) {
        panels *= 2;
        const double cur = detail::composite_gauss_legendre(f, a, b, panels);
        if (!std::isfinite(cur)) throw DomainError("integrate: non-finite integrand value");
        gap = std::abs(cur - prev);
        if (gap < std::max(cfg.abs_tol, cfg.rel_tol * std::abs(cur))) {
            return {cur, gap, panels};
        }
        prev = cur;
    }
    throw ConvergenceError("integrate: refinement limit reached", prev, gap);
}

// Integral of f(z) phi(z) over [-truncation_radius, truncation_radius].
QuadratureResult gauss_expectation(const std::function<double(double)>& f, const QuadratureConfig& cfg);

}  // namespace carve

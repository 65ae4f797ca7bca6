#pragma once

// Independent reference computations used by the unit suites. None of these call into the library.

#include <cmath>
#include <functional>
#include <random>

namespace oracle {

// Upper normal tail in long double: power series for Phi below 1.5, Mills-ratio continued fraction above.
inline long double survival(long double x) {
    const long double inv_sqrt_2pi = 0.398942280401432677939946059934L;
    if (x < 0) return 1.0L - survival(-x);
    const long double pdf = inv_sqrt_2pi * std::exp(-0.5L * x * x);
    if (x < 1.5L) {
        long double term = x;
        long double sum = x;
        for (int k = 1; k < 200; ++k) {
            term *= x * x / (2.0L * k + 1.0L);
            sum += term;
            if (term < 1e-22L * sum) break;
        }
        return 0.5L - pdf * sum;
    }
    long double tail = 0.0L;
    for (int k = 400; k >= 1; --k) tail = k / (x + tail);
    return pdf / (x + tail);
}

// Simpson's rule with a fixed, fine grid.
inline double simpson(const std::function<double(double)>& f, double a, double b, int intervals = 20000) {
    const double h = (b - a) / intervals;
    double s = f(a) + f(b);
    for (int i = 1; i < intervals; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// P(X1 > 0, X2 > 0) for a bivariate normal, by a brute-force midpoint grid over [mean +- 9 sd].
inline double orthant2(double m1, double m2, double v11, double v12, double v22, int cells = 3000) {
    const double det = v11 * v22 - v12 * v12;
    const double s1 = std::sqrt(v11);
    const double s2 = std::sqrt(v22);
    const double lo1 = std::max(0.0, m1 - 9 * s1);
    const double hi1 = std::max(lo1, m1 + 9 * s1);
    const double lo2 = std::max(0.0, m2 - 9 * s2);
    const double hi2 = std::max(lo2, m2 + 9 * s2);
    const double h1 = (hi1 - lo1) / cells;
    const double h2 = (hi2 - lo2) / cells;
    const double norm = 1.0 / (2.0 * M_PI * std::sqrt(det));
    double total = 0.0;
    for (int i = 0; i < cells; ++i) {
        const double x = lo1 + (i + 0.5) * h1 - m1;
        for (int k = 0; k < cells; ++k) {
            const double y = lo2 + (k + 0.5) * h2 - m2;
            total += std::exp(-0.5 * (v22 * x * x - 2 * v12 * x * y + v11 * y * y) / det);
        }
    }
    return total * norm * h1 * h2;
}

// Carved pivot P(Z > z_obs | selected) by rejection sampling: Z ~ N(m, 1), W ~ N(0, rho^2) and the
// coordinate is selected when sign * (Z + W) > sign * offset.
struct SampledPivot {
    double value;
    double std_error;
};
inline SampledPivot rejection_pivot(double z_obs, double m, double rho, double offset, int sign, long accepted,
                                    unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    long kept = 0;
    long above = 0;
    while (kept < accepted) {
        const double z = m + normal(gen);
        const double w = rho * normal(gen);
        if (sign * (z + w) > sign * offset) {
            ++kept;
            if (z > z_obs) ++above;
        }
    }
    const double p = static_cast<double>(above) / kept;
    return {p, std::sqrt(p * (1 - p) / kept)};
}

}  // namespace oracle

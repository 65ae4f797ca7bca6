#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "carve/errors.hpp"

namespace carve::detail {

// Bracketed bisection for an increasing f. Brackets outwards from start -+ 1 by doubling the step,
// then bisects until |f - target| < tol.
template <class F>
double invert_increasing(const F& f, double target, double start, double tol, int& iterations) {
    constexpr int kMaxDoublings = 60;
    double lo = start - 1.0;
    double hi = start + 1.0;
    double step = 1.0;
    int doublings = 0;
    while (f(lo) > target) {
        if (++doublings > kMaxDoublings) throw InversionError("pivot inversion: lower bracket not found");
        step *= 2.0;
        lo = start - step;
        ++iterations;
    }
    step = 1.0;
    doublings = 0;
    while (f(hi) < target) {
        if (++doublings > kMaxDoublings) throw InversionError("pivot inversion: upper bracket not found");
        step *= 2.0;
        hi = start + step;
        ++iterations;
    }
    for (;;) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        ++iterations;
        if (std::abs(fm - target) < tol) return mid;
        if (fm < target) {
            lo = mid;
        } else {
            hi = mid;
        }
        // Pivot is flat beyond double resolution here; the bracket is the answer.
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid))) return mid;
    }
}

}  // namespace carve::detail

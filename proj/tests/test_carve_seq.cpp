#include <doctest.h>

#include <cmath>

#include "carve/carve_seq.hpp"
#include "carve/errors.hpp"
#include "carve/gauss_core.hpp"
#include "oracles.hpp"

using namespace carve;

namespace {
// Pivot values from 40-digit quadrature of phi(z - m) Phibar(s (c - z) / rho) over the raw statistic.
struct PivotCase {
    double z_obs, m, rho, offset;
    int sign;
    double value;
};
constexpr PivotCase kPivots[] = {
    {1.5, 0.0, 1.0, 1.4142135623730951, 1, 0.28861974179531978275},
    {2.0, 0.5, 0.7, 2.0, 1, 0.42945370848022669466},
    {-2.5, -1.0, 1.3, -1.8, -1, 0.82931951518836176337},
    {3.1, -4.0, 1.0, 1.4142135623730951, 1, 9.3315473989969277185e-9},
    {0.2, 1.0, 2.0, -0.5, -1, 0.60081527989989482389},
};
}  // namespace

TEST_CASE("seq pivot matches high-precision quadrature") {
    for (const auto& c : kPivots) {
        CAPTURE(c.z_obs);
        CAPTURE(c.m);
        const auto r = seq_pivot(c.z_obs, SeqCarveProblem{c.m, c.rho, c.offset, c.sign});
        CHECK(r.value == doctest::Approx(c.value).epsilon(1e-8));
        CHECK(r.denominator == doctest::Approx(std_normal_survival(c.sign * (c.offset - c.m) / std::sqrt(1 + c.rho * c.rho))));
    }
}

TEST_CASE("seq pivot matches rejection sampling of the two-stage experiment") {
    const PivotCase cases[] = {{0.9, 0.3, 1.0, 1.0, 1, 0}, {-0.4, 0.0, 0.5, -0.7, -1, 0}, {1.8, 1.0, 2.0, 2.5, 1, 0}};
    unsigned seed = 1;
    for (const auto& c : cases) {
        const auto ref = oracle::rejection_pivot(c.z_obs, c.m, c.rho, c.offset, c.sign, 200000, seed++);
        const auto r = seq_pivot(c.z_obs, SeqCarveProblem{c.m, c.rho, c.offset, c.sign});
        CAPTURE(ref.value);
        CHECK(std::abs(r.value - ref.value) < 4.0 * ref.std_error);
    }
}

TEST_CASE("seq pivot is increasing in m and bounded") {
    double prev = -1.0;
    for (double m = -6.0; m <= 6.0; m += 0.5) {
        const double v = seq_pivot(0.7, SeqCarveProblem{m, 1.0, 1.2, 1}).value;
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("carved density integrates to one") {
    const SeqCarveProblem prob{0.4, 0.8, 1.5, 1};
    const auto total = gauss_expectation([&](double z) { return seq_carved_density(z, prob) / std_normal_pdf(z); }, {});
    CHECK(total.value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(seq_survival_factor(0.0, prob) == doctest::Approx(std_normal_survival((1.5 - 0.4) / 0.8)));
}

TEST_CASE("weighted tail kernel limits") {
    // q = 0 leaves a plain Gaussian tail.
    const auto r = weighted_gaussian_tail(1.3, 0.7, 0.0, {});
    CHECK(r.value == doctest::Approx(std_normal_survival(1.3)).epsilon(1e-10));
    CHECK(weighted_gaussian_tail(std::numeric_limits<double>::infinity(), 0.0, 1.0, {}).value == 0.0);
    CHECK(weighted_gaussian_tail(-std::numeric_limits<double>::infinity(), 0.0, 1.0, {}).value == 1.0);
}

TEST_CASE("seq confidence interval inverts the pivot") {
    const double z_obs = 1.5, rho = 1.0, offset = std::sqrt(2.0);
    const auto ci = seq_confidence_interval(z_obs, rho, offset, 1, 0.9);
    CHECK(ci.lower < ci.upper);
    CHECK(ci.upper > z_obs - 3.0);
    CHECK(seq_pivot(z_obs, SeqCarveProblem{ci.lower, rho, offset, 1}).value == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(seq_pivot(z_obs, SeqCarveProblem{ci.upper, rho, offset, 1}).value == doctest::Approx(0.95).epsilon(1e-6));
    CHECK_THROWS_AS(seq_confidence_interval(z_obs, rho, offset, 1, 1.0), DomainError);
}

TEST_CASE("seq errors") {
    CHECK_THROWS_AS(seq_pivot(0.0, SeqCarveProblem{0.0, 0.0, 0.0, 1}), DomainError);
    CHECK_THROWS_AS(seq_pivot(0.0, SeqCarveProblem{0.0, 1.0, 0.0, 2}), DomainError);
    CHECK_THROWS_AS(seq_pivot(std::nan(""), SeqCarveProblem{}), DomainError);
    // Selection probability Phibar(100 / sqrt 2) is far below 1e-300.
    CHECK_THROWS_AS(seq_pivot(1.0, SeqCarveProblem{-100.0, 1.0, 0.0, 1}), RareEventUnderflow);
}

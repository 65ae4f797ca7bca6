#include <doctest.h>

#include <cmath>
#include <random>

#include "carve/carve_mv.hpp"
#include "carve/errors.hpp"
#include "carve/gauss_core.hpp"
#include "oracles.hpp"

using namespace carve;

namespace {

Eigen::MatrixXd correlated(int d, double r) {
    Eigen::MatrixXd s(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s(i, j) = std::pow(r, std::abs(i - j));
    return s;
}

}  // namespace

TEST_CASE("screening geometry layout") {
    Eigen::VectorXd z1(3);
    z1 << 1.5, 0.2, -0.1;
    const auto sel = screen_threshold(z1, Eigen::VectorXd::Ones(3));
    const Eigen::VectorXd aug = z1 * std::sqrt(2.0);
    const auto g = screening_geometry(Eigen::MatrixXd::Identity(3, 3), sel, aug, 1.0);
    CHECK(g.n_selected() == 1);
    CHECK(g.q_e(0, 0) == 1.0);
    CHECK(g.r_e[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(g.r_e[1] == aug[1]);
    CHECK((g.p_e + Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(screening_geometry(Eigen::MatrixXd::Identity(3, 3), screen_threshold(zero, Eigen::VectorXd::Ones(3)),
                                       zero, 1.0),
                    DomainError);
}

TEST_CASE("Q and alpha reduce to the screening closed form") {
    const Eigen::MatrixXd sigma = correlated(3, 0.4);
    Eigen::VectorXd z1(3);
    z1 << 2.0, -0.3, 1.7;
    const auto sel = screen_threshold(z1, Eigen::VectorXd::Ones(3));
    const double rho = 0.8;
    const auto g = screening_geometry(sigma, sel, z1 * std::sqrt(1 + rho * rho), rho);
    const auto qa = build_q_alpha(g, Eigen::VectorXd::Zero(3));
    const Eigen::MatrixXd sigma_inv = sigma.inverse();
    const Eigen::MatrixXd a = g.q_e.transpose() * sigma_inv * g.q_e / (rho * rho);
    const Eigen::MatrixXd expected = -sym_inv_sqrt(a) * g.q_e.transpose() * sym_inv_sqrt(sigma) / (rho * rho);
    CHECK((qa.q - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("selection probability: both estimators agree with an exact bivariate value") {
    Eigen::MatrixXd q(2, 2);
    q << -0.5, 0.25, 0.25, -0.5;
    QAlpha qa{q, Eigen::Vector2d(0.3, -0.4)};
    const Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(2, 2) + q * q.transpose();
    const double ref = oracle::orthant2(-0.3, 0.4, cov(0, 0), cov(0, 1), cov(1, 1));
    RngStream r1(1, 0), r2(1, 1);
    const auto a = mv_selection_prob(qa, 400000, r1, SelectionProbMethod::orthant);
    const auto b = mv_selection_prob(qa, 400000, r2, SelectionProbMethod::conditional);
    CHECK(std::abs(a.probability - ref) < 4 * a.std_error + 1e-6);
    CHECK(std::abs(b.probability - ref) < 4 * b.std_error + 1e-6);
    CHECK(orthant_product_approximation(Eigen::Vector2d(0.3, -0.2), Eigen::Matrix2d::Identity()) ==
          doctest::Approx(std_normal_cdf(0.3) * std_normal_cdf(-0.2)));
}

TEST_CASE("mv pivot equals seq pivot for independent coordinates") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 10; ++rep) {
        const double rho = 0.5 + 0.2 * rep;
        Eigen::VectorXd aug(3);
        aug << std::sqrt(1 + rho * rho) * (1.2 + std::abs(normal(gen))), normal(gen), normal(gen) - 1.5;
        const auto sel = screen_threshold(aug / std::sqrt(1 + rho * rho), Eigen::VectorXd::Ones(3));
        REQUIRE(sel.selected.size() >= 1);
        const auto g = screening_geometry(Eigen::MatrixXd::Identity(3, 3), sel, aug, rho);
        if (g.n_selected() != 1) continue;
        Eigen::VectorXd z = aug / std::sqrt(1 + rho * rho) + 0.3 * Eigen::VectorXd::Ones(3);
        const double mean = normal(gen);
        RngStream rng(1, rep);
        const auto mv = mv_pivot(z[0], 0, g, mean, nuisance_statistic(z, g.sigma, 0), {}, rng);
        const auto seq = seq_pivot(z[0], SeqCarveProblem{mean, rho, sel.offset(0, rho), 1});
        CHECK(mv.value == doctest::Approx(seq.value).epsilon(1e-9));
    }
}

TEST_CASE("sampled mv pivot tracks the exact path within its standard error") {
    Eigen::VectorXd z1(2);
    z1 << 1.4, 0.1;
    const double rho = 1.0;
    const auto sel = screen_threshold(z1, Eigen::VectorXd::Ones(2));
    const auto g = screening_geometry(correlated(2, 0.5), sel, z1 * std::sqrt(2.0), rho);
    Eigen::VectorXd z(2);
    z << 1.1, 0.4;
    const auto nuis = nuisance_statistic(z, g.sigma, 0);
    MvPivotOptions mc;
    mc.force_mc = true;
    mc.n_mc = 50000;
    for (double mean : {-1.0, 0.0, 1.0}) {
        RngStream r1(5, 0), r2(5, 1);
        const auto exact = mv_pivot(z[0], 0, g, mean, nuis, {}, r1);
        const auto sampled = mv_pivot(z[0], 0, g, mean, nuis, mc, r2);
        CHECK(sampled.std_error > 0.0);
        CHECK(std::abs(sampled.value - exact.value) < 4 * sampled.std_error + 1e-9);
    }
}

TEST_CASE("mv pivot with two selected coordinates matches rejection sampling") {
    // Independent unit-variance coordinates, both above threshold: conditioning on the second leaves
    // the first coordinate with the one-dimensional carved law.
    Eigen::VectorXd aug(2);
    aug << 2.2, 1.9;
    const double rho = 1.0;
    const auto sel = screen_threshold(aug / std::sqrt(2.0), Eigen::VectorXd::Ones(2));
    REQUIRE(sel.selected.size() == 2);
    const auto g = screening_geometry(Eigen::MatrixXd::Identity(2, 2), sel, aug, rho);
    Eigen::VectorXd z(2);
    z << 1.2, 0.8;
    MvPivotOptions opts;
    opts.n_mc = 100000;
    RngStream rng(2, 0);
    const auto mv = mv_pivot(z[0], 0, g, 0.3, nuisance_statistic(z, g.sigma, 0), opts, rng);
    const auto ref = oracle::rejection_pivot(1.2, 0.3, rho, std::sqrt(2.0), 1, 200000, 77);
    CHECK(std::abs(mv.value - ref.value) < 4 * std::hypot(ref.std_error, mv.std_error));
}

TEST_CASE("mv confidence interval brackets the pivot levels") {
    Eigen::VectorXd aug(3);
    aug << 2.5, 0.1, -0.4;
    const auto sel = screen_threshold(aug / std::sqrt(2.0), Eigen::VectorXd::Ones(3));
    const auto g = screening_geometry(correlated(3, 0.3), sel, aug, 1.0);
    Eigen::VectorXd z = aug / std::sqrt(2.0);
    const auto nuis = nuisance_statistic(z, g.sigma, 0);
    RngStream rng(1, 0);
    MvPivotFunction f(z[0], 0, g, nuis, {}, rng);
    CHECK(f.exact());
    const auto ci = f.confidence_interval(0.8);
    CHECK(f(ci.lower).value == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(f(ci.upper).value == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("geometry validation") {
    CarveGeometry g;
    g.sigma = Eigen::MatrixXd::Identity(2, 2);
    g.q_e = Eigen::MatrixXd::Zero(2, 0);
    g.r_e = Eigen::VectorXd::Zero(2);
    g.p_e = -Eigen::MatrixXd::Identity(2, 2);
    g.omega = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(g.validate(), DomainError);
    g.q_e = Eigen::MatrixXd::Identity(2, 1);
    g.omega(1, 1) = -1.0;
    CHECK_THROWS_AS(g.validate(), NumericError);
    CHECK_THROWS_AS(nuisance_statistic(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 2), DomainError);
}

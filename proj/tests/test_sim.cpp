#include <doctest.h>

#include <cmath>
#include <sstream>

#include "carve/errors.hpp"
#include "carve/generative.hpp"
#include "carve/report_io.hpp"
#include "carve/sim.hpp"

using namespace carve;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.n1 = 40;
    cfg.n2 = 40;
    cfg.sigma = Eigen::MatrixXd::Identity(3, 3);
    cfg.sqrt_n_beta = Eigen::VectorXd::Zero(3);
    cfg.rule = FixedThreshold{Eigen::VectorXd::Constant(3, 0.5)};
    cfg.replications = 150;
    cfg.master_seed = 17;
    return cfg;
}

}  // namespace

TEST_CASE("standardized families have mean zero and unit variance") {
    for (Family f : {Family::gaussian, Family::centered_exponential, Family::laplace, Family::rademacher,
                     Family::uniform}) {
        CAPTURE(family_name(f));
        RngStream rng(1, static_cast<std::uint64_t>(f));
        double s = 0, ss = 0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double x = standardized_draw(f, rng);
            s += x;
            ss += x * x;
        }
        CHECK(std::abs(s / n) < 0.015);
        CHECK(std::abs(ss / n - 1.0) < 0.03);
        CHECK(parse_family(family_name(f)) == f);
    }
    CHECK(parse_family("exponential") == Family::centered_exponential);
    CHECK_THROWS_AS(parse_family("cauchy"), ConfigError);
}

TEST_CASE("triangular array rows carry the requested mean and covariance") {
    GenerativeSpec spec{Family::laplace, Eigen::Vector2d(0.5, -1.0), (Eigen::Matrix2d() << 2.0, 0.6, 0.6, 1.0).finished()};
    RngStream rng(3, 0);
    const Eigen::MatrixXd x = sample_triangular_array(spec, 100000, rng);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    CHECK(std::abs(mean[0] - 0.5) < 0.02);
    CHECK(std::abs(mean[1] + 1.0) < 0.02);
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / (x.rows() - 1.0);
    CHECK((cov - spec.sigma).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("config validation") {
    auto cfg = small_config();
    cfg.replications = 50;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.n2 = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.rule = TopD{3};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.regime = RegimeSpec{0.6, Eigen::VectorXd::Ones(3)};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.regime = RegimeSpec{0.25, Eigen::VectorXd::Constant(3, 0.5)};
    CHECK(cfg.mean_statistic()[0] == doctest::Approx(-std::pow(80.0, 0.25) * 0.5));
}

TEST_CASE("replications are independent of the thread count") {
    auto cfg = small_config();
    const auto a = run_two_stage(cfg);
    cfg.jobs = 3;
    const auto b = run_two_stage(cfg);
    std::ostringstream ca, cb;
    write_records_csv(ca, a.records);
    write_records_csv(cb, b.records);
    CHECK(ca.str() == cb.str());
    CHECK(experiment_summary(a).dump() == experiment_summary(b).dump());
    // Each replication can be recomputed on its own.
    const auto single = run_replication(cfg, 42);
    CHECK(single.pivots == a.records[42].pivots);
}

TEST_CASE("target pivots truncate the run deterministically") {
    auto cfg = small_config();
    cfg.replications = 1000;
    cfg.target_pivots = 120;
    const auto res = run_two_stage(cfg);
    const auto pooled = pooled_pivots(res.records);
    CHECK(pooled.size() >= 120u);
    CHECK(res.records.size() < 1000u);
    auto cfg2 = cfg;
    cfg2.jobs = 2;
    CHECK(pooled_pivots(run_two_stage(cfg2).records) == pooled);
}

TEST_CASE("correlated sigma takes the multivariate route") {
    auto cfg = small_config();
    cfg.sigma << 1.0, 0.4, 0.0, 0.4, 1.0, 0.2, 0.0, 0.2, 1.0;
    cfg.mv_n_mc = 1000;
    cfg.replications = 100;
    const auto res = run_two_stage(cfg);
    long ok = 0;
    for (const auto& r : res.records) {
        if (!r.ok()) continue;
        ++ok;
        for (double p : r.pivots) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }
    CHECK(ok > 20);
}

TEST_CASE("KS statistics") {
    std::vector<double> grid;
    for (int i = 0; i < 200; ++i) grid.push_back((i + 0.5) / 200.0);
    CHECK(uniformity_report(grid).ks_distance == doctest::Approx(0.0025));
    CHECK_THROWS_AS(uniformity_report(std::vector<double>(10, 0.5)), InsufficientData);
    CHECK(ks_two_sample({0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}) == 0.0);
    CHECK(ks_two_sample({0.1, 0.2}, {0.8, 0.9}) == 1.0);
}

TEST_CASE("coverage counts intervals containing the truth") {
    std::vector<IntervalOutcome> iv;
    for (int i = 0; i < 100; ++i) iv.push_back({-1.0, 1.0 + i, i < 90 ? 0.0 : 5000.0});
    const auto c = coverage_of(iv);
    CHECK(c.coverage == doctest::Approx(0.9));
    CHECK(c.count == 100);
    CHECK(c.std_error == doctest::Approx(std::sqrt(0.09 / 100)));
    iv.resize(50);
    CHECK_THROWS_AS(coverage_of(iv), InsufficientData);
}

TEST_CASE("records CSV round-trips through the parser") {
    auto cfg = small_config();
    const auto res = run_two_stage(cfg);
    std::ostringstream out;
    write_records_csv(out, res.records);
    std::istringstream in(out.str());
    const auto rows = parse_csv(in);
    REQUIRE(rows.size() == res.records.size() + 1);
    CHECK(rows[0][0] == "replication");
    CHECK(csv_field("a,\"b\"") == "\"a,\"\"b\"\"\"");
    CHECK(format_double(0.1) == "0.10000000000000001");
}

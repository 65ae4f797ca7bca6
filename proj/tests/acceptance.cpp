// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero if any fails.
// Usage: carve_acceptance [--only N]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "carve/asymptotics.hpp"
#include "carve/carve_mv.hpp"
#include "carve/carve_seq.hpp"
#include "carve/cli.hpp"
#include "carve/elastic_net.hpp"
#include "carve/gauss_core.hpp"
#include "carve/sim.hpp"

using namespace carve;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* title;
    double budget_seconds;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ExperimentConfig threshold_config(int d, int n1, int n2, double lambda) {
    ExperimentConfig cfg;
    cfg.n1 = n1;
    cfg.n2 = n2;
    cfg.sigma = Eigen::MatrixXd::Identity(d, d);
    cfg.sqrt_n_beta = Eigen::VectorXd::Zero(d);
    cfg.rule = FixedThreshold{Eigen::VectorXd::Constant(d, lambda)};
    return cfg;
}

// Shared by the first two criteria.
const ExperimentResult& gaussian_null_run() {
    static const ExperimentResult result = [] {
        auto cfg = threshold_config(5, 100, 100, 1.0);
        cfg.family = Family::gaussian;
        cfg.replications = 100000;
        cfg.target_pivots = 10000;
        cfg.master_seed = 2026;
        return run_two_stage(cfg);
    }();
    return result;
}

Outcome uniformity_gaussian() {
    const auto pivots = pooled_pivots(gaussian_null_run().records);
    const auto rep = uniformity_report(pivots);
    const double bound = 1.36 / std::sqrt(1e4) + 0.01;
    return {rep.n_pivots >= 10000 && rep.ks_distance < bound,
            "KS=" + fmt("%.4f", rep.ks_distance) + " < " + fmt("%.4f", bound) + " over " +
                std::to_string(rep.n_pivots) + " pivots"};
}

Outcome coverage_gaussian() {
    const auto& res = gaussian_null_run();
    const auto rep = coverage_report(res.records, 0.9);
    const auto& c = rep.carved;
    return {c.count >= 5000 && c.coverage >= 0.885 && c.coverage <= 0.915,
            "carved coverage " + fmt("%.4f", c.coverage) + " in [0.885, 0.915] over " + std::to_string(c.count) +
                " intervals (split " + fmt("%.4f", rep.split.coverage) + ")"};
}

Outcome convolution() {
    double worst = 0.0;
    for (const auto& r : convolution_check({-6, -3, 0, 2, 6}, {0.5, 1, 2})) worst = std::max(worst, r.abs_error);
    return {worst < 1e-8, "max |error| " + fmt("%.2e", worst) + " < 1e-8 over 15 (m, rho) pairs"};
}

Outcome seq_decay() {
    const auto rows = seq_decay_table({-6, -8, -10, -12}, 1.0);
    bool decreasing = true;
    for (std::size_t i = 1; i < rows.size(); ++i) decreasing &= rows[i].rel_error < rows[i - 1].rel_error;
    const bool pass = rows[0].rel_error < 0.10 && rows[2].rel_error < 0.04 && decreasing;
    return {pass, "rel error " + fmt("%.4f", rows[0].rel_error) + " (m=-6, <0.10), " + fmt("%.4f", rows[2].rel_error) +
                      " (m=-10, <0.04), strictly decreasing: " + (decreasing ? "yes" : "no")};
}

Outcome mv_decay() {
    Eigen::MatrixXd q(2, 2);
    q << -0.5, 0.25, 0.25, -0.5;
    const auto rows = mv_decay_table(q, Eigen::Vector2d(0.4, 0.4), {6, 10}, 10000000, 2026);
    const auto& r6 = rows[0];
    const auto& r10 = rows[1];
    const bool pass = r10.ratio >= 0.85 && r10.ratio <= 1.15 && std::abs(r10.ratio - 1) < std::abs(r6.ratio - 1);
    return {pass, "ratio " + fmt("%.4f", r10.ratio) + " +- " + fmt("%.4f", r10.ratio_se) + " at a=10 in [0.85, 1.15]; " +
                      fmt("%.4f", r6.ratio) + " +- " + fmt("%.4f", r6.ratio_se) + " at a=6"};
}

Outcome sandwich() {
    const auto rep = sandwich_report(make_grid(-10.0, 10.0, 0.01));
    std::string detail = std::to_string(rep.violations) + " violations over " + std::to_string(rep.rows.size()) +
                         " grid points";
    if (rep.violations > 0) {
        detail += " (in [" + fmt("%.2f", rep.first_violation) + ", " + fmt("%.2f", rep.last_violation) +
                  "]: the upper envelope falls below the survival function for x < -0.553)";
    }
    return {rep.violations == 0, detail};
}

Outcome moments() {
    GenerativeSpec spec{Family::centered_exponential, Eigen::VectorXd::Zero(2),
                        (Eigen::Matrix2d() << 1.0, 0.5, 0.5, 1.0).finished()};
    RngStream rng(2026, 0);
    const auto rep = randomization_moments_check(50, 50, spec, 100000, rng);
    double cov_z = 0.0, cross_z = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int k = 0; k < 2; ++k) {
            cov_z = std::max(cov_z, std::abs(rep.cov(i, k) - rep.cov_target(i, k)) / rep.cov_se(i, k));
            cross_z = std::max(cross_z, std::abs(rep.cross(i, k)) / rep.cross_se(i, k));
        }
    }
    return {rep.cov_ok && rep.cross_ok,
            "max |cov - rho^2 sigma| = " + fmt("%.2f", cov_z) + " se, max |cross-cov| = " + fmt("%.2f", cross_z) +
                " se (limit 3), 1e5 replications"};
}

Outcome clt_transfer() {
    std::vector<double> ks;
    std::string detail = "KS";
    long min_pivots = -1;
    for (int n : {50, 200, 1000}) {
        auto cfg = threshold_config(10, n / 2, n / 2, 1.0);
        cfg.family = Family::centered_exponential;
        cfg.regime = RegimeSpec{0.0, Eigen::VectorXd::Constant(10, 1.0)};
        cfg.replications = 1000000;
        cfg.target_pivots = 10000;
        cfg.intervals = false;
        cfg.master_seed = 2026;
        const auto rep = uniformity_report(pooled_pivots(run_two_stage(cfg).records));
        ks.push_back(rep.ks_distance);
        min_pivots = min_pivots < 0 ? rep.n_pivots : std::min(min_pivots, rep.n_pivots);
        detail += " " + fmt("%.4f", rep.ks_distance) + " (n=" + std::to_string(n) + ")";
    }
    int inversions = 0;
    for (std::size_t i = 1; i < ks.size(); ++i) inversions += ks[i] >= ks[i - 1];
    const bool pass = inversions <= 1 && ks.back() < 0.03 && min_pivots >= 10000;
    return {pass, detail + "; inversions " + std::to_string(inversions) + " (<= 1), n=1000 < 0.03, R >= " +
                      std::to_string(min_pivots)};
}

Outcome rare_regime() {
    std::vector<double> ks;
    std::string detail = "KS";
    for (int n : {200, 3000}) {
        auto cfg = threshold_config(5, n / 2, n / 2, 1.0);
        cfg.family = Family::centered_exponential;
        cfg.mode = RandomizationMode::implicit_carving;
        cfg.regime = RegimeSpec{0.125, Eigen::VectorXd::Constant(5, 0.5)};
        cfg.replications = 2000000;
        cfg.target_pivots = 20000;
        cfg.intervals = false;
        cfg.master_seed = 2026;
        const auto rep = uniformity_report(pooled_pivots(run_two_stage(cfg).records));
        ks.push_back(rep.ks_distance);
        detail += " " + fmt("%.4f", rep.ks_distance) + " (n=" + std::to_string(n) + ", " +
                  std::to_string(rep.n_pivots) + " pivots)";
    }
    return {ks[1] < ks[0], detail + "; need n=3000 below n=200"};
}

Outcome seq_mv_agreement() {
    std::mt19937_64 gen(2026);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.3, 2.0);
    double worst_excess = -1.0;
    double worst_gap = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const int d = 2 + rep % 4;
        const double rho = unif(gen);
        Eigen::VectorXd z1(d);
        for (int i = 0; i < d; ++i) z1[i] = 1.5 * normal(gen);
        const auto sel = screen_top_d(z1, 1);
        const Eigen::VectorXd aug = z1 * std::sqrt(1 + rho * rho);
        const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(d, d);
        const auto g = screening_geometry(sigma, sel, aug, rho);
        const int j = sel.selected[0];
        Eigen::VectorXd z(d);
        for (int i = 0; i < d; ++i) z[i] = aug[i] / std::sqrt(1 + rho * rho) + 0.5 * normal(gen);
        const double mean = 2.0 * normal(gen);
        RngStream rng(2026, static_cast<std::uint64_t>(rep));
        const auto mv = mv_pivot(z[j], j, g, mean, nuisance_statistic(z, sigma, j), {}, rng);
        const auto seq = seq_pivot(z[j], SeqCarveProblem{mean, rho, sel.offset(0, rho), sel.signs[0]});
        const double gap = std::abs(mv.value - seq.value);
        const double tol = std::max(1e-6, 3.0 * mv.std_error);
        worst_gap = std::max(worst_gap, gap);
        worst_excess = std::max(worst_excess, gap - tol);
    }
    return {worst_excess <= 0.0, "max |mv - seq| = " + fmt("%.2e", worst_gap) + " over 50 inputs (tolerance 1e-6)"};
}

Outcome elastic_net() {
    std::mt19937_64 gen(2026);
    std::normal_distribution<double> normal;
    double worst_kkt = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        Eigen::MatrixXd x(200, 10);
        Eigen::VectorXd y(200);
        for (int i = 0; i < 200; ++i) {
            for (int k = 0; k < 10; ++k) x(i, k) = normal(gen);
            y[i] = 0.3 * x(i, 0) - 0.2 * x(i, 1) + 0.1 * x(i, 2) + normal(gen);
        }
        const auto fit = elastic_net_fit(y, x, 0.5 + 0.01 * rep, 0.1 * (rep % 5), 1.0);
        worst_kkt = std::max(worst_kkt, fit.kkt_residual);
    }

    // Orthogonal design: columns of a two-level factorial, X^T X = n I.
    const int n1 = 256, p = 8;
    Eigen::MatrixXd x(n1, p);
    for (int i = 0; i < n1; ++i)
        for (int k = 0; k < p; ++k) x(i, k) = ((i >> k) & 1) ? 1.0 : -1.0;
    Eigen::VectorXd y(n1);
    for (int i = 0; i < n1; ++i) y[i] = 0.4 * x(i, 0) - 0.25 * x(i, 3) + normal(gen);
    const double lambda = 1.0, eta = 0.5, rho = 1.0;
    const auto fit = elastic_net_fit(y, x, lambda, eta, rho);
    const double kappa = (1 + rho * rho) / std::sqrt(n1 * (1 + rho * rho));
    double worst_soft = 0.0;
    for (int k = 0; k < p; ++k) {
        const double c = kappa * x.col(k).dot(y);
        const double soft = std::abs(c) > lambda ? c - std::copysign(lambda, c) : 0.0;
        worst_soft = std::max(worst_soft, std::abs(fit.beta_hat[k] - soft / (kappa * n1 + eta)));
    }
    return {worst_kkt < 1e-8 && worst_soft < 1e-8, "max KKT residual " + fmt("%.2e", worst_kkt) +
                                                       " over 100 instances, soft-threshold gap " +
                                                       fmt("%.2e", worst_soft) + " (both < 1e-8)"};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome determinism() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("carve_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const char* configs[] = {
        R"({"n1":60,"n2":40,"d":4,"rule":{"type":"threshold","lambda":0.8},"family":"laplace",
            "sqrt_n_beta":0.0,"replications":300,"seed":5})",
        R"({"n1":50,"n2":50,"sigma":[[1,0.4,0],[0.4,1,0.3],[0,0.3,1]],"rule":{"type":"top_d","D":1},
            "family":"centered_exponential","regime":{"gamma":0.125,"beta_bar":0.3},"replications":150,
            "mv_n_mc":2000,"seed":6})",
    };
    bool same = true;
    int runs = 0;
    for (int c = 0; c < 2; ++c) {
        const fs::path cfg = dir / ("cfg" + std::to_string(c) + ".json");
        std::ofstream(cfg) << configs[c];
        std::string ref_csv, ref_json, ref_stdout;
        for (const char* jobs : {"1", "2", "4"}) {
            const fs::path out = dir / ("out" + std::to_string(c) + "_" + jobs);
            std::ostringstream so, se;
            const int code = run_cli({"carve", "simulate", "--config", cfg.string(), "--out", out.string(), "--jobs", jobs},
                                     so, se);
            if (code != 0) return {false, "simulate exited with " + std::to_string(code) + ": " + se.str()};
            const auto csv = slurp(out / "records.csv");
            const auto js = slurp(out / "summary.json");
            if (ref_csv.empty()) {
                ref_csv = csv;
                ref_json = js;
                ref_stdout = so.str();
            } else {
                same &= csv == ref_csv && js == ref_json && so.str() == ref_stdout;
            }
            ++runs;
        }
    }
    fs::remove_all(dir);
    return {same, std::to_string(runs) + " runs of 2 configs with --jobs 1, 2, 4: outputs " +
                      (same ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    const std::vector<Criterion> criteria = {
        {1, "exact Gaussian pivot uniformity", 60, uniformity_gaussian},
        {2, "carved interval coverage", 300, coverage_gaussian},
        {3, "convolution identity", 10, convolution},
        {4, "sequence decay rate", 10, seq_decay},
        {5, "multivariate decay rate", 120, mv_decay},
        {6, "Mills sandwich on [-10, 10]", 10, sandwich},
        {7, "implicit randomization moments", 60, moments},
        {8, "transfer of CLT, local alternatives", 600, clt_transfer},
        {9, "rare-regime carving", 900, rare_regime},
        {10, "sequence / multivariate agreement", 60, seq_mv_agreement},
        {11, "elastic-net KKT", 10, elastic_net},
        {12, "determinism across --jobs", 60, determinism},
    };
    int failed = 0;
    int ran = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.pass && in_time;
        if (!pass) ++failed;
        std::printf("%s  #%-2d %s: %s [%.1f s, budget %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.title,
                    o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", OVER BUDGET");
        std::fflush(stdout);
    }
    if (ran == 0) {
        std::fprintf(stderr, "no criterion numbered %d\n", only);
        return 2;
    }
    return failed == 0 ? 0 : 1;
}

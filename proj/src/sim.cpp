#include "carve/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "carve/carve_mv.hpp"
#include "carve/carve_seq.hpp"
#include "carve/errors.hpp"
#include "carve/gauss_core.hpp"
#include "carve/log.hpp"

namespace carve {

namespace {

constexpr long kBatch = 256;
constexpr const char* kUnderflowTag = "RareEventUnderflow: ";

bool is_diagonal(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (i != j && m(i, j) != 0.0) return false;
        }
    }
    return true;
}

void infer_selected(const ExperimentConfig& cfg, const SelectionOutcome& sel, const Eigen::VectorXd& z,
                    const Eigen::VectorXd& augmented, const Eigen::VectorXd& truth, RngStream& rng,
                    ReplicationRecord& rec) {
    const double rho = cfg.rho();
    const bool diagonal = is_diagonal(cfg.sigma);
    std::optional<CarveGeometry> geom;
    if (!diagonal) geom = screening_geometry(cfg.sigma, sel, augmented, rho);
    MvPivotOptions mv_opts;
    mv_opts.n_mc = cfg.mv_n_mc;
    mv_opts.quadrature = cfg.quadrature;

    for (std::size_t k = 0; k < sel.selected.size(); ++k) {
        const int j = sel.selected[k];
        const double c = sel.offset(k, rho);
        rec.truth.push_back(truth[j]);
        double lower = std::nan("");
        double upper = std::nan("");
        if (diagonal) {
            const double sd = std::sqrt(cfg.sigma(j, j));
            const SeqCarveProblem prob{truth[j] / sd, rho, c / sd, sel.signs[k]};
            const auto p = seq_pivot(z[j] / sd, prob, cfg.quadrature);
            rec.pivots.push_back(p.value);
            rec.pivot_se.push_back(0.0);
            if (cfg.intervals) {
                const auto ci = seq_confidence_interval(z[j] / sd, rho, c / sd, sel.signs[k], cfg.level, cfg.quadrature);
                lower = ci.lower * sd;
                upper = ci.upper * sd;
            }
        } else {
            const MvPivotFunction f(z[j], j, *geom, nuisance_statistic(z, cfg.sigma, j), mv_opts, rng);
            const auto p = f(truth[j]);
            rec.pivots.push_back(p.value);
            rec.pivot_se.push_back(p.std_error);
            if (cfg.intervals) {
                const auto ci = f.confidence_interval(cfg.level);
                lower = ci.lower;
                upper = ci.upper;
            }
        }
        rec.carved_lower.push_back(lower);
        rec.carved_upper.push_back(upper);
    }
}

template <class F>
void parallel_for(long begin, long end, int jobs, const F& body) {
    const long count = end - begin;
    const int workers = static_cast<int>(std::min<long>(std::max(1, jobs), count));
    if (workers <= 1) {
        for (long i = begin; i < end; ++i) body(i);
        return;
    }
    std::atomic<long> next{begin};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (long i = next.fetch_add(1); i < end; i = next.fetch_add(1)) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace

RandomizationMode parse_mode(const std::string& name) {
    if (name == "implicit_carving" || name == "implicit") return RandomizationMode::implicit_carving;
    if (name == "gaussian") return RandomizationMode::gaussian;
    throw ConfigError("unknown randomization mode '" + name + "'");
}

const char* mode_name(RandomizationMode m) {
    return m == RandomizationMode::gaussian ? "gaussian" : "implicit_carving";
}

double ExperimentConfig::rho() const { return std::sqrt(static_cast<double>(n2) / static_cast<double>(n1)); }

Eigen::VectorXd ExperimentConfig::mean_statistic() const {
    if (!regime) return sqrt_n_beta;
    return -std::pow(static_cast<double>(n()), regime->gamma) * regime->beta_bar.cwiseAbs();
}

void ExperimentConfig::validate() const {
    if (n1 < 2) throw ConfigError("n1 must be >= 2");
    if (n2 < 1) throw ConfigError("n2 must be >= 1 for carved inference");
    if (replications < 100) throw ConfigError("replications must be >= 100");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0,1)");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (target_pivots < 0) throw ConfigError("target_pivots must be >= 0");
    if (mv_n_mc < 1000) throw ConfigError("mv_n_mc must be >= 1000");
    const auto d = sigma.rows();
    if (d < 1 || sigma.cols() != d) throw ConfigError("sigma must be a non-empty square matrix");
    if (regime) {
        if (regime->beta_bar.size() != d) throw ConfigError("regime.beta_bar has wrong dimension");
        if (!(regime->gamma >= 0.0 && regime->gamma < 0.5)) throw ConfigError("regime.gamma must lie in [0, 1/2)");
    } else if (sqrt_n_beta.size() != d) {
        throw ConfigError("sqrt_n_beta has wrong dimension");
    }
    GenerativeSpec{family, mean_statistic(), sigma}.validate();
    try {
        validate_rule(rule);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (std::holds_alternative<ElasticNet>(rule)) throw ConfigError("simulate supports screening rules only");
    if (const auto* t = std::get_if<FixedThreshold>(&rule); t && t->lambda.size() != d) {
        throw ConfigError("threshold lambda has wrong dimension");
    }
    if (const auto* t = std::get_if<TopD>(&rule); t && t->count >= d) throw ConfigError("top_d requires D < d");
    quadrature.validate();
}

ReplicationRecord run_replication(const ExperimentConfig& cfg, long r) {
    ReplicationRecord rec;
    rec.replication = r;
    RngStream rng(cfg.master_seed, static_cast<std::uint64_t>(r));
    try {
        const int n = cfg.n();
        const double root_n = std::sqrt(static_cast<double>(n));
        const double rho = cfg.rho();
        const Eigen::VectorXd truth = cfg.mean_statistic();
        const GenerativeSpec spec{cfg.family, truth / root_n, cfg.sigma};
        const Eigen::MatrixXd x = sample_triangular_array(spec, n, rng);
        const Eigen::VectorXd mean_all = x.colwise().mean().transpose();
        const Eigen::VectorXd mean1 = x.topRows(cfg.n1).colwise().mean().transpose();
        const Eigen::VectorXd mean2 = x.bottomRows(cfg.n2).colwise().mean().transpose();
        const Eigen::VectorXd z = root_n * mean_all;
        Eigen::VectorXd w;
        if (cfg.mode == RandomizationMode::implicit_carving) {
            w = root_n * (mean1 - mean_all);
        } else {
            Eigen::VectorXd g(cfg.dim());
            for (int i = 0; i < cfg.dim(); ++i) g[i] = rng.normal();
            const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(cfg.sigma).matrixL();
            w = rho * (chol * g);
        }
        const Eigen::VectorXd augmented = z + w;
        const Eigen::VectorXd z1 = augmented / std::sqrt(1.0 + rho * rho);
        const SelectionOutcome sel = apply_screening(cfg.rule, z1);
        rec.selected = sel.selected;
        rec.signs = sel.signs;
        if (sel.empty()) {
            rec.empty = true;
            return rec;
        }
        infer_selected(cfg, sel, z, augmented, truth, rng, rec);
        const double zq = std_normal_quantile(0.5 * (1.0 + cfg.level));
        const double scale = std::sqrt(static_cast<double>(n) / cfg.n2);
        for (int j : sel.selected) {
            const double centre = root_n * mean2[j];
            const double half = zq * scale * std::sqrt(cfg.sigma(j, j));
            rec.split_lower.push_back(centre - half);
            rec.split_upper.push_back(centre + half);
        }
    } catch (const RareEventUnderflow& e) {
        rec.error = std::string(kUnderflowTag) + e.what();
    } catch (const Error& e) {
        rec.error = e.what();
    }
    if (!rec.error.empty()) {
        rec.pivots.clear();
        rec.pivot_se.clear();
        rec.truth.clear();
        rec.carved_lower.clear();
        rec.carved_upper.clear();
        rec.split_lower.clear();
        rec.split_upper.clear();
        log_debug("replication " + std::to_string(r) + ": " + rec.error);
    }
    return rec;
}

ExperimentResult run_two_stage(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult out;
    out.config = cfg;
    long pooled = 0;
    for (long begin = 0; begin < cfg.replications; begin += kBatch) {
        const long end = std::min(cfg.replications, begin + kBatch);
        std::vector<ReplicationRecord> batch(static_cast<std::size_t>(end - begin));
        parallel_for(begin, end, cfg.jobs,
                     [&](long r) { batch[static_cast<std::size_t>(r - begin)] = run_replication(cfg, r); });
        for (auto& rec : batch) {
            pooled += static_cast<long>(rec.pivots.size());
            out.records.push_back(std::move(rec));
            if (cfg.target_pivots > 0 && pooled >= cfg.target_pivots) return out;
        }
    }
    if (cfg.target_pivots > 0) {
        log_warn("target_pivots not reached: " + std::to_string(pooled) + " pivots after " +
                 std::to_string(cfg.replications) + " replications");
    }
    return out;
}

std::vector<double> pooled_pivots(const std::vector<ReplicationRecord>& records) {
    std::vector<double> out;
    for (const auto& r : records) out.insert(out.end(), r.pivots.begin(), r.pivots.end());
    return out;
}

UniformityReport uniformity_report(std::vector<double> pivots) {
    if (pivots.size() < 100) throw InsufficientData("uniformity_report: needs at least 100 pivots");
    std::sort(pivots.begin(), pivots.end());
    const double n = static_cast<double>(pivots.size());
    double d = 0.0;
    for (std::size_t i = 0; i < pivots.size(); ++i) {
        const double x = std::clamp(pivots[i], 0.0, 1.0);
        d = std::max({d, (i + 1.0) / n - x, x - static_cast<double>(i) / n});
    }
    return {d, static_cast<long>(pivots.size())};
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw InsufficientData("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    return d;
}

CoverageStat coverage_of(const std::vector<IntervalOutcome>& intervals) {
    if (intervals.size() < 100) throw InsufficientData("coverage: needs at least 100 intervals");
    CoverageStat s;
    s.count = static_cast<long>(intervals.size());
    std::vector<double> lengths;
    lengths.reserve(intervals.size());
    long hits = 0;
    for (const auto& iv : intervals) {
        if (iv.lower <= iv.truth && iv.truth <= iv.upper) ++hits;
        lengths.push_back(iv.upper > iv.lower ? iv.upper - iv.lower : 0.0);
    }
    const double n = static_cast<double>(s.count);
    s.coverage = hits / n;
    s.std_error = std::sqrt(s.coverage * (1.0 - s.coverage) / n);
    const auto mid = lengths.begin() + static_cast<std::ptrdiff_t>(lengths.size() / 2);
    std::nth_element(lengths.begin(), mid, lengths.end());
    if (lengths.size() % 2 == 1) {
        s.median_length = *mid;
    } else {
        const double hi = *mid;
        const double lo = *std::max_element(lengths.begin(), mid);
        s.median_length = 0.5 * (lo + hi);
    }
    return s;
}

CoverageReport coverage_report(const std::vector<ReplicationRecord>& records, double level) {
    std::vector<IntervalOutcome> carved;
    std::vector<IntervalOutcome> split;
    for (const auto& r : records) {
        if (!r.ok()) continue;
        for (std::size_t k = 0; k < r.truth.size(); ++k) {
            if (!std::isnan(r.carved_lower[k])) carved.push_back({r.carved_lower[k], r.carved_upper[k], r.truth[k]});
            split.push_back({r.split_lower[k], r.split_upper[k], r.truth[k]});
        }
    }
    CoverageReport rep;
    rep.level = level;
    rep.carved = coverage_of(carved);
    rep.split = coverage_of(split);
    return rep;
}

std::vector<SweepRow> regime_sweep(const ExperimentConfig& base_cfg, const std::vector<double>& gammas,
                                   const std::vector<int>& ns, const std::vector<RandomizationMode>& modes) {
    if (!base_cfg.regime) throw ConfigError("regime_sweep: base config needs a regime (beta_bar)");
    std::vector<SweepRow> rows;
    const double frac1 = static_cast<double>(base_cfg.n1) / base_cfg.n();
    for (double gamma : gammas) {
        for (int n : ns) {
            for (auto mode : modes) {
                ExperimentConfig cfg = base_cfg;
                cfg.regime->gamma = gamma;
                cfg.n1 = static_cast<int>(std::lround(frac1 * n));
                cfg.n2 = n - cfg.n1;
                cfg.mode = mode;
                cfg.intervals = false;
                SweepRow row;
                row.gamma = gamma;
                row.n = n;
                row.mode = mode;
                row.family = cfg.family;
                const auto res = run_two_stage(cfg);
                for (const auto& r : res.records) {
                    if (r.error.rfind(kUnderflowTag, 0) == 0) ++row.underflows;
                }
                try {
                    const auto u = uniformity_report(pooled_pivots(res.records));
                    row.ks_distance = u.ks_distance;
                    row.n_pivots = u.n_pivots;
                    row.valid = true;
                } catch (const InsufficientData& e) {
                    row.note = e.what();
                }
                if (row.underflows > 0) {
                    row.note += (row.note.empty() ? "" : "; ") + std::to_string(row.underflows) + " underflowed replications";
                }
                rows.push_back(row);
            }
        }
    }
    return rows;
}

}  // namespace carve

#include "carve/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "carve/errors.hpp"
#include "carve/gauss_core.hpp"

namespace carve {

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    auto out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(row);
    }
    return out;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

bool within(const Eigen::MatrixXd& est, const Eigen::MatrixXd& target, const Eigen::MatrixXd& se, double k) {
    return ((est - target).cwiseAbs().array() <= k * se.array()).all();
}

}  // namespace

double seq_selprob_exact(double m, double rho) { return std_normal_cdf(m / std::sqrt(1.0 + rho * rho)); }

double seq_log_selprob_asymptotic(double m, double rho) {
    if (!(m <= -2.0)) throw DomainError("seq_selprob_asymptotic: requires m <= -2");
    if (!(rho > 0.0)) throw DomainError("seq_selprob_asymptotic: rho must be positive");
    const double v = 1.0 + rho * rho;
    return -std::log(-m) - m * m / (2.0 * v) + 0.5 * std::log(v) - kLogSqrt2Pi;
}

double seq_selprob_asymptotic(double m, double rho) { return std::exp(seq_log_selprob_asymptotic(m, rho)); }

Eigen::MatrixXd alpha_ratio_matrix(const Eigen::VectorXd& alpha) {
    const auto k = alpha.size();
    Eigen::MatrixXd r(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) r(a, b) = alpha[a] / alpha[b];
    }
    return r;
}

double l_constant(const Eigen::MatrixXd& qqt, const Eigen::MatrixXd& qtq, const Eigen::MatrixXd& alpha_bar_ratios) {
    const auto k = qqt.rows();
    if (qqt.cols() != k || alpha_bar_ratios.rows() != k || alpha_bar_ratios.cols() != k || qtq.rows() != qtq.cols()) {
        throw DomainError("l_constant: dimension mismatch");
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(k, k) + qqt;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw NumericError("l_constant: I + QQ^T is singular");
    const Eigen::MatrixXd inv = lu.inverse();
    double prod = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) s += inv(j, c) * alpha_bar_ratios(c, j);
        prod *= s;
    }
    const double det = (Eigen::MatrixXd::Identity(qtq.rows(), qtq.cols()) + qtq).determinant();
    if (!(det > 0.0) || prod == 0.0) throw NumericError("l_constant: degenerate constant");
    return 1.0 / (prod * std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(k)) * std::sqrt(det));
}

double mv_log_selprob_asymptotic(const QAlpha& qa) {
    const auto k = qa.q.rows();
    const Eigen::VectorXd& alpha = qa.sqrt_n_alpha;
    if (alpha.size() != k || k < 1) throw DomainError("mv_selprob_asymptotic: inconsistent Q and alpha");
    if (alpha.cwiseAbs().minCoeff() < 2.0) throw DomainError("mv_selprob_asymptotic: requires |alpha_j| >= 2");
    const Eigen::MatrixXd qqt = qa.q * qa.q.transpose();
    const Eigen::MatrixXd qtq = qa.q.transpose() * qa.q;
    const Eigen::MatrixXd m = (Eigen::MatrixXd::Identity(k, k) + qqt).inverse();
    const double l = l_constant(qqt, qtq, alpha_ratio_matrix(alpha));
    if (!(l > 0.0)) throw NumericError("mv_selprob_asymptotic: non-positive constant");
    return -0.5 * alpha.dot(m * alpha) - alpha.cwiseAbs().array().log().sum() + std::log(l);
}

double mv_selprob_asymptotic(const QAlpha& qa) { return std::exp(mv_log_selprob_asymptotic(qa)); }

std::vector<ConvolutionRow> convolution_check(const std::vector<double>& ms, const std::vector<double>& rhos,
                                              const QuadratureConfig& cfg) {
    std::vector<ConvolutionRow> rows;
    for (double rho : rhos) {
        if (!(rho > 0.0)) throw DomainError("convolution_check: rho must be positive");
        for (double m : ms) {
            ConvolutionRow r;
            r.m = m;
            r.rho = rho;
            r.quadrature =
                gauss_expectation([&](double z) { return std_normal_survival(-(z + m) / rho); }, cfg).value;
            r.exact = seq_selprob_exact(m, rho);
            r.abs_error = std::abs(r.quadrature - r.exact);
            rows.push_back(r);
        }
    }
    return rows;
}

std::vector<SeqDecayRow> seq_decay_table(const std::vector<double>& ms, double rho) {
    std::vector<SeqDecayRow> rows;
    for (double m : ms) {
        SeqDecayRow r;
        r.m = m;
        r.exact = seq_selprob_exact(m, rho);
        r.approx = seq_selprob_asymptotic(m, rho);
        r.rel_error = std::abs(r.approx / r.exact - 1.0);
        rows.push_back(r);
    }
    return rows;
}

std::vector<MvDecayRow> mv_decay_table(const Eigen::MatrixXd& q, const Eigen::VectorXd& alpha_bar,
                                       const std::vector<double>& as, long n_mc, std::uint64_t seed,
                                       SelectionProbMethod method) {
    if (alpha_bar.size() != q.rows()) throw DomainError("mv_decay_table: alpha_bar has wrong size");
    std::vector<MvDecayRow> rows;
    for (std::size_t i = 0; i < as.size(); ++i) {
        QAlpha qa{q, as[i] * alpha_bar};
        RngStream rng(seed, i);
        const auto est = mv_selection_prob(qa, n_mc, rng, method);
        MvDecayRow r;
        r.a = as[i];
        r.exact = est.probability;
        r.exact_se = est.std_error;
        r.approx = mv_selprob_asymptotic(qa);
        r.ratio = r.exact / r.approx;
        r.ratio_se = r.exact_se / r.approx;
        rows.push_back(r);
    }
    return rows;
}

MvSandwich mv_sandwich_bounds(const QAlpha& qa, long n_mc, RngStream& rng) {
    const auto k = qa.q.rows();
    const auto d = qa.q.cols();
    if (n_mc < 1000) throw DomainError("mv_sandwich_bounds: n_mc must be >= 1000");
    const Eigen::VectorXd& alpha = qa.sqrt_n_alpha;
    const Eigen::MatrixXd qqt = qa.q * qa.q.transpose();
    // QQ^T and (I + QQ^T)^{-1} commute, so the eigenvalues of their product are lambda / (1 + lambda).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(qqt, Eigen::EigenvaluesOnly);
    const double top = std::max(0.0, es.eigenvalues().maxCoeff());
    MvSandwich out;
    out.q = std::sqrt(top / (1.0 + top));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(qqt);
    if (!lu.isInvertible()) throw NumericError("mv_sandwich_bounds: QQ^T is singular");
    out.remainder = 2.0 * std::exp(-0.5 * out.q * out.q * alpha.dot(lu.solve(alpha)));
    out.approx = mv_selprob_asymptotic(qa);

    Eigen::VectorXd z(d);
    double sl = 0.0, sl2 = 0.0, su = 0.0, su2 = 0.0;
    for (long s = 0; s < n_mc; ++s) {
        for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
        const Eigen::VectorXd qz = qa.q * z;
        bool inside = true;
        for (Eigen::Index j = 0; j < k && inside; ++j) inside = std::abs(qz[j]) < out.q * std::abs(alpha[j]);
        if (!inside) continue;
        double l = 1.0, u = 1.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            l *= mills_lower(qz[j] + alpha[j]);
            u *= mills_upper(qz[j] + alpha[j]);
        }
        sl += l;
        sl2 += l * l;
        su += u;
        su2 += u * u;
    }
    const double n = static_cast<double>(n_mc);
    auto se = [&](double s, double s2) { return std::sqrt(std::max(0.0, (s2 / n - (s / n) * (s / n)) / (n - 1.0))); };
    out.lower = sl / n;
    out.lower_se = se(sl, sl2);
    out.upper = su / n + out.remainder;
    out.upper_se = se(su, su2);
    return out;
}

MomentsReport randomization_moments_check(int n1, int n2, const GenerativeSpec& spec, long n_mc, RngStream& rng) {
    if (n1 < 2 || n2 < 0) throw DomainError("randomization_moments_check: requires n1 >= 2 and n2 >= 0");
    if (n_mc < 100) throw DomainError("randomization_moments_check: n_mc must be >= 100");
    spec.validate();
    const int d = spec.dim();
    const int n = n1 + n2;
    const double root_n = std::sqrt(static_cast<double>(n));
    Eigen::MatrixXd w(n_mc, d);
    Eigen::MatrixXd z(n_mc, d);
    for (long r = 0; r < n_mc; ++r) {
        const Eigen::MatrixXd x = sample_triangular_array(spec, n, rng);
        const Eigen::RowVectorXd mean1 = x.topRows(n1).colwise().mean();
        const Eigen::RowVectorXd mean_all = x.colwise().mean();
        w.row(r) = n2 == 0 ? Eigen::RowVectorXd::Zero(d) : Eigen::RowVectorXd(root_n * (mean1 - mean_all));
        z.row(r) = root_n * mean_all;
    }
    const double reps = static_cast<double>(n_mc);
    MomentsReport rep;
    rep.n1 = n1;
    rep.n2 = n2;
    rep.replications = n_mc;
    rep.mean = w.colwise().mean().transpose();
    const Eigen::MatrixXd wc = w.rowwise() - rep.mean.transpose();
    const Eigen::MatrixXd zc = z.rowwise() - z.colwise().mean();
    rep.mean_se = (wc.array().square().colwise().sum() / (reps - 1.0)).sqrt().transpose() / std::sqrt(reps);
    rep.cov = Eigen::MatrixXd(d, d);
    rep.cov_se = Eigen::MatrixXd(d, d);
    rep.cross = Eigen::MatrixXd(d, d);
    rep.cross_se = Eigen::MatrixXd(d, d);
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            const Eigen::ArrayXd pw = wc.col(a).array() * wc.col(b).array();
            const Eigen::ArrayXd px = zc.col(a).array() * wc.col(b).array();
            rep.cov(a, b) = pw.sum() / (reps - 1.0);
            rep.cross(a, b) = px.sum() / (reps - 1.0);
            rep.cov_se(a, b) = std::sqrt((pw - pw.mean()).square().sum() / (reps - 1.0) / reps);
            rep.cross_se(a, b) = std::sqrt((px - px.mean()).square().sum() / (reps - 1.0) / reps);
        }
    }
    rep.cov_target = (static_cast<double>(n2) / n1) * spec.sigma;
    rep.mean_ok = within(rep.mean, Eigen::VectorXd::Zero(d), rep.mean_se, 3.0);
    rep.cov_ok = within(rep.cov, rep.cov_target, rep.cov_se, 3.0);
    rep.cross_ok = within(rep.cross, Eigen::MatrixXd::Zero(d, d), rep.cross_se, 3.0);
    return rep;
}

std::vector<double> make_grid(double from, double to, double step) {
    if (!(step > 0.0) || !(to >= from)) throw DomainError("make_grid: need step > 0 and to >= from");
    std::vector<double> g;
    const long count = std::lround(std::floor((to - from) / step + 1e-9));
    for (long i = 0; i <= count; ++i) g.push_back(from + static_cast<double>(i) * step);
    return g;
}

SandwichReport sandwich_report(const std::vector<double>& grid, const SandwichOptions& opts) {
    SandwichReport rep;
    for (double x : grid) {
        SandwichRow row{x, mills_lower(x) * (1.0 + opts.lower_perturbation), std_normal_survival(x), mills_upper(x)};
        const bool ok = row.lower <= row.survival && row.survival <= row.upper;
        if (!ok) {
            if (rep.violations == 0) rep.first_violation = x;
            rep.last_violation = x;
            ++rep.violations;
        } else if (row.survival > 0.0) {
            rep.max_lower_slack = std::max(rep.max_lower_slack, (row.survival - row.lower) / row.survival);
            rep.max_upper_slack = std::max(rep.max_upper_slack, (row.upper - row.survival) / row.survival);
        }
        rep.rows.push_back(row);
    }
    if (opts.throw_on_violation && rep.violations > 0) {
        throw InvariantFailure("Mills sandwich violated at " + std::to_string(rep.violations) + " grid points in [" +
                               std::to_string(rep.first_violation) + ", " + std::to_string(rep.last_violation) + "]");
    }
    return rep;
}

void to_json(nlohmann::json& j, const ConvolutionRow& r) {
    j = {{"m", r.m}, {"rho", r.rho}, {"quadrature", r.quadrature}, {"exact", r.exact}, {"abs_error", r.abs_error}};
}

void to_json(nlohmann::json& j, const SeqDecayRow& r) {
    j = {{"m", r.m}, {"exact", r.exact}, {"approx", r.approx}, {"rel_error", r.rel_error}};
}

void to_json(nlohmann::json& j, const MvDecayRow& r) {
    j = {{"a", r.a},         {"exact", r.exact}, {"exact_se", r.exact_se},
         {"approx", r.approx}, {"ratio", r.ratio}, {"ratio_se", r.ratio_se}};
}

void to_json(nlohmann::json& j, const MvSandwich& r) {
    j = {{"lower", r.lower},         {"lower_se", r.lower_se}, {"upper", r.upper}, {"upper_se", r.upper_se},
         {"remainder", r.remainder}, {"q", r.q},               {"approx", r.approx}};
}

void to_json(nlohmann::json& j, const MomentsReport& r) {
    j = {{"n1", r.n1},
         {"n2", r.n2},
         {"replications", r.replications},
         {"mean", vector_json(r.mean)},
         {"mean_se", vector_json(r.mean_se)},
         {"cov", matrix_json(r.cov)},
         {"cov_se", matrix_json(r.cov_se)},
         {"cov_target", matrix_json(r.cov_target)},
         {"cross_cov", matrix_json(r.cross)},
         {"cross_cov_se", matrix_json(r.cross_se)},
         {"mean_ok", r.mean_ok},
         {"cov_ok", r.cov_ok},
         {"cross_ok", r.cross_ok}};
}

void to_json(nlohmann::json& j, const SandwichReport& r) {
    j = {{"points", r.rows.size()},
         {"violations", r.violations},
         {"max_lower_slack", r.max_lower_slack},
         {"max_upper_slack", r.max_upper_slack}};
    if (r.violations > 0) {
        j["first_violation"] = r.first_violation;
        j["last_violation"] = r.last_violation;
    }
}

}  // namespace carve

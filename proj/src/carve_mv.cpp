#include "carve/carve_mv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "carve/detail/inversion.hpp"
#include "carve/errors.hpp"
#include "carve/gauss_core.hpp"

namespace carve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLogTiny = std::log(1e-300);

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (m + m.transpose()));
    if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + " is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

// log(mean(exp(v))) ignoring -inf entries.
double log_mean_exp(const std::vector<double>& v, double& shift) {
    shift = -kInf;
    for (double x : v) shift = std::max(shift, x);
    if (shift == -kInf) return -kInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - shift);
    return shift + std::log(s / static_cast<double>(v.size()));
}

}  // namespace

void CarveGeometry::validate() const {
    const auto d = sigma.rows();
    if (sigma.cols() != d || q_e.rows() != d || r_e.size() != d || p_e.rows() != d || p_e.cols() != d ||
        omega.rows() != d || omega.cols() != d) {
        throw DomainError("CarveGeometry: inconsistent dimensions");
    }
    if (q_e.cols() < 1) throw DomainError("CarveGeometry: empty selection");
    if (q_e.cols() > 50) throw DomainError("CarveGeometry: |E| above 50 is not supported");
    if (!(rho > 0.0)) throw DomainError("CarveGeometry: rho must be positive");
    if (!sigma.allFinite() || !q_e.allFinite() || !r_e.allFinite() || !p_e.allFinite() || !omega.allFinite()) {
        throw DomainError("CarveGeometry: non-finite entries");
    }
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff())) {
        throw DomainError("CarveGeometry: sigma not symmetric");
    }
    const Eigen::MatrixXd sigma_inv = spd_inverse(sigma, "sigma");
    spd_inverse(q_e.transpose() * sigma_inv * q_e, "Q_E^T sigma^{-1} Q_E");
    spd_inverse(omega, "randomization covariance");
}

CarveGeometry screening_geometry(const Eigen::MatrixXd& sigma, const SelectionOutcome& outcome,
                                 const Eigen::VectorXd& augmented, double rho) {
    if (outcome.empty()) throw DomainError("screening_geometry: empty selection");
    const auto d = sigma.rows();
    if (augmented.size() != d) throw DomainError("screening_geometry: augmented statistic has wrong size");
    CarveGeometry g;
    g.sigma = sigma;
    g.rho = rho;
    g.p_e = -Eigen::MatrixXd::Identity(d, d);
    g.omega = rho * rho * sigma;
    g.q_e = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(outcome.selected.size()));
    g.r_e = augmented;
    for (std::size_t k = 0; k < outcome.selected.size(); ++k) {
        const int j = outcome.selected[k];
        g.q_e(j, static_cast<Eigen::Index>(k)) = outcome.signs[k];
        g.r_e[j] = outcome.offset(k, rho);
    }
    g.validate();
    return g;
}

ElasticNetCarve elastic_net_geometry(const ElasticNetFit& fit, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                     double noise_variance) {
    const auto p = X.cols();
    const auto k = static_cast<Eigen::Index>(fit.active.size());
    if (fit.beta_hat.size() != p || y.size() != X.rows()) throw DomainError("elastic_net_geometry: dimension mismatch");
    if (k == 0) throw DomainError("elastic_net_geometry: empty active set");
    if (!(noise_variance > 0.0)) throw DomainError("elastic_net_geometry: noise variance must be positive");

    ElasticNetCarve out;
    out.order = fit.active;
    out.order.insert(out.order.end(), fit.inactive.begin(), fit.inactive.end());
    const double n = static_cast<double>(X.rows());
    const double root_n = std::sqrt(n);
    Eigen::MatrixXd xp(X.rows(), p);
    for (Eigen::Index c = 0; c < p; ++c) xp.col(c) = X.col(out.order[static_cast<std::size_t>(c)]);
    const Eigen::MatrixXd xe = xp.leftCols(k);
    const Eigen::MatrixXd xo = xp.rightCols(p - k);

    const Eigen::MatrixXd u = xe.transpose() * xe / n;
    const Eigen::MatrixXd v = xo.transpose() * xe / n;
    const Eigen::MatrixXd u_inv = spd_inverse(u, "active Gram block");

    const Eigen::VectorXd ols = u_inv * (xe.transpose() * y / n);
    out.z.resize(p);
    out.z.head(k) = root_n * ols;
    out.z.tail(p - k) = xo.transpose() * (y - xe * ols) / root_n;

    CarveGeometry& g = out.geometry;
    g.rho = fit.rho;
    g.p_e = Eigen::MatrixXd::Zero(p, p);
    g.p_e.topLeftCorner(k, k) = -u;
    g.p_e.bottomLeftCorner(p - k, k) = -v;
    g.p_e.bottomRightCorner(p - k, p - k) = -Eigen::MatrixXd::Identity(p - k, p - k);

    // T = sqrt(n) beta_hat_E, so the ridge term enters as eta / sqrt(n).
    g.q_e = Eigen::MatrixXd::Zero(p, k);
    g.q_e.topRows(k) = u + (fit.eta / root_n) * Eigen::MatrixXd::Identity(k, k);
    g.q_e.bottomRows(p - k) = v;
    for (Eigen::Index c = 0; c < k; ++c) g.q_e.col(c) *= fit.active_signs[static_cast<std::size_t>(c)];

    g.r_e.resize(p);
    for (Eigen::Index c = 0; c < k; ++c) g.r_e[c] = fit.lambda * fit.active_signs[static_cast<std::size_t>(c)];
    g.r_e.tail(p - k) = fit.inactive_subgradient;

    g.sigma = Eigen::MatrixXd::Zero(p, p);
    g.sigma.topLeftCorner(k, k) = noise_variance * u_inv;
    g.sigma.bottomRightCorner(p - k, p - k) =
        noise_variance * (xo.transpose() * xo / n - v * u_inv * v.transpose());
    g.sigma = 0.5 * (g.sigma + g.sigma.transpose());
    g.omega = fit.rho * fit.rho * g.p_e * g.sigma * g.p_e.transpose();
    g.omega = 0.5 * (g.omega + g.omega.transpose());
    g.validate();
    return out;
}

QAlpha build_q_alpha(const CarveGeometry& geom, const Eigen::VectorXd& sqrt_n_beta) {
    geom.validate();
    if (sqrt_n_beta.size() != geom.dim()) throw DomainError("build_q_alpha: beta has wrong size");
    const Eigen::MatrixXd omega_inv = spd_inverse(geom.omega, "randomization covariance");
    const Eigen::MatrixXd qt_oi = geom.q_e.transpose() * omega_inv;
    const Eigen::MatrixXd a = qt_oi * geom.q_e;
    const Eigen::MatrixXd a_inv_half = sym_inv_sqrt(a);
    QAlpha out;
    out.q = a_inv_half * qt_oi * geom.p_e * sym_sqrt(geom.sigma);
    out.sqrt_n_alpha = a_inv_half * qt_oi * (geom.p_e * sqrt_n_beta + geom.r_e);
    return out;
}

ProbabilityEstimate mv_selection_prob(const QAlpha& qa, long n_mc, RngStream& rng, SelectionProbMethod method) {
    const auto k = qa.q.rows();
    const auto d = qa.q.cols();
    if (qa.sqrt_n_alpha.size() != k || k < 1) throw DomainError("mv_selection_prob: inconsistent Q and alpha");
    if (k > 50) throw DomainError("mv_selection_prob: |E| above 50 is not supported");
    if (method == SelectionProbMethod::orthant) {
        MvnSpec spec{-qa.sqrt_n_alpha, Eigen::MatrixXd::Identity(k, k) + qa.q * qa.q.transpose()};
        const auto est = mvn_orthant_mc(spec, n_mc, rng);
        return {est.estimate, est.std_error};
    }
    if (n_mc < 1000) throw DomainError("mv_selection_prob: n_mc must be >= 1000");
    Eigen::VectorXd z(d);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (long s = 0; s < n_mc; ++s) {
        for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
        double log_prod = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            log_prod += std_normal_log_survival(qa.q.row(j).dot(z) + qa.sqrt_n_alpha[j]);
        }
        const double v = std::exp(log_prod);
        sum += v;
        sum_sq += v * v;
    }
    const double n = static_cast<double>(n_mc);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

double mv_carved_density_ratio(const Eigen::VectorXd& z, const QAlpha& qa, double selprob) {
    if (!(selprob > 0.0)) throw DomainError("mv_carved_density_ratio: selprob must be positive");
    if (z.size() != qa.q.cols()) throw DomainError("mv_carved_density_ratio: z has wrong size");
    double log_prod = 0.0;
    for (Eigen::Index j = 0; j < qa.q.rows(); ++j) {
        log_prod += std_normal_log_survival(qa.q.row(j).dot(z) + qa.sqrt_n_alpha[j]);
    }
    return std::exp(log_prod - std::log(selprob));
}

double orthant_product_approximation(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw DomainError("orthant_product_approximation: dimension mismatch");
    }
    const Eigen::VectorXd w = sym_inv_sqrt(cov) * mean;
    double log_p = 0.0;
    for (Eigen::Index k = 0; k < w.size(); ++k) log_p += std_normal_log_survival(-w[k]);
    return std::exp(log_p);
}

Eigen::VectorXd nuisance_statistic(const Eigen::VectorXd& z, const Eigen::MatrixXd& sigma, int j) {
    if (sigma.rows() != z.size() || sigma.cols() != z.size()) throw DomainError("nuisance_statistic: dimension mismatch");
    if (j < 0 || j >= z.size()) throw DomainError("nuisance_statistic: index out of range");
    Eigen::VectorXd n = z - sigma.col(j) * (z[j] / sigma(j, j));
    n[j] = 0.0;
    return n;
}

MvPivotFunction::MvPivotFunction(double z_obs, int j, const CarveGeometry& geom, const Eigen::VectorXd& nuisance,
                                 const MvPivotOptions& opts, RngStream& rng)
    : z_obs_(z_obs), quad_(opts.quadrature) {
    geom.validate();
    quad_.validate();
    const auto d = geom.dim();
    const auto k = geom.n_selected();
    if (j < 0 || j >= d) throw DomainError("mv_pivot: target index out of range");
    if (nuisance.size() != d) throw DomainError("mv_pivot: nuisance has wrong size");
    if (std::isnan(z_obs)) throw DomainError("mv_pivot: NaN statistic");
    var_j_ = geom.sigma(j, j);

    // Z(z) = N + e z with e = sigma_{.,j} / sigma_jj; then a(z) = P_E Z(z) + r_E = a0 + a1 z.
    Eigen::VectorXd base = nuisance;
    base[j] = 0.0;
    const Eigen::VectorXd e = geom.sigma.col(j) / var_j_;
    const Eigen::VectorXd a0 = geom.p_e * base + geom.r_e;
    const Eigen::VectorXd a1 = geom.p_e * e;

    const Eigen::MatrixXd omega_inv = spd_inverse(geom.omega, "randomization covariance");
    const Eigen::MatrixXd qt_oi = geom.q_e.transpose() * omega_inv;
    const Eigen::MatrixXd a_mat = qt_oi * geom.q_e;
    const Eigen::MatrixXd a_inv = spd_inverse(a_mat, "Q_E^T omega^{-1} Q_E");
    const Eigen::VectorXd b0 = qt_oi * a0;
    const Eigen::VectorXd b1 = qt_oi * a1;

    // Quadratic residual of completing the square in t; its z-dependence tilts the weight on z.
    s2_ = a1.dot(omega_inv * a1) - b1.dot(a_inv * b1);
    s1_ = a1.dot(omega_inv * a0) - b1.dot(a_inv * b0);
    if (1.0 / var_j_ + s2_ <= 0.0) throw NumericError("mv_pivot: z-weight is not normalisable");

    const Eigen::VectorXd mu0 = -a_inv * b0;
    const Eigen::VectorXd mu1 = -a_inv * b1;

    if (k == 1 && !opts.force_mc) {
        exact_ = true;
        mu0_ = mu0[0];
        mu1_ = mu1[0];
        inner_sd_ = std::sqrt(a_inv(0, 0));
        return;
    }

    if (opts.n_mc < 1000) throw DomainError("mv_pivot: n_mc must be >= 1000");
    const auto f = factor_covariance(a_inv);
    n_samples_ = opts.n_mc;
    lo_.resize(static_cast<std::size_t>(n_samples_));
    hi_.resize(static_cast<std::size_t>(n_samples_));
    Eigen::VectorXd g(k);
    for (long s = 0; s < n_samples_; ++s) {
        for (Eigen::Index i = 0; i < k; ++i) g[i] = rng.normal();
        const Eigen::VectorXd shift = mu0 + f.factor * g;
        // Feasible set {z : shift + mu1 z > 0} is an interval.
        double lo = -kInf;
        double hi = kInf;
        for (Eigen::Index i = 0; i < k; ++i) {
            if (mu1[i] > 0.0) {
                lo = std::max(lo, -shift[i] / mu1[i]);
            } else if (mu1[i] < 0.0) {
                hi = std::min(hi, -shift[i] / mu1[i]);
            } else if (shift[i] <= 0.0) {
                lo = kInf;
                hi = -kInf;
            }
        }
        lo_[static_cast<std::size_t>(s)] = lo;
        hi_[static_cast<std::size_t>(s)] = hi;
    }
}

PivotResult MvPivotFunction::operator()(double mean_j) const {
    if (!std::isfinite(mean_j)) throw DomainError("mv_pivot: non-finite mean");
    // z-weight is Gaussian: N(mean_w, 1 / tau).
    const double tau = 1.0 / var_j_ + s2_;
    const double mean_w = (mean_j / var_j_ - s1_) / tau;
    const double root_tau = std::sqrt(tau);

    if (exact_) {
        const double u0 = (z_obs_ - mean_w) * root_tau;
        const double p = -(mu0_ + mu1_ * mean_w) / inner_sd_;
        const double q = -mu1_ / (inner_sd_ * root_tau);
        return weighted_gaussian_tail(u0, p, q, quad_);
    }

    std::vector<double> log_num(static_cast<std::size_t>(n_samples_));
    std::vector<double> log_den(static_cast<std::size_t>(n_samples_));
    for (std::size_t s = 0; s < log_num.size(); ++s) {
        const double lo = lo_[s];
        const double hi = hi_[s];
        if (!(lo < hi)) {
            log_num[s] = -kInf;
            log_den[s] = -kInf;
            continue;
        }
        const double ulo = (lo - mean_w) * root_tau;
        const double uhi = (hi - mean_w) * root_tau;
        log_den[s] = std_normal_log_interval(ulo, uhi);
        log_num[s] = std_normal_log_interval(std::max(ulo, (z_obs_ - mean_w) * root_tau), uhi);
    }
    double shift = 0.0;
    const double log_mean_den = log_mean_exp(log_den, shift);
    if (!(log_mean_den >= kLogTiny)) {
        throw RareEventUnderflow("mv_pivot: sampled selection probability below 1e-300");
    }
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t s = 0; s < log_num.size(); ++s) {
        sx += std::exp(log_num[s] - shift);
        sy += std::exp(log_den[s] - shift);
    }
    const double ratio = sx / sy;
    double resid = 0.0;
    for (std::size_t s = 0; s < log_num.size(); ++s) {
        const double r = std::exp(log_num[s] - shift) - ratio * std::exp(log_den[s] - shift);
        resid += r * r;
    }
    const double n = static_cast<double>(n_samples_);
    const double ybar = sy / n;
    PivotResult out;
    out.value = std::clamp(ratio, 0.0, 1.0);
    out.denominator = std::exp(log_mean_den);
    out.numerator = out.value * out.denominator;
    out.std_error = std::sqrt(resid / (n * (n - 1.0))) / ybar;
    return out;
}

PivotResult mv_pivot(double z_obs, int j, const CarveGeometry& geom, double mean_j, const Eigen::VectorXd& nuisance,
                     const MvPivotOptions& opts, RngStream& rng) {
    return MvPivotFunction(z_obs, j, geom, nuisance, opts, rng)(mean_j);
}

ConfidenceInterval MvPivotFunction::confidence_interval(double level) const {
    if (!(level > 0.0 && level < 1.0)) throw DomainError("mv_confidence_interval: level must lie in (0,1)");
    if (!std::isfinite(z_obs_)) throw DomainError("mv_confidence_interval: non-finite statistic");
    auto f = [&](double m) { return (*this)(m).value; };
    ConfidenceInterval ci;
    ci.level = level;
    ci.lower = detail::invert_increasing(f, 0.5 * (1.0 - level), z_obs_, 1e-8, ci.iterations);
    ci.upper = detail::invert_increasing(f, 0.5 * (1.0 + level), z_obs_, 1e-8, ci.iterations);
    return ci;
}

ConfidenceInterval mv_confidence_interval(double z_obs, int j, const CarveGeometry& geom,
                                          const Eigen::VectorXd& nuisance, double level, const MvPivotOptions& opts,
                                          RngStream& rng) {
    return MvPivotFunction(z_obs, j, geom, nuisance, opts, rng).confidence_interval(level);
}

}  // namespace carve

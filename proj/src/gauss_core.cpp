#include "carve/gauss_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "carve/errors.hpp"
#include "carve/log.hpp"

namespace carve {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880168872421;
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(double x, const char* where) {
    if (!std::isfinite(x)) {
        throw DomainError(std::string(where) + ": non-finite argument");
    }
}

constexpr double kTailStart = 6.0;

// Backward-evaluated continued fraction for the Mills ratio, accurate to rounding for x >= 6.
double mills_ratio_cf(double x) {
    double t = x;
    for (int k = 120; k >= 1; --k) {
        t = x + k / t;
    }
    return 1.0 / t;
}

// exp(-x^2 / 2) with x^2 split exactly, so the rounding of x^2 does not leak into the tail.
double gauss_kernel(double x) {
    const double hi = x * x;
    const double lo = std::fma(x, x, -hi);
    return std::exp(-0.5 * hi) * (1.0 - 0.5 * lo);
}

// Phibar(x) for x >= kTailStart.
double far_tail(double x) { return kInvSqrt2Pi * gauss_kernel(x) * mills_ratio_cf(x); }

// log Phibar(x) accepting +-inf.
double log_survival_ext(double x) {
    if (x == kInf) return -kInf;
    if (x == -kInf) return 0.0;
    return std_normal_log_survival(x);
}

}  // namespace

double std_normal_pdf(double x) {
    require_finite(x, "std_normal_pdf");
    return kInvSqrt2Pi * gauss_kernel(x);
}

double std_normal_log_pdf(double x) {
    require_finite(x, "std_normal_log_pdf");
    return -0.5 * x * x - kLogSqrt2Pi;
}

double std_normal_survival(double x) {
    require_finite(x, "std_normal_survival");
    if (x >= kTailStart) return far_tail(x);
    return 0.5 * std::erfc(x / kSqrt2);
}

double std_normal_cdf(double x) {
    require_finite(x, "std_normal_cdf");
    if (x <= -kTailStart) return far_tail(-x);
    return 0.5 * std::erfc(-x / kSqrt2);
}

double std_normal_log_survival(double x) {
    require_finite(x, "std_normal_log_survival");
    if (x < 0.0) {
        return std::log1p(-0.5 * std::erfc(-x / kSqrt2));
    }
    if (x < kTailStart) {
        return std::log(0.5 * std::erfc(x / kSqrt2));
    }
    return std_normal_log_pdf(x) + std::log(mills_ratio_cf(x));
}

double mills_ratio(double x) {
    require_finite(x, "mills_ratio");
    if (x >= kTailStart) return mills_ratio_cf(x);
    return std_normal_survival(x) / std_normal_pdf(x);
}

double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("std_normal_quantile: p must lie in (0,1)");
    }
    // Acklam's rational approximation, refined by Halley steps on the exact CDF.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    for (int it = 0; it < 3; ++it) {
        // e = Phi(x) - p, formed on the side where it does not cancel.
        const double e = (p < 0.5) ? std_normal_cdf(x) - p : (1.0 - p) - std_normal_survival(x);
        const double u = e / std_normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double mills_lower(double x) {
    require_finite(x, "mills_lower");
    const double s = std::sqrt(4.0 + x * x);
    // (s + x)(s - x) = 4; use the non-cancelling form on each side.
    if (x >= 0.0) return 2.0 * std_normal_pdf(x) / (s + x);
    return 0.5 * std_normal_pdf(x) * (s - x);
}

double mills_upper(double x) {
    require_finite(x, "mills_upper");
    const double s = std::sqrt(2.0 + x * x);
    if (x >= 0.0) return 2.0 * std_normal_pdf(x) / (s + x);
    return std_normal_pdf(x) * (s - x);
}

double log_diff_exp(double a, double b) {
    if (b > a) throw DomainError("log_diff_exp: requires a >= b");
    if (b == -kInf) return a;
    const double d = b - a;
    if (d > -0.693147180559945) return a + std::log(-std::expm1(d));
    return a + std::log1p(-std::exp(d));
}

double log_add_exp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double std_normal_log_interval(double a, double b) {
    if (std::isnan(a) || std::isnan(b)) throw DomainError("std_normal_log_interval: NaN bound");
    if (!(a < b)) return -kInf;
    if (a >= 0.0) return log_diff_exp(log_survival_ext(a), log_survival_ext(b));
    if (b <= 0.0) return log_diff_exp(log_survival_ext(-b), log_survival_ext(-a));
    const double outside = std::exp(log_survival_ext(b)) + std::exp(log_survival_ext(-a));
    return std::log1p(-outside);
}

void MvnSpec::validate() const {
    const auto k = mean.size();
    if (covariance.rows() != k || covariance.cols() != k) {
        throw DomainError("MvnSpec: covariance dimension does not match mean");
    }
    if (!mean.allFinite() || !covariance.allFinite()) {
        throw DomainError("MvnSpec: non-finite entries");
    }
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw DomainError("MvnSpec: covariance not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) {
        throw DomainError("MvnSpec: covariance not positive semidefinite");
    }
}

CovarianceFactor factor_covariance(const Eigen::MatrixXd& cov, double floor) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
        Eigen::MatrixXd l = llt.matrixL();
        if (l.allFinite() && l.diagonal().minCoeff() > std::sqrt(floor)) {
            return {l, false};
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) {
        throw NumericError("factor_covariance: eigendecomposition failed");
    }
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd f = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
    if (!f.allFinite()) throw NumericError("factor_covariance: non-finite factor");
    log_warn("covariance regularized with eigenvalue floor");
    return {f, true};
}

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw NumericError("sym_sqrt: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd sym_inv_sqrt(const Eigen::MatrixXd& m, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw NumericError("sym_inv_sqrt: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

OrthantEstimate mvn_orthant_mc(const MvnSpec& spec, long n_samples, RngStream& rng) {
    if (n_samples < 1000) throw DomainError("mvn_orthant_mc: n_samples must be >= 1000");
    spec.validate();
    const auto f = factor_covariance(spec.covariance);
    const Eigen::Index k = spec.mean.size();
    std::vector<double> g(static_cast<std::size_t>(k));
    long hits = 0;
    for (long s = 0; s < n_samples; ++s) {
        for (Eigen::Index i = 0; i < k; ++i) g[i] = rng.normal();
        bool inside = true;
        for (Eigen::Index i = 0; i < k && inside; ++i) {
            double x = spec.mean[i];
            for (Eigen::Index j = 0; j < k; ++j) x += f.factor(i, j) * g[j];
            inside = x > 0.0;
        }
        hits += inside ? 1 : 0;
    }
    const double n = static_cast<double>(n_samples);
    const double p = hits / n;
    const double sd = std::sqrt(p * (1.0 - p) * n / (n - 1.0));
    return {p, sd / std::sqrt(n), f.regularized};
}

}  // namespace carve

#pragma once

#include <Eigen/Dense>

#include "carve/rng.hpp"

namespace carve {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

// Standard normal density; throws DomainError on non-finite input.
double std_normal_pdf(double x);
double std_normal_log_pdf(double x);

// P(N(0,1) > x), computed from erfc so the upper tail keeps full relative precision.
double std_normal_survival(double x);
// P(N(0,1) <= x).
double std_normal_cdf(double x);
// log P(N(0,1) > x); finite for every finite x (continued fraction past the double range).
double std_normal_log_survival(double x);

// Inverse of the standard normal CDF on (0,1).
double std_normal_quantile(double p);

// Mills ratio Phibar(x)/phi(x).
double mills_ratio(double x);

// Closed-form envelopes of the Gaussian survival function:
//   lower(x) = 2 phi(x) / (sqrt(4 + x^2) + x),  upper(x) = 2 phi(x) / (sqrt(2 + x^2) + x).
double mills_lower(double x);
double mills_upper(double x);

// log(exp(a) - exp(b)) for a >= b.
double log_diff_exp(double a, double b);
// log(exp(a) + exp(b)).
double log_add_exp(double a, double b);

// log P(a < N(0,1) < b) for a < b, accurate in either tail.
double std_normal_log_interval(double a, double b);

struct MvnSpec {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;

    // Checks symmetry (1e-12) and eigenvalues >= -1e-10; throws DomainError otherwise.
    void validate() const;
};

// Lower factor L with L L^T ~= cov. Eigenvalues below `floor` are lifted to it when plain
// Cholesky fails; `regularized` reports whether that happened.
struct CovarianceFactor {
    Eigen::MatrixXd factor;
    bool regularized = false;
};
CovarianceFactor factor_covariance(const Eigen::MatrixXd& cov, double floor = 1e-10);

// Symmetric square root and inverse square root by eigendecomposition with an eigenvalue floor.
Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m, double floor = 1e-12);
Eigen::MatrixXd sym_inv_sqrt(const Eigen::MatrixXd& m, double floor = 1e-12);

struct OrthantEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    bool regularized = false;
};

// Plain Monte Carlo estimate of P(X > 0 componentwise), X ~ N(spec.mean, spec.covariance).
OrthantEstimate mvn_orthant_mc(const MvnSpec& spec, long n_samples, RngStream& rng);

}  // namespace carve

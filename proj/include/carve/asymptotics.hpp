#pragma once

#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "carve/carve_mv.hpp"
#include "carve/generative.hpp"
#include "carve/quadrature.hpp"
#include "carve/rng.hpp"

namespace carve {

// Exact selection probability Phi(m / sqrt(1 + rho^2)) of the one-coordinate screen at c = 0.
double seq_selprob_exact(double m, double rho);

// Leading-order tail approximation |m|^{-1} exp(-m^2 / (2 (1 + rho^2))) sqrt(1 + rho^2) / sqrt(2 pi).
// Requires m <= -2.
double seq_selprob_asymptotic(double m, double rho);
double seq_log_selprob_asymptotic(double m, double rho);

// Ratios alpha_k / alpha_j indexed (k, j).
Eigen::MatrixXd alpha_ratio_matrix(const Eigen::VectorXd& alpha);

// [ (prod_j sum_k (I + QQ^T)^{-1}_{jk} abar_{kj}) (2 pi)^{k/2} sqrt(det(I + Q^T Q)) ]^{-1}
double l_constant(const Eigen::MatrixXd& qqt, const Eigen::MatrixXd& qtq, const Eigen::MatrixXd& alpha_bar_ratios);

// exp(-alpha^T (I + QQ^T)^{-1} alpha / 2) (prod_j |alpha_j|)^{-1} L. Requires every |alpha_j| >= 2.
double mv_selprob_asymptotic(const QAlpha& qa);
double mv_log_selprob_asymptotic(const QAlpha& qa);

struct ConvolutionRow {
    double m = 0.0;
    double rho = 0.0;
    double quadrature = 0.0;
    double exact = 0.0;
    double abs_error = 0.0;
};
// Quadrature of E[Phibar(-(Z + m) / rho)] against Phi(m / sqrt(1 + rho^2)).
std::vector<ConvolutionRow> convolution_check(const std::vector<double>& ms, const std::vector<double>& rhos,
                                              const QuadratureConfig& cfg = {});

struct SeqDecayRow {
    double m = 0.0;
    double exact = 0.0;
    double approx = 0.0;
    double rel_error = 0.0;
};
std::vector<SeqDecayRow> seq_decay_table(const std::vector<double>& ms, double rho);

struct MvDecayRow {
    double a = 0.0;
    double exact = 0.0;
    double exact_se = 0.0;
    double approx = 0.0;
    double ratio = 0.0;  // exact / approx
    double ratio_se = 0.0;
};
// For sqrt(n) alpha = a * alpha_bar, compares the sampled selection probability with the tail
// approximation. Each a uses its own stream derived from `seed`.
std::vector<MvDecayRow> mv_decay_table(const Eigen::MatrixXd& q, const Eigen::VectorXd& alpha_bar,
                                       const std::vector<double>& as, long n_mc, std::uint64_t seed,
                                       SelectionProbMethod method = SelectionProbMethod::conditional);

struct MvSandwich {
    double lower = 0.0;  // E[prod L(Q_j Z + alpha_j) 1_A]
    double lower_se = 0.0;
    double upper = 0.0;  // E[prod U(Q_j Z + alpha_j) 1_A] + remainder
    double upper_se = 0.0;
    double remainder = 0.0;  // 2 exp(-q^2 alpha^T (QQ^T)^{-1} alpha / 2)
    double q = 0.0;          // sqrt(lambda_max(QQ^T (I + QQ^T)^{-1}))
    double approx = 0.0;
};
// A = {|(QZ)_j| < q |alpha_j| for all j}.
MvSandwich mv_sandwich_bounds(const QAlpha& qa, long n_mc, RngStream& rng);

struct MomentsReport {
    int n1 = 0;
    int n2 = 0;
    long replications = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd mean_se;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd cov_se;
    Eigen::MatrixXd cov_target;
    Eigen::MatrixXd cross;
    Eigen::MatrixXd cross_se;
    bool mean_ok = false;
    bool cov_ok = false;
    bool cross_ok = false;

    bool passed() const { return mean_ok && cov_ok && cross_ok; }
};
// Simulates W = sqrt(n) mean(first n1 rows) - sqrt(n) mean(all rows) and checks mean 0, covariance
// rho^2 sigma and zero cross-covariance with Z = sqrt(n) mean(all rows), each within 3 standard errors.
MomentsReport randomization_moments_check(int n1, int n2, const GenerativeSpec& spec, long n_mc, RngStream& rng);

struct SandwichRow {
    double x = 0.0;
    double lower = 0.0;
    double survival = 0.0;
    double upper = 0.0;
};
struct SandwichOptions {
    double lower_perturbation = 0.0;  // relative inflation of the lower envelope, for fault injection
    bool throw_on_violation = false;
};
struct SandwichReport {
    std::vector<SandwichRow> rows;
    long violations = 0;
    double first_violation = 0.0;
    double last_violation = 0.0;
    double max_lower_slack = 0.0;  // max (Phibar - L) / Phibar
    double max_upper_slack = 0.0;  // max (U - Phibar) / Phibar
};
SandwichReport sandwich_report(const std::vector<double>& grid, const SandwichOptions& opts = {});

std::vector<double> make_grid(double from, double to, double step);

void to_json(nlohmann::json& j, const ConvolutionRow& r);
void to_json(nlohmann::json& j, const SeqDecayRow& r);
void to_json(nlohmann::json& j, const MvDecayRow& r);
void to_json(nlohmann::json& j, const MvSandwich& r);
void to_json(nlohmann::json& j, const MomentsReport& r);
void to_json(nlohmann::json& j, const SandwichReport& r);

}  // namespace carve

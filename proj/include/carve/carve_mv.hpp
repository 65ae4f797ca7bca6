#pragma once

#include <vector>

#include <Eigen/Dense>

#include "carve/carve_seq.hpp"
#include "carve/elastic_net.hpp"
#include "carve/rng.hpp"
#include "carve/selection.hpp"

namespace carve {

// Linear description of a selection event: the randomization satisfies
//   W = P_E Z + Q_E t + r_E,  t > 0,
// where Z ~ N(sqrt(n) beta, sigma) and W ~ N(0, omega). Selected signs are folded into the
// columns of Q_E so the constraint is always t > 0.
struct CarveGeometry {
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd q_e;
    Eigen::VectorXd r_e;
    Eigen::MatrixXd p_e;
    Eigen::MatrixXd omega;
    double rho = 1.0;

    int dim() const { return static_cast<int>(sigma.rows()); }
    int n_selected() const { return static_cast<int>(q_e.cols()); }

    void validate() const;
};

// Screening map: P_E = -I, omega = rho^2 sigma, Q_E = signed basis columns of E and r_E holding
// the signed offsets on E and the observed augmented statistic Z + W elsewhere.
CarveGeometry screening_geometry(const Eigen::MatrixXd& sigma, const SelectionOutcome& outcome,
                                 const Eigen::VectorXd& augmented, double rho);

// Elastic-net map in the coordinates (E, -E). `z` is the observed statistic (beta_bar_E, N_E)
// with beta_bar_E = sqrt(n) OLS on E and N_E = X_{-E}^T (y - X_E OLS) / sqrt(n).
struct ElasticNetCarve {
    CarveGeometry geometry;
    Eigen::VectorXd z;
    std::vector<int> order;  // original column index of each coordinate
};
ElasticNetCarve elastic_net_geometry(const ElasticNetFit& fit, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                     double noise_variance);

struct QAlpha {
    Eigen::MatrixXd q;             // |E| x d
    Eigen::VectorXd sqrt_n_alpha;  // |E|
};

// Q = A^{-1/2} Q_E^T omega^{-1} P_E sigma^{1/2} and sqrt(n) alpha = A^{-1/2} Q_E^T omega^{-1} (P_E sqrt(n) beta + r_E)
// with A = Q_E^T omega^{-1} Q_E. For screening these reduce to the familiar
// Q = -A^{-1/2} Q_E^T sigma^{-1/2} / rho^2.
QAlpha build_q_alpha(const CarveGeometry& geom, const Eigen::VectorXd& sqrt_n_beta);

enum class SelectionProbMethod { orthant, conditional };

struct ProbabilityEstimate {
    double probability = 0.0;
    double std_error = 0.0;
};

// E[prod_j Phibar(Q_j Z + sqrt(n) alpha_j)], Z ~ N(0, I). `orthant` samples the equivalent orthant
// probability of N(-sqrt(n) alpha, I + Q Q^T); `conditional` averages the product directly, which
// keeps relative precision for small probabilities.
ProbabilityEstimate mv_selection_prob(const QAlpha& qa, long n_mc, RngStream& rng,
                                      SelectionProbMethod method = SelectionProbMethod::orthant);

// prod_j Phibar(Q_j z + sqrt(n) alpha_j) / selprob.
double mv_carved_density_ratio(const Eigen::VectorXd& z, const QAlpha& qa, double selprob);

// Product approximation prod_k Phibar(-(cov^{-1/2} mean)_k) of P(N(mean, cov) > 0); exact when cov is diagonal.
double orthant_product_approximation(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

// N = Z_{-j} - sigma_{-j,j} Z_j / sigma_jj, returned as a d-vector with entry j set to 0.
Eigen::VectorXd nuisance_statistic(const Eigen::VectorXd& z, const Eigen::MatrixXd& sigma, int j);

struct MvPivotOptions {
    long n_mc = 20000;
    bool force_mc = false;  // use the sampled inner probability even when |E| = 1
    QuadratureConfig quadrature{};
};

// Pivot for the mean of coordinate j of Z, conditional on the selection event and the nuisance
// statistic. The inner orthant probability is exact for |E| = 1; otherwise it is sampled once at
// construction and reused for every mean, so repeated evaluations share random numbers.
class MvPivotFunction {
public:
    MvPivotFunction(double z_obs, int j, const CarveGeometry& geom, const Eigen::VectorXd& nuisance,
                    const MvPivotOptions& opts, RngStream& rng);

    // `mean_j` is sqrt(n) beta_j, the mean of Z_j.
    PivotResult operator()(double mean_j) const;

    // Equal-tailed interval for the mean by inverting this pivot.
    ConfidenceInterval confidence_interval(double level) const;

    bool exact() const noexcept { return exact_; }
    double z_obs() const noexcept { return z_obs_; }

private:
    double z_obs_;
    double var_j_;
    double s1_ = 0.0;
    double s2_ = 0.0;
    bool exact_ = false;
    double mu0_ = 0.0;  // |E| = 1: inner mean mu0 + mu1 z and sd
    double mu1_ = 0.0;
    double inner_sd_ = 1.0;
    std::vector<double> lo_;  // sampled feasible z-intervals
    std::vector<double> hi_;
    long n_samples_ = 0;
    QuadratureConfig quad_;
};

PivotResult mv_pivot(double z_obs, int j, const CarveGeometry& geom, double mean_j, const Eigen::VectorXd& nuisance,
                     const MvPivotOptions& opts, RngStream& rng);

ConfidenceInterval mv_confidence_interval(double z_obs, int j, const CarveGeometry& geom,
                                          const Eigen::VectorXd& nuisance, double level, const MvPivotOptions& opts,
                                          RngStream& rng);

}  // namespace carve

#pragma once

#include <vector>

#include <Eigen/Dense>

namespace carve {

struct ElasticNetFit {
    Eigen::VectorXd beta_hat;
    std::vector<int> active;            // E, ascending
    std::vector<int> active_signs;      // sign(beta_hat_j), j in E
    std::vector<int> inactive;          // -E, ascending
    Eigen::VectorXd inactive_subgradient;  // lambda * subgradient over -E, each in [-lambda, lambda]
    double kkt_residual = 0.0;
    double lambda = 0.0;
    double eta = 0.0;
    double rho = 0.0;
    long sweeps = 0;
};

struct ElasticNetOptions {
    double tolerance = 1e-10;  // on the largest coordinate update in a sweep
    long max_sweeps = 100000;
};

// Minimises (1+rho^2)/(2 sqrt(n)) ||y1 - X1 b||^2 + lambda ||b||_1 + eta/2 ||b||^2 by cyclic
// coordinate descent, with n = n1 (1 + rho^2).
ElasticNetFit elastic_net_fit(const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, double lambda, double eta,
                              double rho, const ElasticNetOptions& opts = {});

// Largest violation of the stationarity conditions at `beta` for the same objective.
double elastic_net_kkt_residual(const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, const Eigen::VectorXd& beta,
                                double lambda, double eta, double rho);

double elastic_net_objective(const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, const Eigen::VectorXd& beta,
                             double lambda, double eta, double rho);

// W = [-X^T (y - X b) + (1 + rho^2) X1^T (y1 - X1 b)] / sqrt(n), the gradient gap between the full-data
// and the pilot losses at the fitted b.
Eigen::VectorXd kkt_randomization(const ElasticNetFit& fit, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, double rho);

}  // namespace carve

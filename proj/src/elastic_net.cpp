#include "carve/elastic_net.hpp"

#include <algorithm>
#include <cmath>

#include "carve/errors.hpp"

namespace carve {

namespace {

double loss_scale(Eigen::Index n1, double rho) {
    const double inflate = 1.0 + rho * rho;
    return inflate / std::sqrt(n1 * inflate);
}

void check_inputs(const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, double lambda, double eta, double rho) {
    if (y1.size() != X1.rows()) throw DomainError("elastic net: y1 and X1 row counts differ");
    if (X1.rows() < 1 || X1.cols() < 1) throw DomainError("elastic net: empty design");
    if (!(lambda >= 0.0) || !(eta >= 0.0) || !(rho >= 0.0)) {
        throw DomainError("elastic net: lambda, eta and rho must be >= 0");
    }
    if (!y1.allFinite() || !X1.allFinite()) throw DomainError("elastic net: non-finite data");
}

double soft_threshold(double c, double t) {
    if (c > t) return c - t;
    if (c < -t) return c + t;
    return 0.0;
}

}  // namespace

double elastic_net_objective(const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, const Eigen::VectorXd& beta,
                             double lambda, double eta, double rho) {
    const double kappa = loss_scale(X1.rows(), rho);
    return 0.5 * kappa * (y1 - X1 * beta).squaredNorm() + lambda * beta.lpNorm<1>() + 0.5 * eta * beta.squaredNorm();
}

double elastic_net_kkt_residual(const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, const Eigen::VectorXd& beta,
                                double lambda, double eta, double rho) {
    const double kappa = loss_scale(X1.rows(), rho);
    const Eigen::VectorXd corr = kappa * X1.transpose() * (y1 - X1 * beta);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        double v;
        if (beta[j] != 0.0) {
            v = std::abs(-corr[j] + eta * beta[j] + lambda * (beta[j] > 0.0 ? 1.0 : -1.0));
        } else {
            v = std::max(0.0, std::abs(corr[j]) - lambda);
        }
        worst = std::max(worst, v);
    }
    return worst;
}

ElasticNetFit elastic_net_fit(const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, double lambda, double eta,
                              double rho, const ElasticNetOptions& opts) {
    check_inputs(y1, X1, lambda, eta, rho);
    const Eigen::Index p = X1.cols();
    const double kappa = loss_scale(X1.rows(), rho);

    Eigen::VectorXd diag(p);
    for (Eigen::Index j = 0; j < p; ++j) diag[j] = kappa * X1.col(j).squaredNorm() + eta;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd resid = y1;
    long sweep = 0;
    for (;; ++sweep) {
        if (sweep >= opts.max_sweeps) {
            throw ConvergenceError("elastic_net_fit: sweep limit reached",
                                   elastic_net_objective(y1, X1, beta, lambda, eta, rho),
                                   elastic_net_kkt_residual(y1, X1, beta, lambda, eta, rho));
        }
        double max_step = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (diag[j] <= 0.0) continue;  // zero column with no ridge term stays at zero
            const double old = beta[j];
            const double c = kappa * X1.col(j).dot(resid) + kappa * X1.col(j).squaredNorm() * old;
            const double next = soft_threshold(c, lambda) / diag[j];
            if (next != old) {
                resid.noalias() -= (next - old) * X1.col(j);
                beta[j] = next;
                max_step = std::max(max_step, std::abs(next - old));
            }
        }
        if (max_step < opts.tolerance) break;
    }

    ElasticNetFit fit;
    fit.beta_hat = beta;
    fit.lambda = lambda;
    fit.eta = eta;
    fit.rho = rho;
    fit.sweeps = sweep + 1;
    resid = y1 - X1 * beta;  // refresh to drop accumulated rounding
    const Eigen::VectorXd corr = kappa * X1.transpose() * resid;
    std::vector<double> sub;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (beta[j] != 0.0) {
            fit.active.push_back(static_cast<int>(j));
            fit.active_signs.push_back(beta[j] > 0.0 ? 1 : -1);
        } else {
            fit.inactive.push_back(static_cast<int>(j));
            sub.push_back(corr[j]);
        }
    }
    fit.inactive_subgradient = Eigen::Map<Eigen::VectorXd>(sub.data(), static_cast<Eigen::Index>(sub.size()));
    fit.kkt_residual = elastic_net_kkt_residual(y1, X1, beta, lambda, eta, rho);
    return fit;
}

Eigen::VectorXd kkt_randomization(const ElasticNetFit& fit, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y1, const Eigen::MatrixXd& X1, double rho) {
    const Eigen::Index p = fit.beta_hat.size();
    if (X.cols() != p || X1.cols() != p || y.size() != X.rows() || y1.size() != X1.rows()) {
        throw DomainError("kkt_randomization: dimension mismatch");
    }
    const double root_n = std::sqrt(static_cast<double>(X.rows()));
    return (-X.transpose() * (y - X * fit.beta_hat) + (1.0 + rho * rho) * X1.transpose() * (y1 - X1 * fit.beta_hat)) /
           root_n;
}

}  // namespace carve

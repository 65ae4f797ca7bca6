#pragma once

#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace carve {

// Screening rules applied to the stage-one statistic.
struct FixedThreshold {
    Eigen::VectorXd lambda;
};
struct TopD {
    int count = 1;
};
struct BHStepUp {
    double alpha = 0.1;
};
struct ElasticNet {
    double lambda = 1.0;
    double eta = 0.0;
};

using ScreeningRule = std::variant<FixedThreshold, TopD, BHStepUp, ElasticNet>;

// Throws DomainError when a rule's parameters are out of range.
void validate_rule(const ScreeningRule& rule);
const char* rule_name(const ScreeningRule& rule);

// Side information the selection conditions on.
struct LambdaThresholds {
    Eigen::VectorXd lambda;
};
struct OrderStatisticThreshold {
    double abs_next = 0.0;  // |Z^{(D+1)}|, the first unselected order statistic
};
struct BhThreshold {
    int rejections = 0;  // D0
    double tau = 0.0;    // Phi^{-1}(1 - D0 alpha / (2d))
};
using ThresholdInfo = std::variant<LambdaThresholds, OrderStatisticThreshold, BhThreshold>;

struct SelectionOutcome {
    std::vector<int> selected;        // E, in the rule's reporting order
    std::vector<int> signs;           // s_E, +-1 aligned with `selected`
    std::vector<int> dropped;         // complement of E, ascending
    Eigen::VectorXd dropped_values;   // stage-one statistic on `dropped`
    ThresholdInfo threshold;
    ScreeningRule rule;

    // Empty selection is a regular outcome: no conditional inference is defined for it.
    bool empty() const noexcept { return selected.empty(); }

    // Unsigned stage-one cut-off for the k-th selected coordinate (lambda_j, |Z^{(D+1)}| or tau).
    double cutoff(std::size_t k) const;

    // Signed offset c = sqrt(1+rho^2) * s * cutoff on the augmented-data scale.
    double offset(std::size_t k, double rho) const;
};

// E = {j : z1_j > lambda_j}, all signs +1.
SelectionOutcome screen_threshold(const Eigen::VectorXd& z1, const Eigen::VectorXd& lambda);

// D largest |z1_j|; ties broken by ascending index. Requires 1 <= D < d.
SelectionOutcome screen_top_d(const Eigen::VectorXd& z1, int count);

// Benjamini-Hochberg step-up on two-sided p-values 2 Phibar(|z1_j|).
SelectionOutcome screen_bh(const Eigen::VectorXd& z1, double alpha);

// Dispatch for the three screening rules (ElasticNet is not a screening rule and throws).
SelectionOutcome apply_screening(const ScreeningRule& rule, const Eigen::VectorXd& z1);

}  // namespace carve

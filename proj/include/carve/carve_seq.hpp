#pragma once

#include "carve/quadrature.hpp"

namespace carve {

// One selected coordinate in the independent-coordinates model. `m` is the non-centrality
// sqrt(n) beta, `offset` the signed cut-off c on the augmented-data scale.
struct SeqCarveProblem {
    double m = 0.0;
    double rho = 1.0;
    double offset = 0.0;
    int sign = 1;

    void validate() const;
};

struct PivotResult {
    double value = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
    double quadrature_error = 0.0;
    double std_error = 0.0;  // Monte Carlo error, zero for deterministic evaluations
};

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.0;
    int iterations = 0;
};

// Probability that stage one selects the coordinate given the centred statistic z:
// Phibar(s (c - z - m) / rho).
double seq_survival_factor(double z, const SeqCarveProblem& prob);

// log of the selection probability, log Phibar(s (c - m) / sqrt(1 + rho^2)).
double seq_log_selection_probability(const SeqCarveProblem& prob);

// Upper-tail carved pivot at the raw statistic z_obs. Throws RareEventUnderflow when the
// selection probability is below 1e-300.
PivotResult seq_pivot(double z_obs, const SeqCarveProblem& prob, const QuadratureConfig& cfg = {});

// Equal-tailed interval for m by inverting seq_pivot.
ConfidenceInterval seq_confidence_interval(double z_obs, double rho, double offset, int sign, double level,
                                           const QuadratureConfig& cfg = {});

// Carved density of the centred statistic.
double seq_carved_density(double z, const SeqCarveProblem& prob, const QuadratureConfig& cfg = {});

// Shared kernel: for u ~ N(0,1) reweighted by Phibar(p + q u), returns P(u > u0) together with the
// normaliser Phibar(p / sqrt(1 + q^2)).
PivotResult weighted_gaussian_tail(double u0, double p, double q, const QuadratureConfig& cfg);

}  // namespace carve

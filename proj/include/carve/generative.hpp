#pragma once

#include <string>

#include <Eigen/Dense>

#include "carve/rng.hpp"

namespace carve {

// Unit-variance innovation families; all have finite exponential moments near zero.
enum class Family { gaussian, centered_exponential, laplace, rademacher, uniform };

Family parse_family(const std::string& name);  // throws ConfigError on unknown tags
const char* family_name(Family f);

// Rows are iid beta + L eps with L L^T = sigma and eps a vector of standardized draws.
struct GenerativeSpec {
    Family family = Family::gaussian;
    Eigen::VectorXd beta;   // per-observation mean
    Eigen::MatrixXd sigma;  // covariance of one observation

    int dim() const { return static_cast<int>(beta.size()); }
    void validate() const;
};

// One standardized (mean 0, variance 1) draw.
double standardized_draw(Family f, RngStream& rng);

// n x d matrix of iid rows from `spec`.
Eigen::MatrixXd sample_triangular_array(const GenerativeSpec& spec, int n, RngStream& rng);

}  // namespace carve

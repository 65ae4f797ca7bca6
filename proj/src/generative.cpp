#include "carve/generative.hpp"

#include <cmath>

#include "carve/errors.hpp"

namespace carve {

Family parse_family(const std::string& name) {
    if (name == "gaussian") return Family::gaussian;
    if (name == "centered_exponential" || name == "exponential") return Family::centered_exponential;
    if (name == "laplace") return Family::laplace;
    if (name == "rademacher") return Family::rademacher;
    if (name == "uniform") return Family::uniform;
    throw ConfigError("unknown distribution family '" + name + "'");
}

const char* family_name(Family f) {
    switch (f) {
        case Family::gaussian:
            return "gaussian";
        case Family::centered_exponential:
            return "centered_exponential";
        case Family::laplace:
            return "laplace";
        case Family::rademacher:
            return "rademacher";
        case Family::uniform:
            return "uniform";
    }
    return "unknown";
}

void GenerativeSpec::validate() const {
    const auto d = beta.size();
    if (d < 1) throw ConfigError("GenerativeSpec: empty mean vector");
    if (sigma.rows() != d || sigma.cols() != d) throw ConfigError("GenerativeSpec: sigma has wrong size");
    if (!beta.allFinite() || !sigma.allFinite()) throw ConfigError("GenerativeSpec: non-finite entries");
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success || (sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw ConfigError("GenerativeSpec: sigma must be symmetric positive definite");
    }
}

double standardized_draw(Family f, RngStream& rng) {
    switch (f) {
        case Family::gaussian:
            return rng.normal();
        case Family::centered_exponential:
            return rng.exponential() - 1.0;
        case Family::laplace: {
            // Scale 1/sqrt(2) gives unit variance.
            const double e = rng.exponential();
            return (rng.bits() & 1ULL) ? e / std::sqrt(2.0) : -e / std::sqrt(2.0);
        }
        case Family::rademacher:
            return (rng.bits() & 1ULL) ? 1.0 : -1.0;
        case Family::uniform:
            return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    }
    throw ConfigError("unknown distribution family");
}

Eigen::MatrixXd sample_triangular_array(const GenerativeSpec& spec, int n, RngStream& rng) {
    if (n < 1) throw DomainError("sample_triangular_array: n must be >= 1");
    spec.validate();
    const auto d = spec.beta.size();
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(spec.sigma).matrixL();
    const bool identity = spec.sigma.isIdentity(0.0);
    Eigen::MatrixXd out(n, d);
    Eigen::VectorXd eps(d);
    for (int i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < d; ++c) eps[c] = standardized_draw(spec.family, rng);
        if (identity) {
            out.row(i) = (spec.beta + eps).transpose();
        } else {
            out.row(i) = (spec.beta + l * eps).transpose();
        }
    }
    return out;
}

}  // namespace carve

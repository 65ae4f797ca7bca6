#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carve/generative.hpp"
#include "carve/quadrature.hpp"
#include "carve/selection.hpp"

namespace carve {

enum class RandomizationMode { implicit_carving, gaussian };

RandomizationMode parse_mode(const std::string& name);
const char* mode_name(RandomizationMode m);

// sqrt(n) beta = -n^gamma |beta_bar|, coordinatewise.
struct RegimeSpec {
    double gamma = 0.0;
    Eigen::VectorXd beta_bar;
};

struct ExperimentConfig {
    int n1 = 100;
    int n2 = 100;
    ScreeningRule rule = FixedThreshold{};
    RandomizationMode mode = RandomizationMode::implicit_carving;
    long replications = 1000;  // upper bound when target_pivots is set
    std::uint64_t master_seed = 1;
    double level = 0.9;
    Family family = Family::gaussian;
    Eigen::MatrixXd sigma;
    Eigen::VectorXd sqrt_n_beta;        // used when regime is empty
    std::optional<RegimeSpec> regime;
    long target_pivots = 0;             // stop once this many pivots are pooled (0: run all replications)
    bool intervals = true;              // compute carved confidence intervals
    long mv_n_mc = 5000;                // inner samples when sigma couples coordinates
    int jobs = 1;
    QuadratureConfig quadrature{};

    int dim() const { return static_cast<int>(sigma.rows()); }
    int n() const { return n1 + n2; }
    double rho() const;
    Eigen::VectorXd mean_statistic() const;  // sqrt(n) beta actually used
    void validate() const;
};

struct ReplicationRecord {
    long replication = 0;
    bool empty = false;
    std::string error;
    std::vector<int> selected;
    std::vector<int> signs;
    std::vector<double> truth;  // sqrt(n) beta_j
    std::vector<double> pivots;
    std::vector<double> pivot_se;
    std::vector<double> carved_lower;
    std::vector<double> carved_upper;
    std::vector<double> split_lower;
    std::vector<double> split_upper;

    bool ok() const { return error.empty() && !empty; }
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<ReplicationRecord> records;
};

// Runs replication r on RngStream(master_seed, r); output is independent of cfg.jobs.
ReplicationRecord run_replication(const ExperimentConfig& cfg, long r);
ExperimentResult run_two_stage(const ExperimentConfig& cfg);

std::vector<double> pooled_pivots(const std::vector<ReplicationRecord>& records);

struct UniformityReport {
    double ks_distance = 0.0;
    long n_pivots = 0;
};
// Kolmogorov-Smirnov distance to Unif(0,1); needs at least 100 values.
UniformityReport uniformity_report(std::vector<double> pivots);
double ks_two_sample(std::vector<double> a, std::vector<double> b);

struct IntervalOutcome {
    double lower = 0.0;
    double upper = 0.0;
    double truth = 0.0;
};
struct CoverageStat {
    double coverage = 0.0;
    double std_error = 0.0;
    double median_length = 0.0;
    long count = 0;
};
// Needs at least 100 intervals.
CoverageStat coverage_of(const std::vector<IntervalOutcome>& intervals);

struct CoverageReport {
    CoverageStat carved;
    CoverageStat split;
    double level = 0.0;
};
CoverageReport coverage_report(const std::vector<ReplicationRecord>& records, double level);

struct SweepRow {
    double gamma = 0.0;
    int n = 0;
    RandomizationMode mode = RandomizationMode::implicit_carving;
    Family family = Family::gaussian;
    double ks_distance = 0.0;
    long n_pivots = 0;
    long underflows = 0;
    bool valid = false;
    std::string note;
};
// For every (gamma, n, mode) runs base_cfg with the regime exponent replaced and n split in the
// base ratio n1 : n2.
std::vector<SweepRow> regime_sweep(const ExperimentConfig& base_cfg, const std::vector<double>& gammas,
                                   const std::vector<int>& ns, const std::vector<RandomizationMode>& modes);

}  // namespace carve

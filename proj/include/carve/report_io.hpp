#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "carve/carve_seq.hpp"
#include "carve/quadrature.hpp"
#include "carve/selection.hpp"
#include "carve/sim.hpp"

namespace carve {

inline constexpr const char* kRecordsCsvVersion = "# carve-records v1";

// %.17g, so values round-trip exactly; NaN becomes an empty field.
std::string format_double(double x);
// RFC-4180: quote when the field holds a comma, quote, CR or LF; double embedded quotes.
std::string csv_field(const std::string& s);
std::vector<std::vector<std::string>> parse_csv(std::istream& in);

void write_records_csv(std::ostream& out, const std::vector<ReplicationRecord>& records);
nlohmann::json experiment_summary(const ExperimentResult& result);

// Strict JSON readers: unknown keys and wrong types raise ConfigError.
void require_known_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where);
QuadratureConfig quadrature_from_json(const nlohmann::json& j);
ScreeningRule rule_from_json(const nlohmann::json& j, int dim);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
// Scalar entries are broadcast to `dim`.
Eigen::VectorXd vector_from_json(const nlohmann::json& j, int dim, const std::string& what);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json rule_to_json(const ScreeningRule& rule);
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);
nlohmann::json selection_to_json(const SelectionOutcome& sel);
nlohmann::json pivot_to_json(const PivotResult& p);
nlohmann::json interval_to_json(const ConfidenceInterval& ci);

// A finite number, or null with a sibling "<key>_reason" entry.
void put_number(nlohmann::json& j, const std::string& key, double v, const std::string& reason = "non-finite value");

}  // namespace carve

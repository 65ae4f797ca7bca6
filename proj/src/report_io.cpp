#include "carve/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>

#include "carve/errors.hpp"

namespace carve {

namespace {

using nlohmann::json;

template <class T, class F>
std::string join(const std::vector<T>& v, const F& fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += fmt(v[i]);
    }
    return out;
}

std::string join_doubles(const std::vector<double>& v) { return join(v, format_double); }
std::string join_ints(const std::vector<int>& v) {
    return join(v, [](int x) { return std::to_string(x); });
}

double number(const json& j, const std::string& what) {
    if (!j.is_number()) throw ConfigError(what + " must be a number");
    return j.get<double>();
}

long integer(const json& j, const std::string& what) {
    if (!j.is_number_integer()) throw ConfigError(what + " must be an integer");
    return j.get<long>();
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
    auto out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        out.push_back(row);
    }
    return out;
}

}  // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool at_line_start = true;
    bool comment = false;
    char c;
    while (in.get(c)) {
        if (at_line_start && !quoted && c == '#') comment = true;
        at_line_start = false;
        if (comment) {
            if (c == '\n') {
                comment = false;
                at_line_start = true;
            }
            continue;
        }
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get(c);
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(field);
            field.clear();
        } else if (c == '\n') {
            row.push_back(field);
            rows.push_back(row);
            row.clear();
            field.clear();
            at_line_start = true;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (!field.empty() || !row.empty()) {
        row.push_back(field);
        rows.push_back(row);
    }
    return rows;
}

void write_records_csv(std::ostream& out, const std::vector<ReplicationRecord>& records) {
    out << kRecordsCsvVersion << "\n";
    out << "replication,status,selected,signs,truth,pivot,pivot_se,carved_lower,carved_upper,split_lower,split_upper,"
           "message\n";
    for (const auto& r : records) {
        const char* status = !r.error.empty() ? "error" : (r.empty ? "empty" : "ok");
        out << r.replication << ',' << status << ',' << csv_field(join_ints(r.selected)) << ','
            << csv_field(join_ints(r.signs)) << ',' << join_doubles(r.truth) << ',' << join_doubles(r.pivots) << ','
            << join_doubles(r.pivot_se) << ',' << join_doubles(r.carved_lower) << ',' << join_doubles(r.carved_upper)
            << ',' << join_doubles(r.split_lower) << ',' << join_doubles(r.split_upper) << ',' << csv_field(r.error)
            << "\n";
    }
}

void put_number(json& j, const std::string& key, double v, const std::string& reason) {
    if (std::isfinite(v)) {
        j[key] = v;
    } else {
        j[key] = nullptr;
        j[key + "_reason"] = reason;
    }
}

json experiment_summary(const ExperimentResult& result) {
    json s;
    s["schema"] = "carve-summary/1";
    s["config"] = experiment_to_json(result.config);
    long empty = 0, failed = 0, underflow = 0;
    for (const auto& r : result.records) {
        if (r.empty) ++empty;
        if (!r.error.empty()) {
            ++failed;
            if (r.error.rfind("RareEventUnderflow", 0) == 0) ++underflow;
        }
    }
    s["replications_run"] = static_cast<long>(result.records.size());
    s["empty_selections"] = empty;
    s["failed_replications"] = failed;
    s["underflow_replications"] = underflow;
    const auto pivots = pooled_pivots(result.records);
    s["n_pivots"] = static_cast<long>(pivots.size());

    json uni;
    try {
        const auto u = uniformity_report(pivots);
        uni["ks_distance"] = u.ks_distance;
        uni["n_pivots"] = u.n_pivots;
    } catch (const InsufficientData& e) {
        uni["ks_distance"] = nullptr;
        uni["ks_distance_reason"] = e.what();
    }
    s["uniformity"] = uni;

    json cov;
    cov["level"] = result.config.level;
    std::vector<IntervalOutcome> carved, split;
    for (const auto& r : result.records) {
        if (!r.ok()) continue;
        for (std::size_t k = 0; k < r.truth.size(); ++k) {
            if (!std::isnan(r.carved_lower[k])) carved.push_back({r.carved_lower[k], r.carved_upper[k], r.truth[k]});
            split.push_back({r.split_lower[k], r.split_upper[k], r.truth[k]});
        }
    }
    auto stat_json = [](const std::vector<IntervalOutcome>& v) {
        json j;
        try {
            const auto c = coverage_of(v);
            j["coverage"] = c.coverage;
            j["std_error"] = c.std_error;
            put_number(j, "median_length", c.median_length);
            j["count"] = c.count;
        } catch (const InsufficientData& e) {
            j["coverage"] = nullptr;
            j["coverage_reason"] = e.what();
            j["count"] = static_cast<long>(v.size());
        }
        return j;
    };
    cov["carved"] = stat_json(carved);
    cov["split"] = stat_json(split);
    s["coverage"] = cov;
    return s;
}

void require_known_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items()) {
        if (!ok.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

Eigen::VectorXd vector_from_json(const json& j, int dim, const std::string& what) {
    if (j.is_number()) return Eigen::VectorXd::Constant(dim, j.get<double>());
    if (!j.is_array()) throw ConfigError(what + " must be a number or an array");
    if (dim >= 0 && static_cast<int>(j.size()) != dim) {
        throw ConfigError(what + " must have " + std::to_string(dim) + " entries");
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], what);
    return v;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError(what + " must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError(what + " is ragged");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], what);
    }
    return m;
}

QuadratureConfig quadrature_from_json(const json& j) {
    require_known_keys(j, {"abs_tol", "rel_tol", "max_refinements", "truncation_radius"}, "quadrature");
    QuadratureConfig q;
    if (j.contains("abs_tol")) q.abs_tol = number(j["abs_tol"], "quadrature.abs_tol");
    if (j.contains("rel_tol")) q.rel_tol = number(j["rel_tol"], "quadrature.rel_tol");
    if (j.contains("max_refinements")) q.max_refinements = static_cast<int>(integer(j["max_refinements"], "quadrature.max_refinements"));
    if (j.contains("truncation_radius")) q.truncation_radius = number(j["truncation_radius"], "quadrature.truncation_radius");
    try {
        q.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return q;
}

ScreeningRule rule_from_json(const json& j, int dim) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        throw ConfigError("rule must be an object with a string 'type'");
    }
    const auto type = j["type"].get<std::string>();
    ScreeningRule rule;
    if (type == "threshold") {
        require_known_keys(j, {"type", "lambda"}, "rule");
        if (!j.contains("lambda")) throw ConfigError("threshold rule needs 'lambda'");
        rule = FixedThreshold{vector_from_json(j["lambda"], dim, "rule.lambda")};
    } else if (type == "top_d") {
        require_known_keys(j, {"type", "D"}, "rule");
        if (!j.contains("D")) throw ConfigError("top_d rule needs 'D'");
        rule = TopD{static_cast<int>(integer(j["D"], "rule.D"))};
    } else if (type == "bh") {
        require_known_keys(j, {"type", "alpha"}, "rule");
        if (!j.contains("alpha")) throw ConfigError("bh rule needs 'alpha'");
        rule = BHStepUp{number(j["alpha"], "rule.alpha")};
    } else if (type == "elastic_net") {
        require_known_keys(j, {"type", "lambda", "eta"}, "rule");
        ElasticNet en;
        if (j.contains("lambda")) en.lambda = number(j["lambda"], "rule.lambda");
        if (j.contains("eta")) en.eta = number(j["eta"], "rule.eta");
        rule = en;
    } else {
        throw ConfigError("unknown rule type '" + type + "'");
    }
    try {
        validate_rule(rule);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return rule;
}

ExperimentConfig experiment_from_json(const json& j) {
    require_known_keys(j,
                       {"n1", "n2", "rule", "mode", "replications", "seed", "level", "family", "d", "sigma",
                        "sqrt_n_beta", "regime", "target_pivots", "intervals", "mv_n_mc", "quadrature"},
                       "simulate config");
    ExperimentConfig cfg;
    if (j.contains("sigma")) {
        cfg.sigma = matrix_from_json(j["sigma"], "sigma");
        if (j.contains("d") && integer(j["d"], "d") != cfg.sigma.rows()) throw ConfigError("d disagrees with sigma");
    } else {
        if (!j.contains("d")) throw ConfigError("simulate config needs 'd' or 'sigma'");
        const long d = integer(j["d"], "d");
        if (d < 1) throw ConfigError("d must be >= 1");
        cfg.sigma = Eigen::MatrixXd::Identity(d, d);
    }
    const int d = static_cast<int>(cfg.sigma.rows());
    if (j.contains("n1")) cfg.n1 = static_cast<int>(integer(j["n1"], "n1"));
    if (j.contains("n2")) cfg.n2 = static_cast<int>(integer(j["n2"], "n2"));
    if (!j.contains("rule")) throw ConfigError("simulate config needs 'rule'");
    cfg.rule = rule_from_json(j["rule"], d);
    if (j.contains("mode")) {
        if (!j["mode"].is_string()) throw ConfigError("mode must be a string");
        cfg.mode = parse_mode(j["mode"].get<std::string>());
    }
    if (j.contains("replications")) cfg.replications = integer(j["replications"], "replications");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
        cfg.master_seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("level")) cfg.level = number(j["level"], "level");
    if (j.contains("family")) {
        if (!j["family"].is_string()) throw ConfigError("family must be a string");
        cfg.family = parse_family(j["family"].get<std::string>());
    }
    if (j.contains("regime") && j.contains("sqrt_n_beta")) throw ConfigError("give either 'regime' or 'sqrt_n_beta'");
    if (j.contains("regime")) {
        const auto& r = j["regime"];
        require_known_keys(r, {"gamma", "beta_bar"}, "regime");
        if (!r.contains("gamma") || !r.contains("beta_bar")) throw ConfigError("regime needs 'gamma' and 'beta_bar'");
        cfg.regime = RegimeSpec{number(r["gamma"], "regime.gamma"), vector_from_json(r["beta_bar"], d, "regime.beta_bar")};
    } else {
        cfg.sqrt_n_beta = j.contains("sqrt_n_beta") ? vector_from_json(j["sqrt_n_beta"], d, "sqrt_n_beta")
                                                    : Eigen::VectorXd::Zero(d);
    }
    if (j.contains("target_pivots")) cfg.target_pivots = integer(j["target_pivots"], "target_pivots");
    if (j.contains("intervals")) {
        if (!j["intervals"].is_boolean()) throw ConfigError("intervals must be a boolean");
        cfg.intervals = j["intervals"].get<bool>();
    }
    if (j.contains("mv_n_mc")) cfg.mv_n_mc = integer(j["mv_n_mc"], "mv_n_mc");
    if (j.contains("quadrature")) cfg.quadrature = quadrature_from_json(j["quadrature"]);
    cfg.validate();
    return cfg;
}

json rule_to_json(const ScreeningRule& rule) {
    json j;
    j["type"] = rule_name(rule);
    if (const auto* r = std::get_if<FixedThreshold>(&rule)) j["lambda"] = vec_json(r->lambda);
    if (const auto* r = std::get_if<TopD>(&rule)) j["D"] = r->count;
    if (const auto* r = std::get_if<BHStepUp>(&rule)) j["alpha"] = r->alpha;
    if (const auto* r = std::get_if<ElasticNet>(&rule)) {
        j["lambda"] = r->lambda;
        j["eta"] = r->eta;
    }
    return j;
}

json experiment_to_json(const ExperimentConfig& cfg) {
    json j;
    j["n1"] = cfg.n1;
    j["n2"] = cfg.n2;
    j["rule"] = rule_to_json(cfg.rule);
    j["mode"] = mode_name(cfg.mode);
    j["replications"] = cfg.replications;
    j["seed"] = cfg.master_seed;
    j["level"] = cfg.level;
    j["family"] = family_name(cfg.family);
    j["sigma"] = mat_json(cfg.sigma);
    if (cfg.regime) {
        j["regime"] = {{"gamma", cfg.regime->gamma}, {"beta_bar", vec_json(cfg.regime->beta_bar)}};
    } else {
        j["sqrt_n_beta"] = vec_json(cfg.sqrt_n_beta);
    }
    j["target_pivots"] = cfg.target_pivots;
    j["intervals"] = cfg.intervals;
    j["mv_n_mc"] = cfg.mv_n_mc;
    return j;
}

json selection_to_json(const SelectionOutcome& sel) {
    json j;
    j["rule"] = rule_to_json(sel.rule);
    j["empty"] = sel.empty();
    j["selected"] = sel.selected;
    j["signs"] = sel.signs;
    j["dropped"] = sel.dropped;
    j["dropped_values"] = vec_json(sel.dropped_values);
    json t;
    if (const auto* x = std::get_if<LambdaThresholds>(&sel.threshold)) {
        t["kind"] = "lambda_vector";
        t["lambda"] = vec_json(x->lambda);
    } else if (const auto* x = std::get_if<OrderStatisticThreshold>(&sel.threshold)) {
        t["kind"] = "abs_dplus1_stat";
        t["value"] = x->abs_next;
    } else if (const auto* x = std::get_if<BhThreshold>(&sel.threshold)) {
        t["kind"] = "bh_pair";
        t["rejections"] = x->rejections;
        if (x->rejections > 0) {
            t["tau"] = x->tau;
        } else {
            t["tau"] = nullptr;
            t["tau_reason"] = "no rejections";
        }
    }
    j["threshold"] = t;
    return j;
}

json pivot_to_json(const PivotResult& p) {
    json j;
    put_number(j, "value", p.value);
    put_number(j, "numerator", p.numerator);
    put_number(j, "denominator", p.denominator);
    put_number(j, "quadrature_error", p.quadrature_error);
    put_number(j, "std_error", p.std_error);
    return j;
}

json interval_to_json(const ConfidenceInterval& ci) {
    json j;
    put_number(j, "lower", ci.lower);
    put_number(j, "upper", ci.upper);
    j["level"] = ci.level;
    j["iterations"] = ci.iterations;
    return j;
}

}  // namespace carve

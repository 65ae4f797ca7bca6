#include "carve/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "carve/asymptotics.hpp"
#include "carve/carve_mv.hpp"
#include "carve/carve_seq.hpp"
#include "carve/elastic_net.hpp"
#include "carve/errors.hpp"
#include "carve/report_io.hpp"
#include "carve/selection.hpp"
#include "carve/sim.hpp"

namespace carve {

namespace {

using nlohmann::json;

struct Flags {
    std::string config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string format = "json";
};

json load_config(const std::string& path, bool required) {
    if (path.empty()) {
        if (required) throw ConfigError("--config is required");
        return json::object();
    }
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON in '") + path + "': " + e.what());
    }
}

double get_number(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    if (!j[key].is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
    return j[key].get<double>();
}

double get_number_or(const json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ConfigError("'" + key + "' must be a number");
    return j[key].get<double>();
}

int get_sign(const json& j) {
    const double s = get_number_or(j, "sign", 1.0);
    if (s != 1.0 && s != -1.0) throw ConfigError("'sign' must be +1 or -1");
    return static_cast<int>(s);
}

std::uint64_t seed_of(const json& j, const Flags& f) {
    if (f.seed) return *f.seed;
    if (!j.contains("seed")) return 1;
    if (!j["seed"].is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
    return j["seed"].get<std::uint64_t>();
}

void emit(std::ostream& out, const Flags& f, const json& j, const std::vector<std::string>& csv_keys) {
    if (f.format == "csv") {
        for (std::size_t i = 0; i < csv_keys.size(); ++i) out << (i ? "," : "") << csv_keys[i];
        out << "\n";
        for (std::size_t i = 0; i < csv_keys.size(); ++i) {
            const auto& v = j.at(csv_keys[i]);
            out << (i ? "," : "");
            if (v.is_number_float()) {
                out << format_double(v.get<double>());
            } else if (!v.is_null()) {
                out << csv_field(v.is_string() ? v.get<std::string>() : v.dump());
            }
        }
        out << "\n";
    } else {
        out << j.dump(2) << "\n";
    }
}

Eigen::VectorXd read_vector_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read data file '" + path + "'");
    std::vector<double> values;
    for (const auto& row : parse_csv(in)) {
        for (const auto& cell : row) {
            if (cell.empty()) continue;
            std::size_t used = 0;
            double v;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                if (values.empty()) continue;  // header
                throw ConfigError("non-numeric entry '" + cell + "' in '" + path + "'");
            }
            if (used != cell.size()) throw ConfigError("non-numeric entry '" + cell + "' in '" + path + "'");
            values.push_back(v);
        }
    }
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// ---- screen ----------------------------------------------------------------------------------

int cmd_screen(const Flags& f, std::ostream& out) {
    const json cfg = load_config(f.config, true);
    require_known_keys(cfg, {"rule", "z1", "data_csv", "y1", "X1", "rho"}, "screen config");
    if (!cfg.contains("rule")) throw ConfigError("screen config needs 'rule'");

    if (cfg["rule"].is_object() && cfg["rule"].value("type", "") == "elastic_net") {
        const auto rule = std::get<ElasticNet>(rule_from_json(cfg["rule"], -1));
        if (!cfg.contains("y1") || !cfg.contains("X1")) throw ConfigError("elastic_net screen needs 'y1' and 'X1'");
        const Eigen::MatrixXd x1 = matrix_from_json(cfg["X1"], "X1");
        const Eigen::VectorXd y1 = vector_from_json(cfg["y1"], static_cast<int>(x1.rows()), "y1");
        const auto fit = elastic_net_fit(y1, x1, rule.lambda, rule.eta, get_number_or(cfg, "rho", 1.0));
        json j;
        j["rule"] = rule_to_json(rule);
        j["empty"] = fit.active.empty();
        if (fit.active.empty()) j["status"] = "empty_selection";
        j["selected"] = fit.active;
        j["signs"] = fit.active_signs;
        j["dropped"] = fit.inactive;
        j["dropped_values"] = std::vector<double>(fit.inactive_subgradient.data(),
                                                  fit.inactive_subgradient.data() + fit.inactive_subgradient.size());
        j["beta_hat"] = std::vector<double>(fit.beta_hat.data(), fit.beta_hat.data() + fit.beta_hat.size());
        j["kkt_residual"] = fit.kkt_residual;
        out << j.dump(2) << "\n";
        return kExitOk;
    }

    Eigen::VectorXd z1;
    if (cfg.contains("z1") == cfg.contains("data_csv")) throw ConfigError("screen config needs exactly one of 'z1' or 'data_csv'");
    if (cfg.contains("z1")) {
        z1 = vector_from_json(cfg["z1"], -1, "z1");
    } else {
        if (!cfg["data_csv"].is_string()) throw ConfigError("'data_csv' must be a path");
        z1 = read_vector_csv(cfg["data_csv"].get<std::string>());
    }
    if (z1.size() < 1) throw ConfigError("z1 is empty");
    const auto rule = rule_from_json(cfg["rule"], static_cast<int>(z1.size()));
    SelectionOutcome sel;
    try {
        sel = apply_screening(rule, z1);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (f.format == "csv") {
        out << "index,z1,selected,sign\n";
        for (Eigen::Index i = 0; i < z1.size(); ++i) {
            const auto it = std::find(sel.selected.begin(), sel.selected.end(), static_cast<int>(i));
            const bool chosen = it != sel.selected.end();
            out << i << ',' << format_double(z1[i]) << ',' << (chosen ? 1 : 0) << ','
                << (chosen ? sel.signs[static_cast<std::size_t>(it - sel.selected.begin())] : 0) << "\n";
        }
        return kExitOk;
    }
    json j = selection_to_json(sel);
    if (sel.empty()) j["status"] = "empty_selection";
    out << j.dump(2) << "\n";
    return kExitOk;
}

// ---- pivot / ci ------------------------------------------------------------------------------

struct MvSetup {
    CarveGeometry geometry;
    Eigen::VectorXd z;
    int target = 0;
};

MvSetup mv_setup(const json& cfg) {
    MvSetup s;
    const Eigen::MatrixXd sigma = matrix_from_json(cfg.at("sigma"), "sigma");
    const int d = static_cast<int>(sigma.rows());
    const double rho = get_number(cfg, "rho", "mv config");
    if (!cfg.contains("z")) throw ConfigError("mv config needs 'z'");
    s.z = vector_from_json(cfg["z"], d, "z");
    if (!cfg.contains("target") || !cfg["target"].is_number_integer()) throw ConfigError("mv config needs integer 'target'");
    s.target = cfg["target"].get<int>();
    if (s.target < 0 || s.target >= d) throw ConfigError("'target' out of range");
    try {
        if (cfg.contains("q_e")) {
            s.geometry.sigma = sigma;
            s.geometry.rho = rho;
            s.geometry.q_e = matrix_from_json(cfg["q_e"], "q_e");
            s.geometry.r_e = vector_from_json(cfg.at("r_e"), d, "r_e");
            s.geometry.p_e = cfg.contains("p_e") ? matrix_from_json(cfg["p_e"], "p_e")
                                                 : Eigen::MatrixXd(-Eigen::MatrixXd::Identity(d, d));
            s.geometry.omega = cfg.contains("omega") ? matrix_from_json(cfg["omega"], "omega")
                                                     : Eigen::MatrixXd(rho * rho * sigma);
            s.geometry.validate();
        } else {
            if (!cfg.contains("rule") || !cfg.contains("augmented")) {
                throw ConfigError("mv config needs either 'q_e'/'r_e' or 'rule'/'augmented'");
            }
            const Eigen::VectorXd aug = vector_from_json(cfg["augmented"], d, "augmented");
            const auto sel = apply_screening(rule_from_json(cfg["rule"], d), aug / std::sqrt(1.0 + rho * rho));
            if (sel.empty()) throw ConfigError("the rule selects nothing; no conditional inference is defined");
            s.geometry = screening_geometry(sigma, sel, aug, rho);
        }
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    } catch (const NumericError& e) {
        throw ConfigError(e.what());
    }
    return s;
}

MvPivotOptions mv_options(const json& cfg) {
    MvPivotOptions o;
    if (cfg.contains("n_mc")) {
        if (!cfg["n_mc"].is_number_integer()) throw ConfigError("'n_mc' must be an integer");
        o.n_mc = cfg["n_mc"].get<long>();
    }
    if (cfg.contains("force_mc")) {
        if (!cfg["force_mc"].is_boolean()) throw ConfigError("'force_mc' must be a boolean");
        o.force_mc = cfg["force_mc"].get<bool>();
    }
    if (cfg.contains("quadrature")) o.quadrature = quadrature_from_json(cfg["quadrature"]);
    return o;
}

SeqCarveProblem seq_problem(const json& cfg, double m) {
    SeqCarveProblem p;
    p.m = m;
    p.rho = get_number(cfg, "rho", "seq config");
    p.sign = get_sign(cfg);
    if (cfg.contains("offset") == cfg.contains("threshold")) {
        throw ConfigError("seq config needs exactly one of 'offset' or 'threshold'");
    }
    p.offset = cfg.contains("offset") ? get_number(cfg, "offset", "seq config")
                                      : std::sqrt(1.0 + p.rho * p.rho) * p.sign * get_number(cfg, "threshold", "seq config");
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return p;
}

const std::vector<std::string> kSeqKeys = {"model", "z_obs", "m", "rho", "offset", "threshold", "sign", "level",
                                           "quadrature"};
const std::vector<std::string> kMvKeys = {"model", "sigma", "z", "augmented", "rule", "q_e", "r_e", "p_e", "omega",
                                          "rho", "target", "mean", "level", "n_mc", "force_mc", "seed", "quadrature"};

std::string model_of(const json& cfg) {
    if (!cfg.contains("model")) return "seq";
    if (!cfg["model"].is_string()) throw ConfigError("'model' must be \"seq\" or \"mv\"");
    const auto m = cfg["model"].get<std::string>();
    if (m != "seq" && m != "mv") throw ConfigError("'model' must be \"seq\" or \"mv\"");
    return m;
}

int cmd_pivot(const Flags& f, std::ostream& out) {
    const json cfg = load_config(f.config, true);
    const auto model = model_of(cfg);
    PivotResult res;
    if (model == "seq") {
        require_known_keys(cfg, kSeqKeys, "pivot config");
        const auto prob = seq_problem(cfg, get_number(cfg, "m", "pivot config"));
        const auto quad = cfg.contains("quadrature") ? quadrature_from_json(cfg["quadrature"]) : QuadratureConfig{};
        res = seq_pivot(get_number(cfg, "z_obs", "pivot config"), prob, quad);
    } else {
        require_known_keys(cfg, kMvKeys, "pivot config");
        const auto s = mv_setup(cfg);
        RngStream rng(seed_of(cfg, f), 0);
        res = mv_pivot(s.z[s.target], s.target, s.geometry, get_number(cfg, "mean", "pivot config"),
                       nuisance_statistic(s.z, s.geometry.sigma, s.target), mv_options(cfg), rng);
    }
    emit(out, f, pivot_to_json(res), {"value", "numerator", "denominator", "quadrature_error", "std_error"});
    return kExitOk;
}

int cmd_ci(const Flags& f, std::ostream& out) {
    const json cfg = load_config(f.config, true);
    const auto model = model_of(cfg);
    const double level = get_number(cfg, "level", "ci config");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("'level' must lie in (0,1)");
    ConfidenceInterval ci;
    if (model == "seq") {
        require_known_keys(cfg, kSeqKeys, "ci config");
        const auto prob = seq_problem(cfg, 0.0);
        const auto quad = cfg.contains("quadrature") ? quadrature_from_json(cfg["quadrature"]) : QuadratureConfig{};
        ci = seq_confidence_interval(get_number(cfg, "z_obs", "ci config"), prob.rho, prob.offset, prob.sign, level, quad);
    } else {
        require_known_keys(cfg, kMvKeys, "ci config");
        const auto s = mv_setup(cfg);
        RngStream rng(seed_of(cfg, f), 0);
        ci = mv_confidence_interval(s.z[s.target], s.target, s.geometry,
                                    nuisance_statistic(s.z, s.geometry.sigma, s.target), level, mv_options(cfg), rng);
    }
    emit(out, f, interval_to_json(ci), {"lower", "upper", "level", "iterations"});
    return kExitOk;
}

// ---- simulate --------------------------------------------------------------------------------

int cmd_simulate(const Flags& f, std::ostream& out) {
    json cfg_json = load_config(f.config, true);
    if (f.seed) cfg_json["seed"] = *f.seed;
    ExperimentConfig cfg = experiment_from_json(cfg_json);
    if (f.jobs < 1) throw ConfigError("--jobs must be >= 1");
    cfg.jobs = f.jobs;
    const auto result = run_two_stage(cfg);
    const json summary = experiment_summary(result);

    const std::filesystem::path dir = f.out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(f.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "'");
    {
        std::ofstream csv(dir / "records.csv", std::ios::binary);
        if (!csv) throw ConfigError("cannot write records.csv in '" + dir.string() + "'");
        write_records_csv(csv, result.records);
    }
    {
        std::ofstream js(dir / "summary.json", std::ios::binary);
        if (!js) throw ConfigError("cannot write summary.json in '" + dir.string() + "'");
        js << summary.dump(2) << "\n";
    }
    if (f.format == "csv") {
        write_records_csv(out, result.records);
    } else {
        out << summary.dump(2) << "\n";
    }
    return kExitOk;
}

// ---- verify ----------------------------------------------------------------------------------

std::vector<double> doubles_or(const json& j, const std::string& key, std::vector<double> fallback) {
    if (!j.contains(key)) return fallback;
    const Eigen::VectorXd v = vector_from_json(j[key], -1, key);
    return std::vector<double>(v.data(), v.data() + v.size());
}

int cmd_verify(const Flags& f, std::ostream& out) {
    const json cfg = load_config(f.config, false);
    require_known_keys(cfg, {"checks", "sandwich_grid", "fault_injection", "convolution", "seq_decay", "mv_decay",
                             "moments", "seed"},
                       "verify config");
    std::vector<std::string> checks = {"sandwich", "convolution", "seq_decay", "mv_decay", "moments"};
    if (cfg.contains("checks")) {
        if (!cfg["checks"].is_array()) throw ConfigError("'checks' must be an array of names");
        checks.clear();
        for (const auto& c : cfg["checks"]) {
            if (!c.is_string()) throw ConfigError("'checks' must be an array of names");
            checks.push_back(c.get<std::string>());
        }
    }
    double perturbation = 0.0;
    if (cfg.contains("fault_injection")) {
        if (cfg["fault_injection"] != "mills_lower") throw ConfigError("fault_injection supports only \"mills_lower\"");
        perturbation = 0.5;
    }
    const std::uint64_t seed = seed_of(cfg, f);

    json report;
    std::vector<std::string> failures;
    for (const auto& name : checks) {
        if (name == "sandwich") {
            const json g = cfg.value("sandwich_grid", json::object());
            require_known_keys(g, {"from", "to", "step"}, "sandwich_grid");
            // The envelopes are used on the rare side, where the argument is positive.
            const auto grid = make_grid(get_number_or(g, "from", 0.0), get_number_or(g, "to", 10.0),
                                        get_number_or(g, "step", 0.01));
            const auto rep = sandwich_report(grid, SandwichOptions{perturbation, false});
            report["sandwich"] = rep;
            if (rep.violations > 0) failures.push_back("sandwich: " + std::to_string(rep.violations) + " violations");
        } else if (name == "convolution") {
            const json c = cfg.value("convolution", json::object());
            require_known_keys(c, {"m", "rho"}, "convolution");
            const auto rows = convolution_check(doubles_or(c, "m", {-6, -3, 0, 2, 6}), doubles_or(c, "rho", {0.5, 1, 2}));
            report["convolution"] = rows;
            for (const auto& r : rows) {
                if (!(r.abs_error < 1e-8)) {
                    failures.push_back("convolution: error " + format_double(r.abs_error) + " at m=" + format_double(r.m) +
                                       " rho=" + format_double(r.rho));
                }
            }
        } else if (name == "seq_decay") {
            const json c = cfg.value("seq_decay", json::object());
            require_known_keys(c, {"m", "rho"}, "seq_decay");
            const auto rows = seq_decay_table(doubles_or(c, "m", {-6, -8, -10, -12}), get_number_or(c, "rho", 1.0));
            report["seq_decay"] = rows;
            for (std::size_t i = 1; i < rows.size(); ++i) {
                const bool larger = std::abs(rows[i].m) > std::abs(rows[i - 1].m);
                if (larger && !(rows[i].rel_error < rows[i - 1].rel_error)) {
                    failures.push_back("seq_decay: relative error not decreasing at m=" + format_double(rows[i].m));
                }
            }
        } else if (name == "mv_decay") {
            const json c = cfg.value("mv_decay", json::object());
            require_known_keys(c, {"q", "alpha_bar", "a", "n_mc"}, "mv_decay");
            const Eigen::MatrixXd q = c.contains("q") ? matrix_from_json(c["q"], "mv_decay.q")
                                                      : Eigen::MatrixXd((Eigen::MatrixXd(2, 2) << -0.5, 0.25, 0.25, -0.5).finished());
            const Eigen::VectorXd abar = c.contains("alpha_bar") ? vector_from_json(c["alpha_bar"], static_cast<int>(q.rows()), "mv_decay.alpha_bar")
                                                                 : Eigen::VectorXd::Constant(q.rows(), 0.4);
            const long n_mc = static_cast<long>(get_number_or(c, "n_mc", 200000));
            const auto rows = mv_decay_table(q, abar, doubles_or(c, "a", {6, 8, 10, 12}), n_mc, seed);
            report["mv_decay"] = rows;
            if (rows.size() >= 2 && !(std::abs(rows.back().ratio - 1.0) < std::abs(rows.front().ratio - 1.0))) {
                failures.push_back("mv_decay: ratio at the largest a is not closer to 1 than at the smallest");
            }
        } else if (name == "moments") {
            const json c = cfg.value("moments", json::object());
            require_known_keys(c, {"n1", "n2", "family", "d", "n_mc"}, "moments");
            const int d = static_cast<int>(get_number_or(c, "d", 2));
            if (d < 1) throw ConfigError("moments.d must be >= 1");
            GenerativeSpec spec{parse_family(c.value("family", std::string("centered_exponential"))),
                                Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
            RngStream rng(seed, 0);
            const auto rep = randomization_moments_check(static_cast<int>(get_number_or(c, "n1", 50)),
                                                         static_cast<int>(get_number_or(c, "n2", 50)), spec,
                                                         static_cast<long>(get_number_or(c, "n_mc", 20000)), rng);
            report["moments"] = rep;
            if (!rep.passed()) failures.push_back("moments: estimate outside 3 standard errors of its target");
        } else {
            throw ConfigError("unknown check '" + name + "'");
        }
    }
    report["passed"] = failures.empty();
    report["failures"] = failures;
    out << report.dump(2) << "\n";
    return failures.empty() ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Carved selective inference: screening, pivots, intervals, simulation and verification", "carve"};
    app.require_subcommand(1);
    Flags flags;
    std::uint64_t seed_value = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "JSON configuration file");
        sub->add_option("--out", flags.out_dir, "output directory (simulate)");
        sub->add_option("--seed", seed_value, "override the master seed");
        sub->add_option("--jobs", flags.jobs, "worker threads (simulate)")->check(CLI::PositiveNumber);
        sub->add_option("--format", flags.format, "output format")->check(CLI::IsMember({"csv", "json"}));
    };
    auto* screen = app.add_subcommand("screen", "apply a selection rule");
    auto* pivot = app.add_subcommand("pivot", "carved pivot");
    auto* ci = app.add_subcommand("ci", "carved confidence interval");
    auto* simulate = app.add_subcommand("simulate", "two-stage simulation batch");
    auto* verify = app.add_subcommand("verify", "asymptotic and numerical checks");
    for (auto* s : {screen, pivot, ci, simulate, verify}) add_common(s);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, e2;
        const int code = app.exit(e, o, e2);
        out << o.str();
        err << e2.str();
        return code == 0 ? kExitOk : kExitConfig;
    }
    for (auto* s : {screen, pivot, ci, simulate, verify}) {
        if (s->count("--seed") > 0) flags.seed = seed_value;
    }

    try {
        if (screen->parsed()) return cmd_screen(flags, out);
        if (pivot->parsed()) return cmd_pivot(flags, out);
        if (ci->parsed()) return cmd_ci(flags, out);
        if (simulate->parsed()) return cmd_simulate(flags, out);
        if (verify->parsed()) return cmd_verify(flags, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const RareEventUnderflow& e) {
        err << "rare event underflow: " << e.what() << "\n";
        return kExitUnderflow;
    } catch (const nlohmann::json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace carve

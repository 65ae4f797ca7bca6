#include "carve/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "carve/errors.hpp"
#include "carve/gauss_core.hpp"

namespace carve {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_finite(const Eigen::VectorXd& z, const char* where) {
    if (!z.allFinite()) throw DomainError(std::string(where) + ": non-finite statistic");
}

int sign_of(double v) { return v < 0.0 ? -1 : 1; }

// Indices ordered by decreasing |z|, ascending index among ties.
std::vector<int> rank_by_magnitude(const Eigen::VectorXd& z) {
    std::vector<int> idx(static_cast<std::size_t>(z.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return std::abs(z[a]) > std::abs(z[b]); });
    return idx;
}

void fill_dropped(SelectionOutcome& out, const Eigen::VectorXd& z) {
    std::vector<char> in(static_cast<std::size_t>(z.size()), 0);
    for (int j : out.selected) in[static_cast<std::size_t>(j)] = 1;
    for (int j = 0; j < z.size(); ++j) {
        if (!in[static_cast<std::size_t>(j)]) out.dropped.push_back(j);
    }
    out.dropped_values.resize(static_cast<Eigen::Index>(out.dropped.size()));
    for (std::size_t k = 0; k < out.dropped.size(); ++k) {
        out.dropped_values[static_cast<Eigen::Index>(k)] = z[out.dropped[k]];
    }
}

}  // namespace

void validate_rule(const ScreeningRule& rule) {
    std::visit(Overloaded{
                   [](const FixedThreshold& r) {
                       if (r.lambda.size() == 0 || !r.lambda.allFinite()) {
                           throw DomainError("FixedThreshold: lambda must be non-empty and finite");
                       }
                   },
                   [](const TopD& r) {
                       if (r.count < 1) throw DomainError("TopD: D must be >= 1");
                   },
                   [](const BHStepUp& r) {
                       if (!(r.alpha > 0.0 && r.alpha < 1.0)) throw DomainError("BHStepUp: alpha must lie in (0,1)");
                   },
                   [](const ElasticNet& r) {
                       if (!(r.lambda >= 0.0) || !(r.eta >= 0.0)) {
                           throw DomainError("ElasticNet: lambda and eta must be >= 0");
                       }
                   },
               },
               rule);
}

const char* rule_name(const ScreeningRule& rule) {
    return std::visit(Overloaded{
                          [](const FixedThreshold&) { return "threshold"; },
                          [](const TopD&) { return "top_d"; },
                          [](const BHStepUp&) { return "bh"; },
                          [](const ElasticNet&) { return "elastic_net"; },
                      },
                      rule);
}

double SelectionOutcome::cutoff(std::size_t k) const {
    if (k >= selected.size()) throw DomainError("SelectionOutcome::cutoff: index out of range");
    return std::visit(Overloaded{
                          [&](const LambdaThresholds& t) { return t.lambda[selected[k]]; },
                          [](const OrderStatisticThreshold& t) { return t.abs_next; },
                          [](const BhThreshold& t) { return t.tau; },
                      },
                      threshold);
}

double SelectionOutcome::offset(std::size_t k, double rho) const {
    return std::sqrt(1.0 + rho * rho) * signs[k] * cutoff(k);
}

SelectionOutcome screen_threshold(const Eigen::VectorXd& z1, const Eigen::VectorXd& lambda) {
    if (z1.size() != lambda.size()) throw DomainError("screen_threshold: dimension mismatch");
    require_finite(z1, "screen_threshold");
    SelectionOutcome out;
    out.rule = FixedThreshold{lambda};
    validate_rule(out.rule);
    for (int j = 0; j < z1.size(); ++j) {
        if (z1[j] > lambda[j]) {
            out.selected.push_back(j);
            out.signs.push_back(1);
        }
    }
    out.threshold = LambdaThresholds{lambda};
    fill_dropped(out, z1);
    return out;
}

SelectionOutcome screen_top_d(const Eigen::VectorXd& z1, int count) {
    require_finite(z1, "screen_top_d");
    if (count < 1 || count >= z1.size()) throw DomainError("screen_top_d: requires 1 <= D < d");
    const auto order = rank_by_magnitude(z1);
    SelectionOutcome out;
    out.rule = TopD{count};
    for (int k = 0; k < count; ++k) {
        out.selected.push_back(order[static_cast<std::size_t>(k)]);
        out.signs.push_back(sign_of(z1[order[static_cast<std::size_t>(k)]]));
    }
    out.threshold = OrderStatisticThreshold{std::abs(z1[order[static_cast<std::size_t>(count)]])};
    fill_dropped(out, z1);
    return out;
}

SelectionOutcome screen_bh(const Eigen::VectorXd& z1, double alpha) {
    require_finite(z1, "screen_bh");
    SelectionOutcome out;
    out.rule = BHStepUp{alpha};
    validate_rule(out.rule);
    const auto order = rank_by_magnitude(z1);  // ascending p-value order
    const double d = static_cast<double>(z1.size());
    int rejections = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const double p = 2.0 * std_normal_survival(std::abs(z1[order[k]]));
        if (p <= (k + 1.0) * alpha / d) rejections = static_cast<int>(k + 1);
    }
    for (int k = 0; k < rejections; ++k) {
        out.selected.push_back(order[static_cast<std::size_t>(k)]);
        out.signs.push_back(sign_of(z1[order[static_cast<std::size_t>(k)]]));
    }
    const double tau = rejections > 0 ? std_normal_quantile(1.0 - rejections * alpha / (2.0 * d)) : 0.0;
    out.threshold = BhThreshold{rejections, tau};
    fill_dropped(out, z1);
    return out;
}

SelectionOutcome apply_screening(const ScreeningRule& rule, const Eigen::VectorXd& z1) {
    return std::visit(Overloaded{
                          [&](const FixedThreshold& r) { return screen_threshold(z1, r.lambda); },
                          [&](const TopD& r) { return screen_top_d(z1, r.count); },
                          [&](const BHStepUp& r) { return screen_bh(z1, r.alpha); },
                          [](const ElasticNet&) -> SelectionOutcome {
                              throw DomainError("apply_screening: elastic net is a regression rule");
                          },
                      },
                      rule);
}

}  // namespace carve

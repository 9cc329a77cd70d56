#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace greensplit {

/// Absolute tolerance for the green-budget identity sum(greens) == C - L.
inline constexpr double kBudgetTolerance = 1e-9;

namespace detail {
inline std::string fmt_s(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}
} // namespace detail

/// One inbound arm of the intersection, served by its own green phase.
struct ApproachSpec {
    std::string id;
    double saturation_flow_veh_s = 0.0; ///< total departure rate during green, all lanes
    int lanes = 1;
};

/// Static description of a signalized intersection: geometry, cycle
/// structure and the per-approach green bounds the optimizer must respect.
struct IntersectionSpec {
    std::string id;
    std::vector<ApproachSpec> approaches;
    double cycle_length_s = 0.0;
    double lost_time_s = 0.0; ///< aggregate interphase clearance per cycle
    std::vector<double> green_min_s;
    std::vector<double> green_max_s;

    std::size_t size() const { return approaches.size(); }
    double green_budget_s() const { return cycle_length_s - lost_time_s; }

    /// Throws std::invalid_argument naming the offending field.
    void validate() const {
        const std::size_t n = approaches.size();
        if (n < 2)
            throw std::invalid_argument("intersection '" + id + "': needs at least 2 approaches");
        if (green_min_s.size() != n || green_max_s.size() != n)
            throw std::invalid_argument("intersection '" + id + "': green bounds must have one entry per approach");
        if (!(lost_time_s >= 0.0))
            throw std::invalid_argument("intersection '" + id + "': lost_time_s must be >= 0");
        if (!(cycle_length_s > lost_time_s))
            throw std::invalid_argument("intersection '" + id + "': cycle_length_s must exceed lost_time_s");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& a = approaches[i];
            if (a.id.empty())
                throw std::invalid_argument("intersection '" + id + "': approach id must be nonempty");
            if (!seen.insert(a.id).second)
                throw std::invalid_argument("intersection '" + id + "': duplicate approach id '" + a.id + "'");
            if (!(a.saturation_flow_veh_s > 0.0))
                throw std::invalid_argument("approach '" + a.id + "': saturation_flow must be > 0");
            if (a.lanes < 1)
                throw std::invalid_argument("approach '" + a.id + "': lanes must be >= 1");
            if (!(green_min_s[i] > 0.0))
                throw std::invalid_argument("approach '" + a.id + "': green_min_s must be > 0");
            if (green_min_s[i] > green_max_s[i])
                throw std::invalid_argument("approach '" + a.id + "': green_min_s exceeds green_max_s");
        }
        const double budget = green_budget_s();
        const double lo = std::accumulate(green_min_s.begin(), green_min_s.end(), 0.0);
        const double hi = std::accumulate(green_max_s.begin(), green_max_s.end(), 0.0);
        if (lo > budget + kBudgetTolerance || hi < budget - kBudgetTolerance)
            throw std::invalid_argument("intersection '" + id + "': empty feasible region, green budget " +
                                        detail::fmt_s(budget) + " outside [" + detail::fmt_s(lo) + ", " +
                                        detail::fmt_s(hi) + "]");
    }
};

/// Green splits for one cycle. Feasible plans satisfy
/// sum(greens_s) + lost_time_s == cycle_length_s to kBudgetTolerance.
struct SignalPlan {
    std::vector<double> greens_s;
    double cycle_length_s = 0.0;
    double lost_time_s = 0.0;
};

/// One sensor reading: vehicles counted on an approach during interval t.
struct FlowObservation {
    std::string approach_id;
    long t = 0; ///< interval index
    double flow_veh_per_interval = 0.0;
};

/// Exogenous inputs for interval t (weather, events, ...), q values.
struct ExogenousRecord {
    long t = 0;
    std::vector<double> values;
};

struct PlanCheck {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
    std::string to_string() const {
        std::string s;
        for (const auto& v : violations) {
            if (!s.empty()) s += "; ";
            s += v;
        }
        return s.empty() ? "ok" : s;
    }
};

/// Check a plan against the spec's bounds and the cycle-budget identity.
/// Throws on dimension mismatch; everything else is reported as violations.
inline PlanCheck validate_plan(const SignalPlan& plan, const IntersectionSpec& spec) {
    if (plan.greens_s.size() != spec.size())
        throw std::invalid_argument("validate_plan: plan has " + std::to_string(plan.greens_s.size()) +
                                    " greens, spec has " + std::to_string(spec.size()) + " approaches");
    PlanCheck check;
    if (std::abs(plan.cycle_length_s - spec.cycle_length_s) > kBudgetTolerance)
        check.violations.push_back("plan cycle_length_s " + detail::fmt_s(plan.cycle_length_s) +
                                   " != spec " + detail::fmt_s(spec.cycle_length_s));
    if (std::abs(plan.lost_time_s - spec.lost_time_s) > kBudgetTolerance)
        check.violations.push_back("plan lost_time_s " + detail::fmt_s(plan.lost_time_s) +
                                   " != spec " + detail::fmt_s(spec.lost_time_s));
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const double g = plan.greens_s[i];
        if (g < spec.green_min_s[i] - kBudgetTolerance)
            check.violations.push_back("approach " + spec.approaches[i].id + ": green " + detail::fmt_s(g) +
                                       " s below green_min " + detail::fmt_s(spec.green_min_s[i]) + " s");
        if (g > spec.green_max_s[i] + kBudgetTolerance)
            check.violations.push_back("approach " + spec.approaches[i].id + ": green " + detail::fmt_s(g) +
                                       " s above green_max " + detail::fmt_s(spec.green_max_s[i]) + " s");
    }
    const double sum = std::accumulate(plan.greens_s.begin(), plan.greens_s.end(), 0.0);
    const double budget = spec.green_budget_s();
    if (std::abs(sum - budget) > kBudgetTolerance)
        check.violations.push_back("green budget: sum " + detail::fmt_s(sum) + " s != cycle " +
                                   detail::fmt_s(spec.cycle_length_s) + " - lost " +
                                   detail::fmt_s(spec.lost_time_s) + " = " + detail::fmt_s(budget) + " s");
    return check;
}

/// Analytic average wait (seconds per vehicle) for one approach.
///
/// Webster-style uniform delay with the degree of saturation clamped at
/// 0.98 to stay off the pole, plus a linear surcharge once demand exceeds
/// capacity:
///
///   d = 0.5 * C * (1 - g/C)^2 / (1 - min(X, 0.98) * g/C)
///   d += 0.5 * (X - 1) * interval   when X > 1
///
/// where X = (flow/interval) / (saturation_flow * g/C).
inline double approach_wait(double flow_veh_per_interval, double green_s, double cycle_s,
                            double saturation_flow_veh_s, double interval_s) {
    if (!(green_s > 0.0) || !(cycle_s > 0.0))
        throw std::domain_error("approach_wait: green and cycle must be > 0");
    if (!(saturation_flow_veh_s > 0.0) || !(interval_s > 0.0))
        throw std::domain_error("approach_wait: saturation_flow and interval must be > 0");
    if (flow_veh_per_interval < 0.0)
        throw std::domain_error("approach_wait: flow must be >= 0");
    if (green_s > cycle_s + kBudgetTolerance)
        throw std::domain_error("approach_wait: green exceeds cycle");

    const double g_ratio = std::min(green_s / cycle_s, 1.0);
    const double arrival_rate = flow_veh_per_interval / interval_s;
    const double degree_of_saturation = arrival_rate / (saturation_flow_veh_s * g_ratio);

    const double one_minus = 1.0 - g_ratio;
    double wait = 0.5 * cycle_s * one_minus * one_minus /
                  (1.0 - std::min(degree_of_saturation, 0.98) * g_ratio);
    if (degree_of_saturation > 1.0)
        wait += 0.5 * (degree_of_saturation - 1.0) * interval_s;
    return wait;
}

/// Aggregated objective W: arithmetic mean of approach_wait over approaches.
/// The plan must be feasible; violations propagate as std::invalid_argument.
inline double aggregate_wait(const SignalPlan& plan, const std::vector<double>& flows_veh_per_interval,
                             const IntersectionSpec& spec, double interval_s) {
    const PlanCheck check = validate_plan(plan, spec);
    if (!check.ok())
        throw std::invalid_argument("aggregate_wait: infeasible plan: " + check.to_string());
    if (flows_veh_per_interval.size() != spec.size())
        throw std::invalid_argument("aggregate_wait: flows size " + std::to_string(flows_veh_per_interval.size()) +
                                    " != approaches " + std::to_string(spec.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i)
        sum += approach_wait(flows_veh_per_interval[i], plan.greens_s[i], plan.cycle_length_s,
                             spec.approaches[i].saturation_flow_veh_s, interval_s);
    return sum / static_cast<double>(spec.size());
}

} // namespace greensplit

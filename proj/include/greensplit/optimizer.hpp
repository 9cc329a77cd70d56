#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "greensplit/domain.hpp"
#include "greensplit/rng.hpp"

namespace greensplit {

/// Simulated-annealing parameters. Defaults follow the shipped scenarios:
/// geometric cooling from t_max down to t_min, a fixed number of proposals
/// per temperature, and pairwise green transfers of at most delta_max_s.
struct AnnealSchedule {
    double t_max = 50.0;
    double t_min = 0.01;
    double cooling = 0.95;
    int iters_per_temp = 40;
    double delta_max_s = 5.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(t_max > t_min) || !(t_min > 0.0))
            throw std::invalid_argument("anneal schedule: need t_max > t_min > 0");
        if (!(cooling > 0.0) || !(cooling < 1.0))
            throw std::invalid_argument("anneal schedule: cooling must be in (0,1)");
        if (iters_per_temp < 1)
            throw std::invalid_argument("anneal schedule: iters_per_temp must be >= 1");
        if (!(delta_max_s >= 1.0))
            throw std::invalid_argument("anneal schedule: delta_max_s must be >= 1");
    }
};

struct OptimizationResult {
    SignalPlan best_plan;
    double best_cost = 0.0;
    long evaluations = 0;
    long accepted_moves = 0;
    std::vector<std::pair<double, double>> trace; ///< (temperature, current cost) per level
};

struct BruteForceStats {
    long candidates = 0; ///< feasible grid splits evaluated
};

/// Objective for the optimizer: aggregate_wait of the candidate plan under
/// the forecast flows. Throws std::domain_error on infeasible plans.
inline double cost(const SignalPlan& plan, const std::vector<double>& flows_veh_per_interval,
                   const IntersectionSpec& spec, double interval_s) {
    const PlanCheck check = validate_plan(plan, spec);
    if (!check.ok()) throw std::domain_error("cost: infeasible plan: " + check.to_string());
    return aggregate_wait(plan, flows_veh_per_interval, spec, interval_s);
}

/// Budget-preserving mutation: transfer delta ~ U[0.5, delta_max_s] seconds
/// of green from one approach to another, truncated so both stay within
/// bounds. If truncation kills the move, redraw; after 8 dead draws the
/// plan is returned unchanged.
inline SignalPlan perturb(const SignalPlan& plan, const IntersectionSpec& spec, Rng& rng, double delta_max_s) {
    const std::size_t n = plan.greens_s.size();
    if (n != spec.size()) throw std::invalid_argument("perturb: plan/spec dimension mismatch");
    SignalPlan out = plan;
    for (int attempt = 0; attempt < 8; ++attempt) {
        const std::size_t from = static_cast<std::size_t>(rng.uniform_int(n));
        std::size_t to = static_cast<std::size_t>(rng.uniform_int(n - 1));
        if (to >= from) ++to;
        double delta = rng.uniform(0.5, delta_max_s);
        const double headroom = std::min(out.greens_s[from] - spec.green_min_s[from],
                                         spec.green_max_s[to] - out.greens_s[to]);
        delta = std::min(delta, headroom);
        if (delta <= 0.0) continue;
        out.greens_s[from] -= delta;
        out.greens_s[to] += delta;
        return out;
    }
    return out;
}

/// Euclidean projection of raw onto {x : sum(x) = budget, min <= x <= max}.
///
/// The projection has the form x_i = clamp(raw_i + nu, min_i, max_i) for a
/// scalar shift nu; sum(x) is nondecreasing in nu, so bisection on nu
/// converges to the budget. The spec invariant (nonempty feasible region)
/// guarantees a bracket exists.
inline SignalPlan project_feasible(const std::vector<double>& raw, const IntersectionSpec& spec) {
    spec.validate();
    const std::size_t n = spec.size();
    if (raw.size() != n) throw std::invalid_argument("project_feasible: raw size != approaches");
    const double budget = spec.green_budget_s();

    auto shifted_sum = [&](double nu, std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = std::clamp(raw[i] + nu, spec.green_min_s[i], spec.green_max_s[i]);
            s += x[i];
        }
        return s;
    };

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, spec.green_min_s[i] - raw[i]); // everything clamps to min
        hi = std::max(hi, spec.green_max_s[i] - raw[i]); // everything clamps to max
    }
    std::vector<double> x(n);
    for (int iter = 0; iter < 200 && hi - lo > 0.0; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break; // bracket exhausted at machine precision
        if (shifted_sum(mid, x) < budget)
            lo = mid;
        else
            hi = mid;
    }
    // pick the bracket end whose sum lands closer to the budget
    std::vector<double> x_hi(n);
    const double s_lo = shifted_sum(lo, x);
    const double s_hi = shifted_sum(hi, x_hi);
    if (std::abs(s_hi - budget) < std::abs(s_lo - budget)) x = std::move(x_hi);
    return SignalPlan{std::move(x), spec.cycle_length_s, spec.lost_time_s};
}

/// Uniform split of the green budget (the annealer's initial solution),
/// projected into the feasible box when the even split violates a bound.
inline SignalPlan uniform_plan(const IntersectionSpec& spec) {
    spec.validate();
    const double even = spec.green_budget_s() / static_cast<double>(spec.size());
    return project_feasible(std::vector<double>(spec.size(), even), spec);
}

/// Classic simulated annealing over feasible plans.
///
/// Proposals come from perturb (budget-preserving, so every evaluated plan
/// is feasible); acceptance compares against the current cost, with uphill
/// moves admitted at probability exp(-delta/T); cooling is geometric until
/// T drops below t_min. Deterministic for a fixed schedule seed.
inline OptimizationResult anneal(const SignalPlan& initial, const std::vector<double>& flows_veh_per_interval,
                                 const IntersectionSpec& spec, const AnnealSchedule& schedule, double interval_s,
                                 bool want_trace = false) {
    spec.validate();
    schedule.validate();
    SignalPlan current = initial;
    if (!validate_plan(current, spec).ok()) current = project_feasible(initial.greens_s, spec);

    Rng rng(schedule.seed);
    OptimizationResult result;
    double current_cost = cost(current, flows_veh_per_interval, spec, interval_s);
    result.evaluations = 1;
    result.best_plan = current;
    result.best_cost = current_cost;

    for (double temp = schedule.t_max; temp >= schedule.t_min; temp *= schedule.cooling) {
        for (int k = 0; k < schedule.iters_per_temp; ++k) {
            const SignalPlan candidate = perturb(current, spec, rng, schedule.delta_max_s);
            const double candidate_cost = cost(candidate, flows_veh_per_interval, spec, interval_s);
            ++result.evaluations;
            const double delta = candidate_cost - current_cost;
            if (delta < 0.0 || std::exp(-delta / temp) > rng.uniform01()) {
                current = candidate;
                current_cost = candidate_cost;
                ++result.accepted_moves;
                if (current_cost < result.best_cost) {
                    result.best_plan = current;
                    result.best_cost = current_cost;
                }
            }
        }
        if (want_trace) result.trace.emplace_back(temp, current_cost);
    }
    return result;
}

/// Exhaustive verification oracle: enumerate integer-grid splits of the
/// budget (first N-1 approaches on a step_s grid anchored at green_min, the
/// last takes the remainder) and return the cheapest. Lexicographic order
/// of enumeration breaks cost ties toward the smallest greens vector.
/// Guarded against blowup: N <= 4 and budget/step <= 1e4.
inline SignalPlan brute_force_optimum(const std::vector<double>& flows_veh_per_interval,
                                      const IntersectionSpec& spec, double step_s, double interval_s,
                                      BruteForceStats* stats = nullptr) {
    spec.validate();
    const std::size_t n = spec.size();
    if (flows_veh_per_interval.size() != n)
        throw std::invalid_argument("brute_force_optimum: flows size != approaches");
    if (n > 4) throw std::invalid_argument("brute_force_optimum: refused, N > 4");
    if (!(step_s > 0.0)) throw std::invalid_argument("brute_force_optimum: step must be > 0");
    const double budget = spec.green_budget_s();
    if (budget / step_s > 1e4)
        throw std::invalid_argument("brute_force_optimum: refused, budget/step exceeds 1e4 grid points");

    std::vector<double> suffix_min(n + 1, 0.0), suffix_max(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        suffix_min[i] = suffix_min[i + 1] + spec.green_min_s[i];
        suffix_max[i] = suffix_max[i + 1] + spec.green_max_s[i];
    }

    std::vector<double> greens(n, 0.0);
    SignalPlan best;
    double best_cost = std::numeric_limits<double>::infinity();
    long candidates = 0;

    auto recurse = [&](auto&& self, std::size_t i, double used) -> void {
        if (i + 1 == n) {
            const double last = budget - used;
            if (last < spec.green_min_s[i] - kBudgetTolerance || last > spec.green_max_s[i] + kBudgetTolerance)
                return;
            greens[i] = std::clamp(last, spec.green_min_s[i], spec.green_max_s[i]);
            ++candidates;
            SignalPlan plan{greens, spec.cycle_length_s, spec.lost_time_s};
            const double c = aggregate_wait(plan, flows_veh_per_interval, spec, interval_s);
            if (c < best_cost) {
                best_cost = c;
                best = std::move(plan);
            }
            return;
        }
        for (double g = spec.green_min_s[i]; g <= spec.green_max_s[i] + kBudgetTolerance; g += step_s) {
            const double gi = std::min(g, spec.green_max_s[i]);
            // prune branches that cannot reach the budget
            if (used + gi + suffix_min[i + 1] > budget + kBudgetTolerance) break;
            if (used + gi + suffix_max[i + 1] < budget - kBudgetTolerance) continue;
            greens[i] = gi;
            self(self, i + 1, used + gi);
        }
    };
    recurse(recurse, 0, 0.0);

    if (stats) stats->candidates = candidates;
    if (!std::isfinite(best_cost))
        throw std::runtime_error("brute_force_optimum: no feasible grid split found");
    return best;
}

} // namespace greensplit

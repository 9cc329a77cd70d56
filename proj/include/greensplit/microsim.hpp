#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "greensplit/domain.hpp"
#include "greensplit/optimizer.hpp"
#include "greensplit/rng.hpp"

namespace greensplit {

enum class ArrivalProcess { deterministic_fluid, poisson };

inline ArrivalProcess arrival_process_from_string(const std::string& s) {
    if (s == "deterministic_fluid" || s == "fluid") return ArrivalProcess::deterministic_fluid;
    if (s == "poisson") return ArrivalProcess::poisson;
    throw std::invalid_argument("unknown arrival process '" + s + "'");
}

inline std::string to_string(ArrivalProcess p) {
    return p == ArrivalProcess::poisson ? "poisson" : "deterministic_fluid";
}

/// Piecewise-constant per-approach arrival rates. Each phase holds until
/// its end time; rates are vehicles per interval_s.
struct ArrivalPhase {
    double until_s = 0.0;
    std::vector<double> rates_veh_per_interval;
};

struct ArrivalProfile {
    std::vector<ArrivalPhase> phases;
    ArrivalProcess process = ArrivalProcess::poisson;
    double interval_s = 300.0;

    const std::vector<double>& rates_at(double t_s) const {
        for (const auto& ph : phases)
            if (t_s < ph.until_s) return ph.rates_veh_per_interval;
        return phases.back().rates_veh_per_interval;
    }

    void validate(std::size_t n_approaches, double duration_s) const {
        if (phases.empty()) throw std::invalid_argument("arrival_profile: needs at least one phase");
        if (!(interval_s > 0.0)) throw std::invalid_argument("arrival_profile: interval_s must be > 0");
        double prev = 0.0;
        for (std::size_t k = 0; k < phases.size(); ++k) {
            const auto& ph = phases[k];
            if (ph.rates_veh_per_interval.size() != n_approaches)
                throw std::invalid_argument("arrival_profile: phase " + std::to_string(k) +
                                            " rate count != approaches");
            for (double r : ph.rates_veh_per_interval)
                if (r < 0.0) throw std::invalid_argument("arrival_profile: negative rate in phase " + std::to_string(k));
            if (ph.until_s <= prev)
                throw std::invalid_argument("arrival_profile: phase end times must be increasing");
            prev = ph.until_s;
        }
        if (prev < duration_s - 1e-9)
            throw std::invalid_argument("arrival_profile: timeline ends at " + detail::fmt_s(prev) +
                                        " s, before scenario duration " + detail::fmt_s(duration_s) + " s");
    }
};

struct ApproachTotals {
    long arrived = 0;
    long departed = 0;
    double total_wait_veh_s = 0.0;
    double stopped_time_veh_s = 0.0;
};

/// Full simulator state. Time is tracked in integer ticks of dt so cycle
/// boundaries land exactly; vehicle counts are integers (point queues).
struct SimState {
    double clock_s = 0.0;
    long tick = 0;
    long cycle_tick = 0;
    std::vector<long> queues;
    std::vector<ApproachTotals> cumulative;
    std::vector<double> arrival_credit; ///< fluid-arrival accumulators
    double service_credit = 0.0;        ///< discharge accumulator of the active green
    int credit_owner = -1;              ///< approach currently holding the credit
    long max_queue = 0;

    static SimState initial(std::size_t n_approaches) {
        SimState s;
        s.queues.assign(n_approaches, 0);
        s.cumulative.assign(n_approaches, ApproachTotals{});
        s.arrival_credit.assign(n_approaches, 0.0);
        return s;
    }
};

struct Phase {
    int approach = -1; ///< -1 during clearance
    double remaining_s = 0.0;
    bool in_green() const { return approach >= 0; }
};

/// Phase layout per cycle: each approach's green in plan order, followed by
/// an equal share lost_time/N of clearance.
inline Phase phase_at(const SignalPlan& plan, double cycle_pos_s) {
    const std::size_t n = plan.greens_s.size();
    const double clearance = plan.lost_time_s / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (cycle_pos_s < acc + plan.greens_s[i] - 1e-9)
            return Phase{static_cast<int>(i), acc + plan.greens_s[i] - cycle_pos_s};
        acc += plan.greens_s[i];
        if (cycle_pos_s < acc + clearance - 1e-9)
            return Phase{-1, acc + clearance - cycle_pos_s};
        acc += clearance;
    }
    return Phase{-1, 0.0};
}

/// Round a real-valued plan onto the dt grid, preserving the green budget
/// exactly (largest-remainder). Bounds survive when they are themselves on
/// the grid, which holds for the shipped scenarios.
inline SignalPlan plan_rounded_to_dt(const SignalPlan& plan, double dt) {
    const std::size_t n = plan.greens_s.size();
    std::vector<long> units(n);
    std::vector<std::pair<double, std::size_t>> rema(n);
    long total_units = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = plan.greens_s[i] / dt;
        units[i] = static_cast<long>(std::floor(u + 1e-9));
        rema[i] = {u - static_cast<double>(units[i]), i};
        total_units += units[i];
    }
    const long budget_units = std::lround((plan.cycle_length_s - plan.lost_time_s) / dt);
    long leftover = budget_units - total_units;
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; leftover > 0 && k < n; ++k, --leftover) ++units[rema[k].second];
    SignalPlan out = plan;
    for (std::size_t i = 0; i < n; ++i) out.greens_s[i] = static_cast<double>(units[i]) * dt;
    return out;
}

/// Advance the simulation by one step of dt seconds.
///
/// Order within a step: arrivals join the queues, then the approach holding
/// green departs as many whole vehicles as its accumulated saturation
/// credit allows, then waiting accrues as queue * dt. Discharge credit
/// accumulates only while the queue is nonempty, so capacity cannot be
/// banked across an idle green.
inline SimState step(SimState s, const SignalPlan& plan, const IntersectionSpec& spec,
                     const ArrivalProfile& profile, double dt, Rng& rng) {
    if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");
    const std::size_t n = spec.size();

    const auto& rates = profile.rates_at(s.clock_s);
    for (std::size_t i = 0; i < n; ++i) {
        const double rate_s = rates[i] / profile.interval_s;
        long arriving = 0;
        if (profile.process == ArrivalProcess::poisson) {
            arriving = rng.poisson(rate_s * dt);
        } else {
            s.arrival_credit[i] += rate_s * dt;
            arriving = static_cast<long>(std::floor(s.arrival_credit[i] + 1e-9));
            s.arrival_credit[i] -= static_cast<double>(arriving);
        }
        s.queues[i] += arriving;
        s.cumulative[i].arrived += arriving;
    }

    const Phase phase = phase_at(plan, static_cast<double>(s.cycle_tick) * dt);
    if (phase.in_green()) {
        const auto a = static_cast<std::size_t>(phase.approach);
        if (s.credit_owner != phase.approach) {
            s.credit_owner = phase.approach;
            s.service_credit = 0.0;
        }
        if (s.queues[a] > 0) {
            s.service_credit += spec.approaches[a].saturation_flow_veh_s * dt;
            const long can_depart = static_cast<long>(std::floor(s.service_credit + 1e-9));
            const long departing = std::min(s.queues[a], can_depart);
            s.queues[a] -= departing;
            s.cumulative[a].departed += departing;
            s.service_credit -= static_cast<double>(departing);
        } else {
            s.service_credit = 0.0;
        }
    } else {
        s.credit_owner = -1;
        s.service_credit = 0.0;
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double w = static_cast<double>(s.queues[i]) * dt;
        s.cumulative[i].total_wait_veh_s += w;
        s.cumulative[i].stopped_time_veh_s += w;
        s.max_queue = std::max(s.max_queue, s.queues[i]);
    }

    ++s.tick;
    ++s.cycle_tick;
    s.clock_s = static_cast<double>(s.tick) * dt;
    const long ticks_per_cycle = std::lround(plan.cycle_length_s / dt);
    if (s.cycle_tick >= ticks_per_cycle) s.cycle_tick = 0;
    return s;
}

/// Linear idle-emissions proxy. Absolute values are order-of-magnitude
/// only; ratios between runs are the meaningful output.
inline constexpr double kIdleEmissionRateGPerVehS = 0.8;

inline double emissions_proxy(double stopped_time_veh_s, double rate_g_per_veh_s = kIdleEmissionRateGPerVehS) {
    return rate_g_per_veh_s * stopped_time_veh_s;
}

struct SimMetrics {
    double mean_wait_s = 0.0;
    std::vector<double> per_approach_mean_wait_s;
    long max_queue = 0;
    long throughput = 0;
    double emissions_proxy_g = 0.0;
    long total_arrived = 0;
    double total_wait_veh_s = 0.0;
    double stopped_time_veh_s = 0.0;
};

/// Metrics over the span between two cumulative snapshots (use a zero
/// state as `from` for whole-run metrics).
inline SimMetrics metrics_between(const SimState& from, const SimState& to) {
    SimMetrics m;
    const std::size_t n = to.cumulative.size();
    m.per_approach_mean_wait_s.resize(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const long arrived = to.cumulative[i].arrived - from.cumulative[i].arrived;
        const long departed = to.cumulative[i].departed - from.cumulative[i].departed;
        const double wait = to.cumulative[i].total_wait_veh_s - from.cumulative[i].total_wait_veh_s;
        const double stopped = to.cumulative[i].stopped_time_veh_s - from.cumulative[i].stopped_time_veh_s;
        m.total_arrived += arrived;
        m.throughput += departed;
        m.total_wait_veh_s += wait;
        m.stopped_time_veh_s += stopped;
        m.per_approach_mean_wait_s[i] = arrived > 0 ? wait / static_cast<double>(arrived) : 0.0;
    }
    m.mean_wait_s = m.total_arrived > 0 ? m.total_wait_veh_s / static_cast<double>(m.total_arrived) : 0.0;
    m.max_queue = to.max_queue;
    m.emissions_proxy_g = emissions_proxy(m.stopped_time_veh_s);
    return m;
}

inline SimMetrics metrics_of(const SimState& state) {
    return metrics_between(SimState::initial(state.cumulative.size()), state);
}

/// One per-interval CSV row (one row per approach per interval).
struct IntervalRow {
    double t_s = 0.0;
    std::string approach_id;
    long queue = 0;
    long arrivals = 0;
    long departures = 0;
    double green_s = 0.0;
    double cum_wait_veh_s = 0.0;
};

/// Policy hook invoked at each reevaluation boundary with the flows
/// observed in the last completed interval. Returning a plan schedules it
/// for the next cycle start; returning nullopt keeps the current plan.
using PolicyCallback =
    std::function<std::optional<SignalPlan>(long round_index, double now_s, const std::vector<double>& observed_flows)>;

struct RunResult {
    SimMetrics metrics;
    SimState final_state;
    std::vector<IntervalRow> rows;
    long reevaluations = 0;
    long plan_changes = 0;
    long infeasible_decisions = 0; ///< callback faults: plan rejected, previous retained
};

/// Drive one full scenario. Fixed policy: pass a null callback. The
/// arrival stream is seeded independently of any policy decisions, so
/// fixed/adaptive arms consume identical realizations for a given seed.
/// New plans take effect only at cycle boundaries; on_apply (optional)
/// fires at each actual application with the dt-rounded plan.
inline RunResult run_plant(const IntersectionSpec& spec, const ArrivalProfile& profile, double duration_s,
                           double dt, double reevaluation_period_s, const SignalPlan& initial_plan,
                           const PolicyCallback& policy, std::uint64_t seed,
                           const std::function<void(const SignalPlan&, double)>& on_apply = nullptr) {
    spec.validate();
    profile.validate(spec.size(), duration_s);
    if (!(duration_s >= 0.0)) throw std::invalid_argument("run_plant: negative duration");
    if (!(reevaluation_period_s > 0.0)) throw std::invalid_argument("run_plant: reevaluation period must be > 0");
    {
        const PlanCheck check = validate_plan(initial_plan, spec);
        if (!check.ok()) throw std::invalid_argument("run_plant: initial plan infeasible: " + check.to_string());
    }

    auto ticks_or_throw = [dt](double span_s, const char* what) {
        const long ticks = std::lround(span_s / dt);
        if (std::abs(static_cast<double>(ticks) * dt - span_s) > 1e-9)
            throw std::invalid_argument(std::string("run_plant: dt must divide ") + what);
        return ticks;
    };

    Rng arrival_rng(derive_seed(seed, 0xA221));
    RunResult out;
    SimState state = SimState::initial(spec.size());
    SignalPlan active = plan_rounded_to_dt(initial_plan, dt);
    std::optional<SignalPlan> pending;

    const long total_ticks = ticks_or_throw(duration_s, "the scenario duration");
    const long interval_ticks = ticks_or_throw(profile.interval_s, "the observation interval");
    const long reeval_ticks = ticks_or_throw(reevaluation_period_s, "the reevaluation period");
    ticks_or_throw(spec.cycle_length_s, "the cycle length");
    std::vector<long> arrived_at_interval_start(spec.size(), 0);
    std::vector<long> departed_at_interval_start(spec.size(), 0);
    std::vector<double> last_interval_flows(spec.size(), 0.0);

    for (long tick = 0; tick < total_ticks; ++tick) {
        state = step(std::move(state), active, spec, profile, dt, arrival_rng);

        if (state.cycle_tick == 0 && pending) {
            active = plan_rounded_to_dt(*pending, dt);
            pending.reset();
            ++out.plan_changes;
            if (on_apply) on_apply(active, state.clock_s);
        }

        const bool interval_boundary = interval_ticks > 0 && state.tick % interval_ticks == 0;
        if (interval_boundary) {
            for (std::size_t i = 0; i < spec.size(); ++i) {
                const long arr = state.cumulative[i].arrived - arrived_at_interval_start[i];
                const long dep = state.cumulative[i].departed - departed_at_interval_start[i];
                last_interval_flows[i] = static_cast<double>(arr);
                out.rows.push_back(IntervalRow{state.clock_s - profile.interval_s, spec.approaches[i].id,
                                               state.queues[i], arr, dep, active.greens_s[i],
                                               state.cumulative[i].total_wait_veh_s});
                arrived_at_interval_start[i] = state.cumulative[i].arrived;
                departed_at_interval_start[i] = state.cumulative[i].departed;
            }
        }

        if (policy && reeval_ticks > 0 && state.tick % reeval_ticks == 0 && state.tick < total_ticks) {
            ++out.reevaluations;
            const long round_index = state.tick / reeval_ticks;
            std::optional<SignalPlan> decided = policy(round_index, state.clock_s, last_interval_flows);
            if (decided) {
                if (validate_plan(*decided, spec).ok())
                    pending = std::move(decided);
                else
                    ++out.infeasible_decisions;
            }
        }
    }

    out.metrics = metrics_of(state);
    out.final_state = std::move(state);
    return out;
}

} // namespace greensplit

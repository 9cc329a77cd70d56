#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "greensplit/bus.hpp"
#include "greensplit/config.hpp"
#include "greensplit/controller.hpp"
#include "greensplit/csv.hpp"
#include "greensplit/microsim.hpp"

namespace greensplit {

struct LoopStats {
    long rounds = 0;          ///< reevaluation boundaries reached by the plant
    long decisions = 0;       ///< decision messages published
    long applied = 0;         ///< plans applied at cycle boundaries
    long rejected = 0;        ///< infeasible decisions refused by the controller
    long stale_rounds = 0;    ///< rounds skipped because no decision arrived in time
    std::map<std::string, std::uint64_t> observed_by_family; ///< metrics subscriber's view
    BusStats bus;
    SimMetrics metrics;
    std::vector<IntervalRow> rows;
    long plan_changes = 0;
};

/// Test instrumentation for fault-path coverage. Default-constructed hooks
/// leave the loop untouched.
struct LoopHooks {
    /// Drop the forecast publication for (target interval, approach index).
    std::function<bool(long, std::size_t)> suppress_forecast;
    /// Replace the optimizer's greens for a target interval (e.g. with an
    /// infeasible vector) before publication.
    std::function<std::optional<std::vector<double>>(long)> tamper_decision;
};

namespace loopdetail {

/// Single-slot rendezvous between the controller thread (producer of round
/// resolutions) and the plant (consumer waiting at a reevaluation boundary).
class DecisionGate {
public:
    void resolve(std::optional<SignalPlan> plan) {
        std::lock_guard lock(mutex_);
        plan_ = std::move(plan);
        ++resolutions_;
        cv_.notify_all();
    }

    /// Wait until a resolution newer than `seen` arrives. Returns the
    /// resolved plan (nullopt also on timeout, with *timed_out set).
    std::optional<SignalPlan> await(std::uint64_t seen, double timeout_s, bool* timed_out) {
        std::unique_lock lock(mutex_);
        const bool ok = cv_.wait_for(lock, std::chrono::duration<double>(timeout_s),
                                     [&] { return resolutions_ > seen; });
        *timed_out = !ok;
        if (!ok) return std::nullopt;
        return plan_;
    }

    std::uint64_t seen() const {
        std::lock_guard lock(mutex_);
        return resolutions_;
    }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::optional<SignalPlan> plan_;
    std::uint64_t resolutions_ = 0;
};

struct ControllerEvent {
    enum Kind { applied, finish } kind = applied;
    SignalPlan plan;
    double t_s = 0.0;
};

class EventQueue {
public:
    void push(ControllerEvent ev) {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(ev));
        cv_.notify_one();
    }

    std::optional<ControllerEvent> pop_nowait() {
        std::lock_guard lock(mutex_);
        if (queue_.empty()) return std::nullopt;
        ControllerEvent ev = std::move(queue_.front());
        queue_.pop_front();
        return ev;
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<ControllerEvent> queue_;
};

} // namespace loopdetail

/// Close the Figure-style control loop over the bus: sensor readings flow
/// in, forecasts and optimized plans flow back, and the microsimulator
/// plays the intersection. Terminates when the scenario feed ends and
/// returns the loop statistics.
///
/// The plant pauses simulated time at each reevaluation boundary until the
/// round's decision is resolved (or the stale-data timeout fires), so the
/// pipeline's outputs depend only on its inputs, never on thread timing.
inline LoopStats run_control_loop(Bus& bus, const ScenarioConfig& cfg, std::uint64_t seed,
                                  const LoopHooks& hooks = {}) {
    cfg.validate();
    const IntersectionSpec& spec = cfg.intersection;
    const std::size_t n = spec.size();
    const std::string iid = cfg.loop.intersection_id.empty() ? spec.id : cfg.loop.intersection_id;
    const int steps = cfg.loop.forecast_steps;

    Publisher sensor_pub(bus, "sensor_feeder");
    Publisher prediction_pub(bus, "prediction_service");
    Publisher optimizer_pub(bus, "optimization_service");
    Publisher controller_pub(bus, "signal_controller");

    Subscription flows_sub = bus.subscribe("traffic_flows/*");
    Subscription pred_sub = bus.subscribe("predicted_flows/*");
    Subscription decisions_sub = bus.subscribe("traffic_signal_decisions/" + iid);
    Subscription observer_sub = bus.subscribe("*");

    std::map<std::string, std::size_t> approach_index;
    for (std::size_t i = 0; i < n; ++i) approach_index[spec.approaches[i].id] = i;

    LoopStats stats;
    std::mutex stats_mutex;
    loopdetail::DecisionGate gate;
    loopdetail::EventQueue controller_events;
    std::atomic<bool> controller_finished{false};
    std::mutex finish_mutex;
    std::condition_variable finish_cv;

    // prediction service: traffic_flows/* -> predicted_flows/<approach>
    std::thread prediction_thread([&] {
        ForecastEngine engine(cfg);
        std::map<long, std::map<std::size_t, double>> pending;
        while (auto msg = flows_sub.poll()) {
            const long t_obs = msg->payload.at("t").get<long>();
            const std::string aid = msg->payload.at("approach_id").get<std::string>();
            auto it = approach_index.find(aid);
            if (it == approach_index.end()) continue;
            pending[t_obs][it->second] = msg->payload.at("flow_veh_per_interval").get<double>();
            if (pending[t_obs].size() < n) continue;

            std::vector<double> flows(n);
            for (const auto& [idx, v] : pending[t_obs]) flows[idx] = v;
            pending.erase(t_obs);
            engine.observe(t_obs, flows);
            const long target_t = t_obs + 1;
            for (std::size_t i = 0; i < n; ++i) {
                if (hooks.suppress_forecast && hooks.suppress_forecast(target_t, i)) continue;
                nlohmann::json payload = {{"t", target_t},
                                          {"horizon_steps", steps},
                                          {"forecasts", engine.forecast_approach(i, target_t, steps)},
                                          {"approach_id", spec.approaches[i].id}};
                prediction_pub.publish("predicted_flows/" + spec.approaches[i].id, std::move(payload), msg->ts);
            }
        }
    });

    // optimization service: predicted_flows/* -> traffic_signal_decisions/<iid>
    std::thread optimizer_thread([&] {
        std::map<long, std::map<std::size_t, double>> pending;
        while (auto msg = pred_sub.poll()) {
            const long target_t = msg->payload.at("t").get<long>();
            const std::string aid = msg->payload.at("approach_id").get<std::string>();
            auto it = approach_index.find(aid);
            if (it == approach_index.end()) continue;
            const auto forecasts = msg->payload.at("forecasts").get<std::vector<double>>();
            if (forecasts.empty()) continue;
            pending[target_t][it->second] = forecasts.front();
            if (pending[target_t].size() < n) continue;

            std::vector<double> flows(n);
            for (const auto& [idx, v] : pending[target_t]) flows[idx] = v;
            // anything older can no longer complete; discard it
            for (auto pit = pending.begin(); pit != pending.end();)
                pit = pit->first <= target_t ? pending.erase(pit) : ++pit;

            const OptimizationResult result =
                plan_for_round(flows, spec, cfg.anneal, cfg.interval_s, target_t);
            std::vector<double> greens = result.best_plan.greens_s;
            if (hooks.tamper_decision)
                if (auto tampered = hooks.tamper_decision(target_t)) greens = *tampered;
            const double now_s = static_cast<double>(target_t) * cfg.loop.reevaluation_period_s;
            const double cycle_start =
                (std::floor(now_s / spec.cycle_length_s + 1e-9) + 1.0) * spec.cycle_length_s;
            nlohmann::json payload = {{"cycle_start_t_s", cycle_start},
                                      {"greens_s", greens},
                                      {"cycle_length_s", spec.cycle_length_s},
                                      {"cost_estimate_s", result.best_cost}};
            optimizer_pub.publish("traffic_signal_decisions/" + iid, std::move(payload), msg->ts);
            {
                std::lock_guard lock(stats_mutex);
                ++stats.decisions;
            }
        }
    });

    // signal controller: validates decisions, resolves the plant's round
    // gate, and confirms applications with status messages
    std::thread controller_thread([&] {
        bool input_open = true;
        while (true) {
            if (auto ev = controller_events.pop_nowait()) {
                if (ev->kind == loopdetail::ControllerEvent::finish) break;
                nlohmann::json payload = {{"applied", true}, {"greens_s", ev->plan.greens_s}, {"reason", "applied"}};
                controller_pub.publish("traffic_signal_status/" + iid, std::move(payload), ev->t_s);
                std::lock_guard lock(stats_mutex);
                ++stats.applied;
                continue;
            }
            if (!input_open) {
                std::this_thread::sleep_for(std::chrono::milliseconds(1));
                continue;
            }
            auto msg = decisions_sub.poll(std::chrono::milliseconds(1));
            if (!msg) {
                if (!decisions_sub.active()) input_open = false;
                continue;
            }
            SignalPlan plan{msg->payload.at("greens_s").get<std::vector<double>>(), spec.cycle_length_s,
                            spec.lost_time_s};
            const PlanCheck check =
                plan.greens_s.size() == n ? validate_plan(plan, spec) : PlanCheck{{"dimension mismatch"}};
            if (check.ok()) {
                gate.resolve(plan);
            } else {
                nlohmann::json payload = {
                    {"applied", false}, {"greens_s", plan.greens_s}, {"reason", "rejected: " + check.to_string()}};
                controller_pub.publish("traffic_signal_status/" + iid, std::move(payload), msg->ts);
                {
                    std::lock_guard lock(stats_mutex);
                    ++stats.rejected;
                }
                gate.resolve(std::nullopt);
            }
        }
        {
            std::lock_guard lock(finish_mutex);
            controller_finished = true;
        }
        finish_cv.notify_all();
    });

    // third-party metrics subscriber: counts traffic by topic family
    std::map<std::string, std::uint64_t> observed;
    std::thread logger_thread([&] {
        while (auto msg = observer_sub.poll()) ++observed[msg->topic.segments.front()];
    });

    // the plant: microsim driven by bus decisions
    PolicyCallback policy = [&](long, double now_s, const std::vector<double>& flows) -> std::optional<SignalPlan> {
        const long target_t = std::lround(now_s / cfg.interval_s);
        {
            std::lock_guard lock(stats_mutex);
            ++stats.rounds;
        }
        const std::uint64_t seen = gate.seen();
        for (std::size_t i = 0; i < n; ++i) {
            nlohmann::json payload = {{"t", target_t - 1},
                                      {"flow_veh_per_interval", flows[i]},
                                      {"approach_id", spec.approaches[i].id}};
            sensor_pub.publish("traffic_flows/" + spec.approaches[i].id, std::move(payload), now_s);
        }
        bool timed_out = false;
        auto plan = gate.await(seen, cfg.loop.decision_wait_wall_s, &timed_out);
        if (timed_out) {
            std::lock_guard lock(stats_mutex);
            ++stats.stale_rounds;
            return std::nullopt;
        }
        return plan;
    };

    RunResult run;
    std::exception_ptr plant_error;
    try {
        run = run_plant(spec, cfg.arrival_profile, cfg.duration_s, cfg.dt_s, cfg.loop.reevaluation_period_s,
                        uniform_plan(spec), policy, seed,
                        [&](const SignalPlan& applied_plan, double t_s) {
                            controller_events.push({loopdetail::ControllerEvent::applied, applied_plan, t_s});
                        });
    } catch (...) {
        plant_error = std::current_exception();
    }

    // shutdown: let the controller flush pending confirmations, then close
    // the bus so every adapter drains and exits
    controller_events.push({loopdetail::ControllerEvent::finish, {}, 0.0});
    {
        std::unique_lock lock(finish_mutex);
        finish_cv.wait(lock, [&] { return controller_finished.load(); });
    }
    bus.shutdown();
    prediction_thread.join();
    optimizer_thread.join();
    controller_thread.join();
    logger_thread.join();
    if (plant_error) std::rethrow_exception(plant_error);

    stats.metrics = run.metrics;
    stats.rows = std::move(run.rows);
    stats.plan_changes = run.plan_changes;
    stats.observed_by_family = std::move(observed);
    stats.bus = bus.stats();
    return stats;
}

} // namespace greensplit

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "greensplit/config.hpp"
#include "greensplit/controller.hpp"
#include "greensplit/microsim.hpp"
#include "greensplit/optimizer.hpp"

namespace greensplit {

/// Adaptive policy for direct (in-process) execution: observe the last
/// interval, forecast the next, anneal a plan. The bus control loop runs
/// the same arithmetic through its service adapters.
inline PolicyCallback make_adaptive_policy(const ScenarioConfig& cfg,
                                           std::vector<OptimizationResult>* decisions_out = nullptr) {
    auto engine = std::make_shared<ForecastEngine>(cfg);
    const IntersectionSpec& spec = cfg.intersection;
    return [engine, &cfg, &spec, decisions_out](long, double now_s,
                                                const std::vector<double>& flows) -> std::optional<SignalPlan> {
        const long target_t = std::lround(now_s / cfg.interval_s);
        engine->observe(target_t - 1, flows);
        const std::vector<double> forecast = engine->forecast_round(target_t, cfg.loop.forecast_steps);
        OptimizationResult result = plan_for_round(forecast, spec, cfg.anneal, cfg.interval_s, target_t);
        SignalPlan plan = result.best_plan;
        if (decisions_out) decisions_out->push_back(std::move(result));
        return plan;
    };
}

inline RunResult run_fixed(const ScenarioConfig& cfg, std::uint64_t seed) {
    return run_plant(cfg.intersection, cfg.arrival_profile, cfg.duration_s, cfg.dt_s,
                     cfg.loop.reevaluation_period_s, uniform_plan(cfg.intersection), nullptr, seed);
}

inline RunResult run_adaptive(const ScenarioConfig& cfg, std::uint64_t seed) {
    return run_plant(cfg.intersection, cfg.arrival_profile, cfg.duration_s, cfg.dt_s,
                     cfg.loop.reevaluation_period_s, uniform_plan(cfg.intersection),
                     make_adaptive_policy(cfg), seed);
}

struct ComparisonReport {
    SimMetrics fixed;
    SimMetrics adaptive;
    double wait_reduction_pct = 0.0;
    double emissions_reduction_pct = 0.0;
    int seeds_used = 0;
    std::vector<double> per_seed_fixed_wait_s;
    std::vector<double> per_seed_adaptive_wait_s;
    std::vector<double> per_seed_fixed_emissions_g;
    std::vector<double> per_seed_adaptive_emissions_g;
};

namespace detail {
inline SimMetrics mean_metrics(const std::vector<SimMetrics>& all) {
    SimMetrics m;
    if (all.empty()) return m;
    const auto n = static_cast<double>(all.size());
    m.per_approach_mean_wait_s.assign(all.front().per_approach_mean_wait_s.size(), 0.0);
    double max_queue = 0.0, throughput = 0.0, arrived = 0.0;
    for (const auto& x : all) {
        m.mean_wait_s += x.mean_wait_s / n;
        m.emissions_proxy_g += x.emissions_proxy_g / n;
        m.total_wait_veh_s += x.total_wait_veh_s / n;
        m.stopped_time_veh_s += x.stopped_time_veh_s / n;
        max_queue += static_cast<double>(x.max_queue) / n;
        throughput += static_cast<double>(x.throughput) / n;
        arrived += static_cast<double>(x.total_arrived) / n;
        for (std::size_t i = 0; i < m.per_approach_mean_wait_s.size(); ++i)
            m.per_approach_mean_wait_s[i] += x.per_approach_mean_wait_s[i] / n;
    }
    m.max_queue = std::lround(max_queue);
    m.throughput = std::lround(throughput);
    m.total_arrived = std::lround(arrived);
    return m;
}
} // namespace detail

/// Paired-seed comparison: both arms replay identical arrival streams for
/// each seed (the arrival RNG never sees policy decisions), so the
/// contrast isolates the control strategy. Seeds are base_seed + i.
inline ComparisonReport compare_policies(const ScenarioConfig& cfg, std::uint64_t base_seed, int seeds,
                                         std::vector<RunResult>* fixed_runs = nullptr,
                                         std::vector<RunResult>* adaptive_runs = nullptr) {
    if (seeds < 1) throw std::invalid_argument("compare_policies: seeds must be >= 1");
    ComparisonReport report;
    report.seeds_used = seeds;
    std::vector<SimMetrics> fixed_metrics, adaptive_metrics;
    for (int k = 0; k < seeds; ++k) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(k);
        RunResult fx = run_fixed(cfg, seed);
        RunResult ad = run_adaptive(cfg, seed);
        report.per_seed_fixed_wait_s.push_back(fx.metrics.mean_wait_s);
        report.per_seed_adaptive_wait_s.push_back(ad.metrics.mean_wait_s);
        report.per_seed_fixed_emissions_g.push_back(fx.metrics.emissions_proxy_g);
        report.per_seed_adaptive_emissions_g.push_back(ad.metrics.emissions_proxy_g);
        fixed_metrics.push_back(fx.metrics);
        adaptive_metrics.push_back(ad.metrics);
        if (fixed_runs) fixed_runs->push_back(std::move(fx));
        if (adaptive_runs) adaptive_runs->push_back(std::move(ad));
    }
    report.fixed = detail::mean_metrics(fixed_metrics);
    report.adaptive = detail::mean_metrics(adaptive_metrics);
    if (report.fixed.mean_wait_s > 0.0)
        report.wait_reduction_pct = 100.0 * (report.fixed.mean_wait_s - report.adaptive.mean_wait_s) /
                                     report.fixed.mean_wait_s;
    if (report.fixed.emissions_proxy_g > 0.0)
        report.emissions_reduction_pct = 100.0 * (report.fixed.emissions_proxy_g - report.adaptive.emissions_proxy_g) /
                                          report.fixed.emissions_proxy_g;
    return report;
}

inline nlohmann::json metrics_to_json(const SimMetrics& m) {
    return nlohmann::json{{"mean_wait_s", m.mean_wait_s},
                          {"per_approach_mean_wait_s", m.per_approach_mean_wait_s},
                          {"max_queue", m.max_queue},
                          {"throughput", m.throughput},
                          {"emissions_proxy_g", m.emissions_proxy_g},
                          {"total_arrived", m.total_arrived},
                          {"total_wait_veh_s", m.total_wait_veh_s}};
}

inline nlohmann::json report_to_json(const ComparisonReport& r) {
    return nlohmann::json{{"fixed", metrics_to_json(r.fixed)},
                          {"adaptive", metrics_to_json(r.adaptive)},
                          {"wait_reduction_pct", r.wait_reduction_pct},
                          {"emissions_reduction_pct", r.emissions_reduction_pct},
                          {"seeds_used", r.seeds_used},
                          {"per_seed_fixed_wait_s", r.per_seed_fixed_wait_s},
                          {"per_seed_adaptive_wait_s", r.per_seed_adaptive_wait_s}};
}

} // namespace greensplit

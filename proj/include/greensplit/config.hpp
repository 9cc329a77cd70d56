#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "greensplit/domain.hpp"
#include "greensplit/microsim.hpp"
#include "greensplit/optimizer.hpp"
#include "greensplit/prediction.hpp"

namespace greensplit {

/// Control-loop timing: how often the loop re-forecasts and re-optimizes
/// (the reevaluation period) and how far ahead the forecast looks.
struct ControlLoopConfig {
    double reevaluation_period_s = 300.0;
    int forecast_steps = 1;
    std::string intersection_id;
    /// Wall-clock ceiling per decision round-trip; the stale-data rule
    /// (2x reevaluation period) expressed for accelerated simulation.
    double decision_wait_wall_s = 30.0;

    void validate() const {
        if (!(reevaluation_period_s > 0.0))
            throw std::invalid_argument("loop.reevaluation_period_s must be > 0");
        if (forecast_steps < 1) throw std::invalid_argument("loop.forecast_steps must be >= 1");
        if (!(decision_wait_wall_s > 0.0))
            throw std::invalid_argument("loop.decision_wait_wall_s must be > 0");
    }
};

struct PredictionConfig {
    int p = 1;
    int q = 0;
    double ridge = 0.0;
    std::vector<PredictionModel> models; ///< one per approach, or empty when fit from history
    std::string history_csv;             ///< optional: fit models from this file at load time
};

/// Everything needed to run one experiment; mirrors the on-disk JSON.
struct ScenarioConfig {
    IntersectionSpec intersection;
    ArrivalProfile arrival_profile;
    std::vector<ExogenousRecord> exog_timeline;
    std::vector<std::string> exog_names;
    PredictionConfig prediction;
    AnnealSchedule anneal;
    ControlLoopConfig loop;
    double duration_s = 0.0;
    double interval_s = 300.0;
    double dt_s = 1.0;
    std::uint64_t seed = 1;
    std::vector<std::string> load_notices; ///< defaults applied during load

    void validate() const {
        intersection.validate();
        if (!(duration_s > 0.0)) throw std::invalid_argument("duration_s must be > 0");
        if (!(interval_s > 0.0)) throw std::invalid_argument("interval_s must be > 0");
        if (!(dt_s > 0.0)) throw std::invalid_argument("dt_s must be > 0");
        arrival_profile.validate(intersection.size(), duration_s);
        anneal.validate();
        loop.validate();
        const int q = prediction.q;
        for (const auto& rec : exog_timeline)
            if (static_cast<int>(rec.values.size()) != q)
                throw std::invalid_argument("exog.timeline record at t=" + std::to_string(rec.t) + " has " +
                                            std::to_string(rec.values.size()) + " values, prediction.q=" +
                                            std::to_string(q));
        if (q > 0) {
            const long needed = static_cast<long>(std::ceil(duration_s / interval_s));
            for (long t = 0; t < needed; ++t) {
                bool found = false;
                for (const auto& rec : exog_timeline)
                    if (rec.t == t) { found = true; break; }
                if (!found)
                    throw std::invalid_argument("exog.timeline missing record for interval t=" + std::to_string(t));
            }
        }
        if (!prediction.models.empty()) {
            if (prediction.models.size() != intersection.size())
                throw std::invalid_argument("prediction.models: need one model per approach");
            for (const auto& m : prediction.models) {
                m.validate();
                if (m.p() != prediction.p || m.q() != prediction.q)
                    throw std::invalid_argument("prediction.models['" + m.approach_id +
                                                "']: p/q does not match prediction.p/q");
            }
        }
    }

    /// Z values for interval t; clamps beyond the end of the timeline.
    std::vector<double> exog_at(long t) const {
        if (exog_timeline.empty()) return {};
        const ExogenousRecord* best = nullptr;
        for (const auto& rec : exog_timeline) {
            if (rec.t == t) return rec.values;
            if (rec.t < t && (!best || rec.t > best->t)) best = &rec;
        }
        if (best) return best->values;
        return exog_timeline.front().values;
    }
};

namespace detail {

template <typename T>
T get_required(const nlohmann::json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw std::invalid_argument("config: missing key '" + path + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: bad value at '" + path + key + "': " + e.what());
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

} // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    using detail::get_or;
    using detail::get_required;
    ScenarioConfig cfg;

    const auto ji = get_required<nlohmann::json>(j, "intersection", "");
    cfg.intersection.id = get_required<std::string>(ji, "id", "intersection.");
    cfg.intersection.cycle_length_s = get_required<double>(ji, "cycle_length_s", "intersection.");
    cfg.intersection.lost_time_s = get_required<double>(ji, "lost_time_s", "intersection.");
    const auto japps = get_required<nlohmann::json>(ji, "approaches", "intersection.");
    std::size_t idx = 0;
    for (const auto& ja : japps) {
        const std::string path = "intersection.approaches[" + std::to_string(idx) + "].";
        ApproachSpec a;
        a.id = get_required<std::string>(ja, "id", path);
        a.saturation_flow_veh_s = get_required<double>(ja, "saturation_flow_veh_s", path);
        a.lanes = get_or<int>(ja, "lanes", 1);
        cfg.intersection.approaches.push_back(a);
        cfg.intersection.green_min_s.push_back(get_required<double>(ja, "green_min_s", path));
        cfg.intersection.green_max_s.push_back(get_required<double>(ja, "green_max_s", path));
        ++idx;
    }

    cfg.duration_s = get_required<double>(j, "duration_s", "");
    cfg.interval_s = get_or<double>(j, "interval_s", 300.0);
    cfg.dt_s = get_or<double>(j, "dt_s", 1.0);
    cfg.seed = get_or<std::uint64_t>(j, "seed", 1);

    const auto jp = get_required<nlohmann::json>(j, "arrival_profile", "");
    cfg.arrival_profile.process = arrival_process_from_string(get_or<std::string>(jp, "process", "poisson"));
    cfg.arrival_profile.interval_s = cfg.interval_s;
    for (const auto& jphase : get_required<nlohmann::json>(jp, "phases", "arrival_profile.")) {
        ArrivalPhase ph;
        ph.until_s = get_required<double>(jphase, "until_s", "arrival_profile.phases[].");
        ph.rates_veh_per_interval =
            get_required<std::vector<double>>(jphase, "rates_veh_per_interval", "arrival_profile.phases[].");
        cfg.arrival_profile.phases.push_back(std::move(ph));
    }

    if (j.contains("exog")) {
        const auto& je = j.at("exog");
        cfg.exog_names = get_or<std::vector<std::string>>(je, "names", {});
        for (const auto& jr : get_required<nlohmann::json>(je, "timeline", "exog.")) {
            ExogenousRecord rec;
            rec.t = get_required<long>(jr, "t", "exog.timeline[].");
            rec.values = get_required<std::vector<double>>(jr, "values", "exog.timeline[].");
            cfg.exog_timeline.push_back(std::move(rec));
        }
    }

    if (j.contains("prediction")) {
        const auto& jpr = j.at("prediction");
        cfg.prediction.p = get_or<int>(jpr, "p", 1);
        cfg.prediction.q = get_or<int>(jpr, "q", static_cast<int>(cfg.exog_names.size()));
        cfg.prediction.ridge = get_or<double>(jpr, "ridge", 0.0);
        cfg.prediction.history_csv = get_or<std::string>(jpr, "history_csv", "");
        if (jpr.contains("models"))
            for (const auto& jm : jpr.at("models")) cfg.prediction.models.push_back(model_from_json(jm));
    } else {
        cfg.prediction.q = static_cast<int>(cfg.exog_names.size());
        cfg.load_notices.push_back("prediction section missing; defaulting to p=1, q=" +
                                   std::to_string(cfg.prediction.q) + ", ridge=0");
    }

    if (j.contains("anneal")) {
        const auto& jan = j.at("anneal");
        cfg.anneal.t_max = get_or<double>(jan, "t_max", cfg.anneal.t_max);
        cfg.anneal.t_min = get_or<double>(jan, "t_min", cfg.anneal.t_min);
        cfg.anneal.cooling = get_or<double>(jan, "cooling", cfg.anneal.cooling);
        cfg.anneal.iters_per_temp = get_or<int>(jan, "iters_per_temp", cfg.anneal.iters_per_temp);
        cfg.anneal.delta_max_s = get_or<double>(jan, "delta_max_s", cfg.anneal.delta_max_s);
        cfg.anneal.seed = get_or<std::uint64_t>(jan, "seed", cfg.anneal.seed);
    } else {
        cfg.load_notices.push_back("anneal section missing; using defaults (t_max=50, t_min=0.01, "
                                   "cooling=0.95, iters_per_temp=40, delta_max_s=5)");
    }

    if (j.contains("loop")) {
        const auto& jl = j.at("loop");
        cfg.loop.reevaluation_period_s = get_or<double>(jl, "reevaluation_period_s", cfg.interval_s);
        cfg.loop.forecast_steps = get_or<int>(jl, "forecast_steps", 1);
        cfg.loop.intersection_id = get_or<std::string>(jl, "intersection_id", cfg.intersection.id);
        cfg.loop.decision_wait_wall_s = get_or<double>(jl, "decision_wait_wall_s", cfg.loop.decision_wait_wall_s);
    } else {
        cfg.loop.reevaluation_period_s = cfg.interval_s;
        cfg.loop.intersection_id = cfg.intersection.id;
        cfg.load_notices.push_back("loop section missing; reevaluating every interval");
    }

    cfg.validate();
    return cfg;
}

/// Load and fully validate a scenario file. Throws std::invalid_argument
/// with the offending key path on any problem.
inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: parse error in '" + path + "': " + e.what());
    }
    ScenarioConfig cfg = scenario_from_json(j);
    if (!cfg.prediction.history_csv.empty() && cfg.prediction.models.empty()) {
        std::ifstream hist(cfg.prediction.history_csv);
        if (!hist)
            throw std::invalid_argument("config: prediction.history_csv '" + cfg.prediction.history_csv +
                                        "' does not exist");
    }
    return cfg;
}

} // namespace greensplit

#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "greensplit/config.hpp"
#include "greensplit/optimizer.hpp"
#include "greensplit/prediction.hpp"

namespace greensplit {

/// Forecasting state shared by the direct adaptive policy and the bus
/// prediction service: per-approach lag windows over observed interval
/// flows, plus the scenario's scripted exogenous timeline. Keeping this
/// logic in one place is what makes the two execution paths agree.
class ForecastEngine {
public:
    explicit ForecastEngine(const ScenarioConfig& cfg) : cfg_(&cfg) {
        models_ = cfg.prediction.models;
        if (models_.empty()) {
            // persistence fallback: lambda(t) = lambda(t-1)
            for (const auto& a : cfg.intersection.approaches) {
                PredictionModel m;
                m.approach_id = a.id;
                m.alpha = 0.0;
                m.beta = {1.0};
                m.gamma.assign(static_cast<std::size_t>(cfg.prediction.q), 0.0);
                models_.push_back(std::move(m));
            }
        }
        lags_.resize(models_.size());
    }

    const std::vector<PredictionModel>& models() const { return models_; }

    /// Record the flows observed for one completed interval. Flows are
    /// ordered as the intersection's approaches.
    void observe(long interval_index, const std::vector<double>& flows) {
        if (flows.size() != models_.size())
            throw std::invalid_argument("ForecastEngine::observe: flow count != approaches");
        last_observed_t_ = interval_index;
        for (std::size_t i = 0; i < flows.size(); ++i) {
            lags_[i].push_front(flows[i]);
            const auto p = static_cast<std::size_t>(models_[i].p());
            while (lags_[i].size() > p) lags_[i].pop_back();
        }
    }

    /// Forecast `steps` intervals ahead for approach i, starting at
    /// interval target_t. Until p observations exist, the oldest one is
    /// replicated to fill the window.
    std::vector<double> forecast_approach(std::size_t i, long target_t, int steps) const {
        const auto& model = models_.at(i);
        const auto p = static_cast<std::size_t>(model.p());
        std::vector<double> recent(lags_[i].begin(), lags_[i].end());
        if (recent.empty()) recent.push_back(0.0);
        while (recent.size() < p) recent.push_back(recent.back());
        recent.resize(p);
        std::vector<std::vector<double>> exog_future;
        exog_future.reserve(static_cast<std::size_t>(steps));
        for (int s = 0; s < steps; ++s) {
            auto z = cfg_->exog_at(target_t + s);
            z.resize(static_cast<std::size_t>(model.q()), 0.0);
            exog_future.push_back(std::move(z));
        }
        return forecast_horizon(model, recent, exog_future, steps);
    }

    /// Step-1 forecasts for all approaches at interval target_t.
    std::vector<double> forecast_round(long target_t, int steps) const {
        std::vector<double> out(models_.size());
        for (std::size_t i = 0; i < models_.size(); ++i) out[i] = forecast_approach(i, target_t, steps)[0];
        return out;
    }

    long last_observed_t() const { return last_observed_t_; }

private:
    const ScenarioConfig* cfg_;
    std::vector<PredictionModel> models_;
    std::vector<std::deque<double>> lags_;
    long last_observed_t_ = -1;
};

/// One optimization round: anneal from the uniform split under the
/// forecast flows, seeded deterministically per round.
inline OptimizationResult plan_for_round(const std::vector<double>& forecast_flows, const IntersectionSpec& spec,
                                         const AnnealSchedule& schedule, double interval_s, long round_index) {
    AnnealSchedule per_round = schedule;
    per_round.seed = derive_seed(schedule.seed, static_cast<std::uint64_t>(round_index));
    return anneal(uniform_plan(spec), forecast_flows, spec, per_round, interval_s);
}

} // namespace greensplit

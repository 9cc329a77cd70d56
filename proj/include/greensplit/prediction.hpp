#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "greensplit/domain.hpp"

namespace greensplit {

/// Per-approach ARX flow model:
///   lambda(t) = alpha + sum_k beta[k] * lambda(t-k-1) + sum_j gamma[j] * Z_j(t)
/// Forecasts are clamped at zero; flows cannot go negative.
struct PredictionModel {
    std::string approach_id;
    double alpha = 0.0;
    std::vector<double> beta;  ///< lag coefficients, index k == lag k+1
    std::vector<double> gamma; ///< exogenous coefficients
    std::vector<std::string> exog_names;

    int p() const { return static_cast<int>(beta.size()); }
    int q() const { return static_cast<int>(gamma.size()); }

    void validate() const {
        if (beta.empty())
            throw std::invalid_argument("model '" + approach_id + "': p must be >= 1");
        for (double c : beta)
            if (!std::isfinite(c)) throw std::invalid_argument("model '" + approach_id + "': non-finite beta");
        for (double c : gamma)
            if (!std::isfinite(c)) throw std::invalid_argument("model '" + approach_id + "': non-finite gamma");
        if (!std::isfinite(alpha))
            throw std::invalid_argument("model '" + approach_id + "': non-finite alpha");
        if (!exog_names.empty() && exog_names.size() != gamma.size())
            throw std::invalid_argument("model '" + approach_id + "': exog_names size != q");
    }
};

struct FitReport {
    double residual_rmse = 0.0; ///< on the training rows
    int n_samples = 0;          ///< regression rows used
    bool condition_warning = false;
};

namespace detail {

/// Solve the symmetric positive-definite system M x = b in place via
/// Cholesky. Returns false if a pivot collapses (singular to working
/// precision). Dimensions here are tiny (1 + p + q).
inline bool cholesky_solve(std::vector<double> m, std::vector<double> b, std::size_t n,
                           std::vector<double>& out) {
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m[i * n + i]));
    const double pivot_floor = std::max(max_diag, 1.0) * 1e-13;
    for (std::size_t j = 0; j < n; ++j) {
        double d = m[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= m[j * n + k] * m[j * n + k];
        if (d <= pivot_floor) return false;
        const double l = std::sqrt(d);
        m[j * n + j] = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = m[i * n + j];
            for (std::size_t k = 0; k < j; ++k) v -= m[i * n + k] * m[j * n + k];
            m[i * n + j] = v / l;
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= m[i * n + k] * b[k];
        b[i] = v / m[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double v = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) v -= m[k * n + ii] * b[k];
        b[ii] = v / m[ii * n + ii];
    }
    out = std::move(b);
    return true;
}

} // namespace detail

/// Fit one approach's ARX coefficients by (ridge-regularized) least squares
/// on the normal equations. Deterministic: same inputs, same coefficients.
///
/// history must be time-ordered with consecutive interval indices; exog
/// must provide a record for every interval the regression touches. With
/// ridge == 0 a singular system falls back to ridge 1e-8 and flags
/// condition_warning in the report.
inline std::pair<PredictionModel, FitReport> fit(const std::vector<FlowObservation>& history,
                                                 const std::vector<ExogenousRecord>& exog, int p, int q,
                                                 double ridge) {
    if (p < 1) throw std::invalid_argument("fit: p must be >= 1");
    if (q < 0) throw std::invalid_argument("fit: q must be >= 0");
    if (ridge < 0.0) throw std::invalid_argument("fit: ridge must be >= 0");
    const std::size_t len = history.size();
    const std::size_t min_len = static_cast<std::size_t>(p + q + 5);
    if (len < min_len || len < static_cast<std::size_t>(2 * p + q + 1))
        throw std::invalid_argument("fit: insufficient history (" + std::to_string(len) + " observations for p=" +
                                    std::to_string(p) + ", q=" + std::to_string(q) + ")");
    for (std::size_t i = 1; i < len; ++i) {
        if (history[i].t != history[i - 1].t + 1)
            throw std::invalid_argument("fit: history must have consecutive interval indices (gap after t=" +
                                        std::to_string(history[i - 1].t) + ")");
        if (history[i].approach_id != history[0].approach_id)
            throw std::invalid_argument("fit: history mixes approaches '" + history[0].approach_id + "' and '" +
                                        history[i].approach_id + "'");
    }
    std::map<long, const std::vector<double>*> exog_by_t;
    for (const auto& r : exog) {
        if (static_cast<int>(r.values.size()) < q)
            throw std::invalid_argument("fit: exogenous record at t=" + std::to_string(r.t) + " has " +
                                        std::to_string(r.values.size()) + " values, need q=" + std::to_string(q));
        exog_by_t[r.t] = &r.values;
    }

    const std::size_t dim = 1 + static_cast<std::size_t>(p) + static_cast<std::size_t>(q);
    const std::size_t rows = len - static_cast<std::size_t>(p);
    std::vector<double> gram(dim * dim, 0.0), rhs(dim, 0.0);
    std::vector<double> feat(dim);

    auto fill_features = [&](std::size_t row_end) {
        feat[0] = 1.0;
        for (int k = 0; k < p; ++k) feat[1 + k] = history[row_end - 1 - static_cast<std::size_t>(k)].flow_veh_per_interval;
        if (q > 0) {
            auto it = exog_by_t.find(history[row_end].t);
            if (it == exog_by_t.end())
                throw std::invalid_argument("fit: missing exogenous record for t=" + std::to_string(history[row_end].t));
            for (int j = 0; j < q; ++j) feat[1 + p + j] = (*it->second)[static_cast<std::size_t>(j)];
        }
    };

    for (std::size_t r = static_cast<std::size_t>(p); r < len; ++r) {
        fill_features(r);
        const double y = history[r].flow_veh_per_interval;
        for (std::size_t i = 0; i < dim; ++i) {
            rhs[i] += feat[i] * y;
            for (std::size_t j = 0; j <= i; ++j) gram[i * dim + j] += feat[i] * feat[j];
        }
    }
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i + 1; j < dim; ++j) gram[i * dim + j] = gram[j * dim + i];

    FitReport report;
    report.n_samples = static_cast<int>(rows);

    auto solve_with = [&](double lambda, std::vector<double>& theta) {
        std::vector<double> m = gram;
        for (std::size_t i = 0; i < dim; ++i) m[i * dim + i] += lambda;
        return detail::cholesky_solve(std::move(m), rhs, dim, theta);
    };

    std::vector<double> theta;
    if (!solve_with(ridge, theta)) {
        if (ridge > 0.0)
            throw std::runtime_error("fit: normal equations singular despite ridge " + std::to_string(ridge));
        report.condition_warning = true;
        if (!solve_with(1e-8, theta))
            throw std::runtime_error("fit: normal equations singular even with fallback ridge");
    }

    PredictionModel model;
    model.approach_id = history[0].approach_id;
    model.alpha = theta[0];
    model.beta.assign(theta.begin() + 1, theta.begin() + 1 + p);
    model.gamma.assign(theta.begin() + 1 + p, theta.end());

    double sse = 0.0;
    for (std::size_t r = static_cast<std::size_t>(p); r < len; ++r) {
        fill_features(r);
        double pred = 0.0;
        for (std::size_t i = 0; i < dim; ++i) pred += feat[i] * theta[i];
        const double e = history[r].flow_veh_per_interval - pred;
        sse += e * e;
    }
    report.residual_rmse = std::sqrt(sse / static_cast<double>(rows));
    return {std::move(model), report};
}

/// One-step forecast. recent holds the last p flows, most recent first.
/// Negative linear values are clamped to zero.
inline double forecast_one(const PredictionModel& model, const std::vector<double>& recent,
                           const std::vector<double>& z_now) {
    if (recent.size() != model.beta.size())
        throw std::invalid_argument("forecast_one: need " + std::to_string(model.beta.size()) + " lags, got " +
                                    std::to_string(recent.size()));
    if (z_now.size() != model.gamma.size())
        throw std::invalid_argument("forecast_one: need " + std::to_string(model.gamma.size()) +
                                    " exogenous values, got " + std::to_string(z_now.size()));
    double v = model.alpha;
    for (std::size_t k = 0; k < model.beta.size(); ++k) v += model.beta[k] * recent[k];
    for (std::size_t j = 0; j < model.gamma.size(); ++j) v += model.gamma[j] * z_now[j];
    return std::max(0.0, v);
}

/// Recursive multi-step forecast: each step's output becomes the newest lag.
/// exog_future[s] supplies Z for step s.
inline std::vector<double> forecast_horizon(const PredictionModel& model, const std::vector<double>& recent,
                                            const std::vector<std::vector<double>>& exog_future, int steps) {
    if (steps < 1) throw std::invalid_argument("forecast_horizon: steps must be >= 1");
    if (exog_future.size() != static_cast<std::size_t>(steps))
        throw std::invalid_argument("forecast_horizon: exog_future must have one entry per step");
    std::deque<double> lags(recent.begin(), recent.end());
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) {
        const double f = forecast_one(model, std::vector<double>(lags.begin(), lags.end()), exog_future[static_cast<std::size_t>(s)]);
        out.push_back(f);
        lags.push_front(f);
        lags.pop_back();
    }
    return out;
}

// -- model document (human-readable JSON) -----------------------------------

inline nlohmann::json model_to_json(const PredictionModel& m) {
    nlohmann::json j;
    j["approach_id"] = m.approach_id;
    j["p"] = m.p();
    j["q"] = m.q();
    j["alpha"] = m.alpha;
    j["beta"] = m.beta;
    j["gamma"] = m.gamma;
    j["exog_names"] = m.exog_names;
    return j;
}

inline PredictionModel model_from_json(const nlohmann::json& j) {
    PredictionModel m;
    m.approach_id = j.at("approach_id").get<std::string>();
    m.alpha = j.at("alpha").get<double>();
    m.beta = j.at("beta").get<std::vector<double>>();
    m.gamma = j.at("gamma").get<std::vector<double>>();
    if (j.contains("exog_names")) m.exog_names = j.at("exog_names").get<std::vector<std::string>>();
    if (j.contains("p") && j.at("p").get<int>() != m.p())
        throw std::invalid_argument("model document: p=" + j.at("p").dump() + " does not match beta length " +
                                    std::to_string(m.beta.size()));
    if (j.contains("q") && j.at("q").get<int>() != m.q())
        throw std::invalid_argument("model document: q=" + j.at("q").dump() + " does not match gamma length " +
                                    std::to_string(m.gamma.size()));
    m.validate();
    return m;
}

} // namespace greensplit

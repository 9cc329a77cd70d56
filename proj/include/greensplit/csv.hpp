#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "greensplit/domain.hpp"
#include "greensplit/microsim.hpp"

namespace greensplit {

/// Fixed-format CSV of per-interval simulator rows. Field order and number
/// formatting are pinned so repeat runs diff byte-identically.
inline void write_interval_rows(std::ostream& out, const std::vector<IntervalRow>& rows) {
    out << "t_s,approach_id,queue,arrivals,departures,green_s,cum_wait_veh_s\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.3f,%s,%ld,%ld,%ld,%.3f,%.3f\n", r.t_s, r.approach_id.c_str(), r.queue,
                      r.arrivals, r.departures, r.green_s, r.cum_wait_veh_s);
        out << buf;
    }
}

inline void write_interval_rows_file(const std::string& path, const std::vector<IntervalRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_interval_rows(out, rows);
}

struct HistoryData {
    /// observations grouped per approach, time-ordered
    std::map<std::string, std::vector<FlowObservation>> by_approach;
    std::vector<ExogenousRecord> exog;
    std::vector<std::string> exog_names;
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}
} // namespace detail

/// Parse a flow-history CSV with columns t, approach_id, flow, z_1..z_q.
/// Exogenous values must agree across approaches for the same t.
inline HistoryData parse_history_csv(std::istream& in, int expected_q = -1) {
    HistoryData data;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("history csv: empty file");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "t" || header[1] != "approach_id" || header[2] != "flow")
        throw std::invalid_argument("history csv: header must start with t,approach_id,flow");
    const int q = static_cast<int>(header.size()) - 3;
    if (expected_q >= 0 && q != expected_q)
        throw std::invalid_argument("history csv: found " + std::to_string(q) + " exogenous columns, expected q=" +
                                    std::to_string(expected_q));
    data.exog_names.assign(header.begin() + 3, header.end());

    std::map<long, std::vector<double>> exog_by_t;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw std::invalid_argument("history csv line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " fields, got " +
                                        std::to_string(fields.size()));
        FlowObservation obs;
        try {
            obs.t = std::stol(fields[0]);
            obs.approach_id = fields[1];
            obs.flow_veh_per_interval = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw std::invalid_argument("history csv line " + std::to_string(line_no) + ": bad numeric field");
        }
        std::vector<double> z(static_cast<std::size_t>(q));
        for (int k = 0; k < q; ++k) {
            try {
                z[static_cast<std::size_t>(k)] = std::stod(fields[static_cast<std::size_t>(3 + k)]);
            } catch (const std::exception&) {
                throw std::invalid_argument("history csv line " + std::to_string(line_no) + ": bad exogenous value");
            }
        }
        auto [it, inserted] = exog_by_t.emplace(obs.t, z);
        if (!inserted && it->second != z)
            throw std::invalid_argument("history csv line " + std::to_string(line_no) +
                                        ": exogenous values disagree with an earlier row for t=" +
                                        std::to_string(obs.t));
        data.by_approach[obs.approach_id].push_back(std::move(obs));
    }
    for (auto& [id, series] : data.by_approach) {
        (void)id;
        std::stable_sort(series.begin(), series.end(),
                         [](const FlowObservation& a, const FlowObservation& b) { return a.t < b.t; });
    }
    data.exog.reserve(exog_by_t.size());
    for (auto& [t, values] : exog_by_t) data.exog.push_back(ExogenousRecord{t, std::move(values)});
    return data;
}

inline HistoryData parse_history_csv_file(const std::string& path, int expected_q = -1) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("history csv: cannot open '" + path + "'");
    return parse_history_csv(in, expected_q);
}

} // namespace greensplit

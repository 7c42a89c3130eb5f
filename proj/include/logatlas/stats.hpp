#pragma once

// Descriptive statistics over session lists: hour histogram, weekday split,
// duration quantiles, per-host counts, and the duration/volume correlation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "logatlas/sessionize.hpp"

namespace logatlas {

// Standard product-moment correlation. Undefined for constant inputs.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("pearson: length mismatch");
    const std::size_t n = xs.size();
    if (n < 2) throw std::invalid_argument("pearson: need at least 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: constant input");
    return sxy / std::sqrt(sxx * syy);
}

// Linear-interpolation quantile on sorted data (the numpy default).
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile: empty input");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("quantile: p outside [0,1]");
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct DistSummary {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;

    bool operator==(const DistSummary&) const = default;
};

inline void to_json(json& j, const DistSummary& d) {
    j = json{{"min", d.min},       {"q1", d.q1},   {"median", d.median},
             {"q3", d.q3},         {"max", d.max}, {"mean", d.mean}};
}

inline void from_json(const json& j, DistSummary& d) {
    d.min = j.at("min").get<double>();
    d.q1 = j.at("q1").get<double>();
    d.median = j.at("median").get<double>();
    d.q3 = j.at("q3").get<double>();
    d.max = j.at("max").get<double>();
    d.mean = j.at("mean").get<double>();
}

inline DistSummary summarize(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("summarize: empty input");
    std::sort(values.begin(), values.end());
    DistSummary d;
    d.min = values.front();
    d.max = values.back();
    d.q1 = quantile_sorted(values, 0.25);
    d.median = quantile_sorted(values, 0.5);
    d.q3 = quantile_sorted(values, 0.75);
    double sum = 0.0;
    for (double v : values) sum += v;
    d.mean = sum / static_cast<double>(values.size());
    return d;
}

struct StatsReport {
    std::int64_t session_count = 0;
    std::array<std::int64_t, 24> hour_histogram{};
    double weekday_share = 0.0;
    double weekend_share = 0.0;
    DistSummary duration_seconds;
    DistSummary logs_per_session;
    // Absent when either series is constant (correlation undefined).
    std::optional<double> duration_volume_pearson_r;
    std::map<std::string, std::int64_t> per_host_sessions;
    Prevalence prev;

    bool operator==(const StatsReport&) const = default;
};

inline void to_json(json& j, const StatsReport& s) {
    j = json{{"session_count", s.session_count},
             {"hour_histogram", s.hour_histogram},
             {"weekday_share", s.weekday_share},
             {"weekend_share", s.weekend_share},
             {"duration_seconds", s.duration_seconds},
             {"logs_per_session", s.logs_per_session},
             {"duration_volume_pearson_r",
              s.duration_volume_pearson_r ? json(*s.duration_volume_pearson_r)
                                          : json(nullptr)},
             {"per_host_sessions", s.per_host_sessions},
             {"prevalence", s.prev}};
}

inline void from_json(const json& j, StatsReport& s) {
    s.session_count = j.at("session_count").get<std::int64_t>();
    s.hour_histogram = j.at("hour_histogram").get<std::array<std::int64_t, 24>>();
    s.weekday_share = j.at("weekday_share").get<double>();
    s.weekend_share = j.at("weekend_share").get<double>();
    s.duration_seconds = j.at("duration_seconds").get<DistSummary>();
    s.logs_per_session = j.at("logs_per_session").get<DistSummary>();
    if (j.at("duration_volume_pearson_r").is_null())
        s.duration_volume_pearson_r.reset();
    else
        s.duration_volume_pearson_r =
            j.at("duration_volume_pearson_r").get<double>();
    s.per_host_sessions =
        j.at("per_host_sessions").get<std::map<std::string, std::int64_t>>();
    s.prev = j.at("prevalence").get<Prevalence>();
}

inline StatsReport compute_stats(const std::vector<Session>& sessions) {
    if (sessions.empty())
        throw std::invalid_argument("compute_stats: empty session list");
    StatsReport s;
    s.session_count = static_cast<std::int64_t>(sessions.size());
    std::vector<double> durations, volumes;
    durations.reserve(sessions.size());
    volumes.reserve(sessions.size());
    std::int64_t weekend = 0;
    for (const Session& sess : sessions) {
        ++s.hour_histogram[static_cast<std::size_t>(sess.meta.hour)];
        if (sess.meta.is_weekend) ++weekend;
        durations.push_back(sess.meta.duration_seconds);
        volumes.push_back(static_cast<double>(sess.entries.size()));
        ++s.per_host_sessions[sess.meta.host];
    }
    s.weekend_share =
        static_cast<double>(weekend) / static_cast<double>(sessions.size());
    s.weekday_share = 1.0 - s.weekend_share;
    s.duration_seconds = summarize(durations);
    s.logs_per_session = summarize(volumes);
    try {
        s.duration_volume_pearson_r = pearson(durations, volumes);
    } catch (const std::invalid_argument&) {
        s.duration_volume_pearson_r.reset();
    }
    s.prev = prevalence(sessions);
    return s;
}

// CSV emitters for the histogram tables shipped next to the JSON report.
inline std::string hour_histogram_csv(const StatsReport& s) {
    std::string out = "hour,count\n";
    for (int h = 0; h < 24; ++h)
        out += std::to_string(h) + "," +
               std::to_string(s.hour_histogram[static_cast<std::size_t>(h)]) + "\n";
    return out;
}

inline std::string per_host_csv(const StatsReport& s) {
    std::string out = "host,count\n";
    for (const auto& [host, n] : s.per_host_sessions)
        out += host + "," + std::to_string(n) + "\n";
    return out;
}

}  // namespace logatlas

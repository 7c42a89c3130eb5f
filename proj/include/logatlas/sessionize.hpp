#pragma once

// Gap-based session construction: a time-ordered entry stream is partitioned
// by context key (host, process, user), and within a key a new session starts
// whenever the inter-entry gap reaches gap_seconds. The boundary is inclusive:
// a gap of exactly gap_seconds starts a new session.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "logatlas/core.hpp"

namespace logatlas {

struct ContextKey {
    std::string host;
    std::optional<std::string> process;
    std::optional<std::string> user;

    auto operator<=>(const ContextKey&) const = default;
};

inline ContextKey context_key(const LogEntry& e) {
    return ContextKey{e.host, e.process, e.user};
}

constexpr double kDefaultGapSeconds = 300.0;

// Entries must be globally timestamp-sorted (ties resolved by ingestion
// order, which the input order already encodes). Memory is bounded by the
// number of simultaneously open keys: a key's run is flushed as soon as the
// stream time passes its last entry + gap, since no later entry can join it.
inline std::vector<Session> sessionize(const std::vector<LogEntry>& entries,
                                       double gap_seconds = kDefaultGapSeconds) {
    if (gap_seconds <= 0.0)
        throw std::invalid_argument("sessionize: gap_seconds must be > 0");
    const double gap_us = gap_seconds * static_cast<double>(kMicrosPerSecond);

    struct OpenRun {
        std::vector<LogEntry> entries;
    };
    std::map<ContextKey, OpenRun> open;
    std::vector<std::pair<std::pair<Timestamp, ContextKey>, Session>> done;

    auto close = [&](const ContextKey& key, OpenRun& run) {
        Session s;
        s.entries = std::move(run.entries);
        s.meta = derive_meta(s.entries);
        s.label = derive_label(s.entries);
        done.emplace_back(std::make_pair(s.entries.front().timestamp, key),
                          std::move(s));
    };

    Timestamp prev_ts = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const LogEntry& e = entries[i];
        if (i > 0 && e.timestamp < prev_ts)
            throw std::invalid_argument(
                "sessionize: input not timestamp-sorted at index " +
                std::to_string(i));
        prev_ts = e.timestamp;

        const ContextKey key = context_key(e);
        auto it = open.find(key);
        if (it != open.end()) {
            const Timestamp last = it->second.entries.back().timestamp;
            if (static_cast<double>(e.timestamp - last) >= gap_us) {
                close(key, it->second);
                it->second.entries.clear();
            }
        } else {
            it = open.emplace(key, OpenRun{}).first;
        }
        it->second.entries.push_back(e);

        // Bounded-memory flush: retire keys that can no longer grow.
        if ((i & 0x3ff) == 0 && open.size() > 64) {
            for (auto oit = open.begin(); oit != open.end();) {
                const Timestamp last = oit->second.entries.back().timestamp;
                if (static_cast<double>(e.timestamp - last) >= gap_us) {
                    close(oit->first, oit->second);
                    oit = open.erase(oit);
                } else {
                    ++oit;
                }
            }
        }
    }
    for (auto& [key, run] : open)
        if (!run.entries.empty()) close(key, run);

    std::sort(done.begin(), done.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Session> out;
    out.reserve(done.size());
    for (auto& [_, s] : done) out.push_back(std::move(s));
    return out;
}

// Exact anomalous fraction, kept as a rational alongside the float.
struct Prevalence {
    std::int64_t anomalous = 0;
    std::int64_t total = 0;

    double fraction() const {
        return static_cast<double>(anomalous) / static_cast<double>(total);
    }
    bool operator==(const Prevalence&) const = default;
};

inline void to_json(json& j, const Prevalence& p) {
    j = json{{"anomalous", p.anomalous},
             {"total", p.total},
             {"fraction", p.fraction()}};
}

inline void from_json(const json& j, Prevalence& p) {
    p.anomalous = j.at("anomalous").get<std::int64_t>();
    p.total = j.at("total").get<std::int64_t>();
}

inline Prevalence prevalence(const std::vector<Session>& sessions) {
    if (sessions.empty())
        throw std::invalid_argument("prevalence: empty session list");
    Prevalence p;
    p.total = static_cast<std::int64_t>(sessions.size());
    for (const Session& s : sessions)
        if (s.label == Label::anomalous) ++p.anomalous;
    return p;
}

}  // namespace logatlas

#pragma once

// Shared domain types: normalized log entries, sessions, and the labeling
// rule every downstream stage consumes. All types are immutable value types
// once constructed and safe to share across threads.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "logatlas/time.hpp"

namespace logatlas {

using json = nlohmann::json;

enum class SourceType {
    syslog,
    apache_access,
    auth,
    dns,
    audit,
    suricata,
    raw,
};

constexpr std::array<SourceType, 7> kAllSourceTypes = {
    SourceType::syslog, SourceType::apache_access, SourceType::auth,
    SourceType::dns,    SourceType::audit,         SourceType::suricata,
    SourceType::raw,
};

inline std::string_view to_string(SourceType t) {
    switch (t) {
        case SourceType::syslog: return "syslog";
        case SourceType::apache_access: return "apache_access";
        case SourceType::auth: return "auth";
        case SourceType::dns: return "dns";
        case SourceType::audit: return "audit";
        case SourceType::suricata: return "suricata";
        case SourceType::raw: return "raw";
    }
    throw std::logic_error("to_string: bad SourceType");
}

inline std::optional<SourceType> source_type_from(std::string_view s) {
    for (SourceType t : kAllSourceTypes)
        if (to_string(t) == s) return t;
    return std::nullopt;
}

enum class AttackTag {
    reconnaissance,
    compromise,
    lateral_movement,
    data_exfiltration,
};

constexpr std::array<AttackTag, 4> kAllAttackTags = {
    AttackTag::reconnaissance,
    AttackTag::compromise,
    AttackTag::lateral_movement,
    AttackTag::data_exfiltration,
};

inline std::string_view to_string(AttackTag t) {
    switch (t) {
        case AttackTag::reconnaissance: return "reconnaissance";
        case AttackTag::compromise: return "compromise";
        case AttackTag::lateral_movement: return "lateral_movement";
        case AttackTag::data_exfiltration: return "data_exfiltration";
    }
    throw std::logic_error("to_string: bad AttackTag");
}

inline std::optional<AttackTag> attack_tag_from(std::string_view s) {
    for (AttackTag t : kAllAttackTags)
        if (to_string(t) == s) return t;
    return std::nullopt;
}

// Alias table mapping vendor/testbed tag spellings onto the four tag
// families. Shipped as TSV data (data/attack_tag_map.tsv); see load_tag_map.
using TagAliasMap = std::map<std::string, AttackTag, std::less<>>;

inline std::optional<AttackTag> resolve_tag(std::string_view name,
                                            const TagAliasMap& aliases) {
    if (auto t = attack_tag_from(name)) return t;
    if (auto it = aliases.find(name); it != aliases.end()) return it->second;
    return std::nullopt;
}

enum class ParseStatus { parsed, fallback_raw };

inline std::string_view to_string(ParseStatus s) {
    return s == ParseStatus::parsed ? "parsed" : "fallback_raw";
}

inline std::optional<ParseStatus> parse_status_from(std::string_view s) {
    if (s == "parsed") return ParseStatus::parsed;
    if (s == "fallback_raw") return ParseStatus::fallback_raw;
    return std::nullopt;
}

// One normalized log record. parse_status == fallback_raw implies `message`
// is the raw input line verbatim.
struct LogEntry {
    Timestamp timestamp = 0;
    std::string host;
    SourceType source_type = SourceType::raw;
    std::optional<std::string> process;
    std::optional<std::string> user;
    std::string message;
    std::set<AttackTag> attack_tags;
    ParseStatus parse_status = ParseStatus::parsed;

    bool operator==(const LogEntry&) const = default;
};

struct ParseCounts {
    std::int64_t parsed = 0;
    std::int64_t fallback_raw = 0;

    std::int64_t total() const { return parsed + fallback_raw; }
    bool operator==(const ParseCounts&) const = default;
};

struct SessionMeta {
    double duration_seconds = 0.0;
    std::string host;
    int hour = 0;           // UTC, from the first entry
    bool is_weekend = false;  // UTC, from the first entry
    std::map<SourceType, std::int64_t> log_types;
    std::map<SourceType, ParseCounts> parsing_stats;

    bool operator==(const SessionMeta&) const = default;
};

enum class Label { normal, anomalous };

inline std::string_view to_string(Label l) {
    return l == Label::normal ? "normal" : "anomalous";
}

inline std::optional<Label> label_from(std::string_view s) {
    if (s == "normal") return Label::normal;
    if (s == "anomalous") return Label::anomalous;
    return std::nullopt;
}

struct Session {
    std::vector<LogEntry> entries;  // timestamp-sorted, ties by ingestion order
    SessionMeta meta;
    Label label = Label::normal;

    bool operator==(const Session&) const = default;
};

// A session is anomalous iff any entry carries an attack tag.
inline Label derive_label(const std::vector<LogEntry>& entries) {
    if (entries.empty())
        throw std::invalid_argument("derive_label: sessions are never empty");
    for (const LogEntry& e : entries)
        if (!e.attack_tags.empty()) return Label::anomalous;
    return Label::normal;
}

inline SessionMeta derive_meta(const std::vector<LogEntry>& entries) {
    if (entries.empty())
        throw std::invalid_argument("derive_meta: sessions are never empty");
    for (std::size_t i = 1; i < entries.size(); ++i)
        if (entries[i].timestamp < entries[i - 1].timestamp)
            throw std::invalid_argument(
                "derive_meta: entries not timestamp-sorted at index " +
                std::to_string(i));
    SessionMeta m;
    m.duration_seconds =
        static_cast<double>(entries.back().timestamp - entries.front().timestamp) /
        static_cast<double>(kMicrosPerSecond);
    m.host = entries.front().host;
    m.hour = utc_hour(entries.front().timestamp);
    m.is_weekend = utc_is_weekend(entries.front().timestamp);
    for (const LogEntry& e : entries) {
        ++m.log_types[e.source_type];
        ParseCounts& pc = m.parsing_stats[e.source_type];
        if (e.parse_status == ParseStatus::parsed)
            ++pc.parsed;
        else
            ++pc.fallback_raw;
    }
    return m;
}

// ---------------------------------------------------------------------------
// JSONL serialization. Field names match the type definitions; timestamps are
// RFC 3339 with microseconds. nlohmann orders object keys, so serialization
// is byte-deterministic.

inline void to_json(json& j, const LogEntry& e) {
    j = json{{"timestamp", format_rfc3339(e.timestamp)},
             {"host", e.host},
             {"source_type", to_string(e.source_type)},
             {"process", e.process ? json(*e.process) : json(nullptr)},
             {"user", e.user ? json(*e.user) : json(nullptr)},
             {"message", e.message},
             {"attack_tags", json::array()},
             {"parse_status", to_string(e.parse_status)}};
    for (AttackTag t : e.attack_tags) j["attack_tags"].push_back(to_string(t));
}

inline void from_json(const json& j, LogEntry& e) {
    const auto ts = parse_rfc3339(j.at("timestamp").get<std::string>());
    if (!ts) throw std::invalid_argument("LogEntry: bad timestamp");
    e.timestamp = *ts;
    e.host = j.at("host").get<std::string>();
    const auto st = source_type_from(j.at("source_type").get<std::string>());
    if (!st) throw std::invalid_argument("LogEntry: bad source_type");
    e.source_type = *st;
    e.process = j.at("process").is_null()
                    ? std::nullopt
                    : std::optional<std::string>(j.at("process").get<std::string>());
    e.user = j.at("user").is_null()
                 ? std::nullopt
                 : std::optional<std::string>(j.at("user").get<std::string>());
    e.message = j.at("message").get<std::string>();
    e.attack_tags.clear();
    for (const auto& t : j.at("attack_tags")) {
        const auto tag = attack_tag_from(t.get<std::string>());
        if (!tag) throw std::invalid_argument("LogEntry: bad attack tag");
        e.attack_tags.insert(*tag);
    }
    const auto ps = parse_status_from(j.at("parse_status").get<std::string>());
    if (!ps) throw std::invalid_argument("LogEntry: bad parse_status");
    e.parse_status = *ps;
}

inline void to_json(json& j, const ParseCounts& c) {
    j = json{{"parsed", c.parsed}, {"fallback_raw", c.fallback_raw}};
}

inline void from_json(const json& j, ParseCounts& c) {
    c.parsed = j.at("parsed").get<std::int64_t>();
    c.fallback_raw = j.at("fallback_raw").get<std::int64_t>();
}

inline void to_json(json& j, const SessionMeta& m) {
    json types = json::object();
    for (const auto& [t, n] : m.log_types) types[std::string(to_string(t))] = n;
    json stats = json::object();
    for (const auto& [t, c] : m.parsing_stats)
        stats[std::string(to_string(t))] = c;
    j = json{{"duration_seconds", m.duration_seconds},
             {"host", m.host},
             {"hour", m.hour},
             {"is_weekend", m.is_weekend},
             {"log_types", std::move(types)},
             {"parsing_stats", std::move(stats)}};
}

inline void from_json(const json& j, SessionMeta& m) {
    m.duration_seconds = j.at("duration_seconds").get<double>();
    m.host = j.at("host").get<std::string>();
    m.hour = j.at("hour").get<int>();
    m.is_weekend = j.at("is_weekend").get<bool>();
    m.log_types.clear();
    for (const auto& [k, v] : j.at("log_types").items()) {
        const auto t = source_type_from(k);
        if (!t) throw std::invalid_argument("SessionMeta: bad log_types key");
        m.log_types[*t] = v.get<std::int64_t>();
    }
    m.parsing_stats.clear();
    for (const auto& [k, v] : j.at("parsing_stats").items()) {
        const auto t = source_type_from(k);
        if (!t) throw std::invalid_argument("SessionMeta: bad parsing_stats key");
        m.parsing_stats[*t] = v.get<ParseCounts>();
    }
}

inline void to_json(json& j, const Session& s) {
    j = json{{"entries", s.entries},
             {"meta", s.meta},
             {"label", to_string(s.label)}};
}

inline void from_json(const json& j, Session& s) {
    s.entries = j.at("entries").get<std::vector<LogEntry>>();
    s.meta = j.at("meta").get<SessionMeta>();
    const auto l = label_from(j.at("label").get<std::string>());
    if (!l) throw std::invalid_argument("Session: bad label");
    s.label = *l;
}

}  // namespace logatlas

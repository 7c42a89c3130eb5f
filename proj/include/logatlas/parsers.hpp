#pragma once

// Grammar-based line parsers with total fallback: every input line becomes
// exactly one LogEntry. Six text formats are recognized (syslog, apache
// combined access, auth, BIND-style dns query, auditd, suricata fast.log);
// anything else falls back to a raw entry whose message is the input line
// verbatim. Adding a format means adding a grammar entry plus a branch in
// parse_with_grammar.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "logatlas/core.hpp"
#include "logatlas/io.hpp"
#include "logatlas/time.hpp"

namespace logatlas {

// Sidecar context for fields a single line cannot supply: the host that owns
// the file, the year (syslog timestamps have none), and the timestamp used
// when a file contains no parseable line at all.
struct ParseContext {
    std::string default_host = "unknown";
    int default_year = 2024;
    Timestamp file_start = 0;
};

// Line pattern + timestamp format for one source type. The grammars are
// fixed tables; `pattern` is documentation-grade (the anchors the parser
// extracts), the authoritative matcher lives in parse_with_grammar.
struct FormatGrammar {
    SourceType source_type;
    std::string pattern;
    std::string timestamp_format;
};

inline const std::vector<FormatGrammar>& grammars() {
    static const std::vector<FormatGrammar> g = {
        {SourceType::syslog,
         "<MMM> <d> <HH:MM:SS> <host> <process>[<pid>]: <message>",
         "MMM d HH:MM:SS (year from context)"},
        {SourceType::auth,
         "<MMM> <d> <HH:MM:SS> <host> <process>[<pid>]: <message>",
         "MMM d HH:MM:SS (year from context)"},
        {SourceType::apache_access,
         "<client> <ident> <user> [<timestamp>] \"<request>\" <status> <bytes> "
         "\"<referer>\" \"<agent>\"",
         "dd/MMM/yyyy:HH:MM:SS +ZZZZ"},
        {SourceType::dns,
         "<dd-MMM-yyyy HH:MM:SS.mmm> client <ip>#<port> (<qname>): query: "
         "<qname> IN <qtype>",
         "dd-MMM-yyyy HH:MM:SS.mmm"},
        {SourceType::audit,
         "type=<TYPE> msg=audit(<epoch>.<ms>:<serial>): <body>",
         "epoch seconds.milliseconds"},
        {SourceType::suricata,
         "<MM/DD/YYYY-HH:MM:SS.ffffff>  <alert text>",
         "MM/DD/YYYY-HH:MM:SS.ffffff"},
    };
    return g;
}

namespace detail {

inline std::optional<unsigned> month_from_abbrev(std::string_view m) {
    static constexpr std::string_view names[12] = {
        "Jan", "Feb", "Mar", "Apr", "May", "Jun",
        "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    for (unsigned i = 0; i < 12; ++i)
        if (names[i] == m) return i + 1;
    return std::nullopt;
}

inline bool parse_int(std::string_view s, int& out) {
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && p == end;
}

// "08:30:01" -> (8, 30, 1)
inline bool parse_hms(std::string_view s, int& h, int& m, int& sec) {
    if (s.size() != 8 || s[2] != ':' || s[5] != ':') return false;
    return parse_int(s.substr(0, 2), h) && parse_int(s.substr(3, 2), m) &&
           parse_int(s.substr(6, 2), sec) && h <= 23 && m <= 59 && sec <= 59;
}

// Users show up in free text as "for alice", "for invalid user admin",
// "user=root"; positions identified here are the only ones the anonymizer
// later touches inside messages.
inline std::optional<std::string> extract_user(const std::string& message) {
    static const std::regex for_user(
        R"(\bfor (?:invalid user |user )?([A-Za-z0-9._-]+))");
    static const std::regex plain_user(R"(\buser[= ]([A-Za-z0-9._-]+))");
    std::smatch m;
    if (std::regex_search(message, m, for_user)) return m[1].str();
    if (std::regex_search(message, m, plain_user)) return m[1].str();
    return std::nullopt;
}

inline std::optional<LogEntry> parse_sysloglike(const std::string& raw,
                                                SourceType st,
                                                const ParseContext& ctx) {
    std::istringstream iss(raw);
    std::string mon, day, time, host;
    if (!(iss >> mon >> day >> time >> host)) return std::nullopt;
    const auto month = month_from_abbrev(mon);
    int d = 0, h = 0, mi = 0, s = 0;
    if (!month || !parse_int(day, d) || d < 1 || d > 31 ||
        !parse_hms(time, h, mi, s))
        return std::nullopt;
    std::string rest;
    std::getline(iss, rest);
    if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
    if (rest.empty()) return std::nullopt;

    LogEntry e;
    try {
        e.timestamp = make_timestamp(ctx.default_year, *month,
                                     static_cast<unsigned>(d),
                                     static_cast<unsigned>(h),
                                     static_cast<unsigned>(mi),
                                     static_cast<unsigned>(s));
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
    e.host = host;
    e.source_type = st;
    // "process[pid]: message" or "process: message"; a missing tag leaves
    // process unset and the whole remainder as the message.
    static const std::regex tag(R"(^([A-Za-z0-9_.\/-]+)(\[\d+\])?: (.*)$)");
    std::smatch m;
    if (std::regex_match(rest, m, tag)) {
        e.process = m[1].str();
        e.message = m[3].str();
    } else {
        e.message = rest;
    }
    e.user = extract_user(e.message);
    e.parse_status = ParseStatus::parsed;
    return e;
}

inline std::optional<LogEntry> parse_apache(const std::string& raw,
                                            const ParseContext& ctx) {
    static const std::regex line(
        R"re(^(\S+) (\S+) (\S+) \[(\d{2})/([A-Za-z]{3})/(\d{4}):(\d{2}:\d{2}:\d{2}) ([+-]\d{4})\] "([^"]*)" (\d{3}) (\d+|-) "([^"]*)" "([^"]*)"$)re");
    std::smatch m;
    if (!std::regex_match(raw, m, line)) return std::nullopt;
    const auto month = month_from_abbrev(m[5].str());
    int d = 0, year = 0, h = 0, mi = 0, s = 0;
    if (!month || !parse_int(m[4].str(), d) || !parse_int(m[6].str(), year) ||
        !parse_hms(m[7].str(), h, mi, s))
        return std::nullopt;
    int off = 0;
    if (!parse_int(m[8].str().substr(1), off)) return std::nullopt;
    std::int64_t offset_us =
        ((off / 100) * 3600LL + (off % 100) * 60LL) * kMicrosPerSecond;
    if (m[8].str()[0] == '-') offset_us = -offset_us;

    LogEntry e;
    try {
        e.timestamp = make_timestamp(year, *month, static_cast<unsigned>(d),
                                     static_cast<unsigned>(h),
                                     static_cast<unsigned>(mi),
                                     static_cast<unsigned>(s)) -
                      offset_us;
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
    e.host = ctx.default_host;
    e.source_type = SourceType::apache_access;
    if (m[3].str() != "-") e.user = m[3].str();
    e.message = m[1].str() + " \"" + m[9].str() + "\" " + m[10].str() + " " +
                m[11].str() + " \"" + m[12].str() + "\" \"" + m[13].str() + "\"";
    e.parse_status = ParseStatus::parsed;
    return e;
}

inline std::optional<LogEntry> parse_dns(const std::string& raw,
                                         const ParseContext& ctx) {
    static const std::regex line(
        R"(^(\d{2})-([A-Za-z]{3})-(\d{4}) (\d{2}:\d{2}:\d{2})\.(\d{3}) client (\S+)#(\d+) \(([^)]*)\): query: (\S+) IN (\S+)$)");
    std::smatch m;
    if (!std::regex_match(raw, m, line)) return std::nullopt;
    const auto month = month_from_abbrev(m[2].str());
    int d = 0, year = 0, h = 0, mi = 0, s = 0, ms = 0;
    if (!month || !parse_int(m[1].str(), d) || !parse_int(m[3].str(), year) ||
        !parse_hms(m[4].str(), h, mi, s) || !parse_int(m[5].str(), ms))
        return std::nullopt;

    LogEntry e;
    try {
        e.timestamp = make_timestamp(year, *month, static_cast<unsigned>(d),
                                     static_cast<unsigned>(h),
                                     static_cast<unsigned>(mi),
                                     static_cast<unsigned>(s), ms * 1000LL);
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
    e.host = ctx.default_host;
    e.source_type = SourceType::dns;
    e.message = "client " + m[6].str() + "#" + m[7].str() + " query " +
                m[9].str() + " IN " + m[10].str();
    e.parse_status = ParseStatus::parsed;
    return e;
}

inline std::optional<LogEntry> parse_audit(const std::string& raw,
                                           const ParseContext& ctx) {
    static const std::regex line(
        R"(^type=([A-Z_]+) msg=audit\((\d+)\.(\d{3}):(\d+)\): (.*)$)");
    std::smatch m;
    if (!std::regex_match(raw, m, line)) return std::nullopt;
    std::int64_t secs = 0;
    {
        const std::string s = m[2].str();
        const auto* end = s.data() + s.size();
        auto [p, ec] = std::from_chars(s.data(), end, secs);
        if (ec != std::errc{} || p != end) return std::nullopt;
    }
    int ms = 0;
    if (!parse_int(m[3].str(), ms)) return std::nullopt;

    LogEntry e;
    e.timestamp = secs * kMicrosPerSecond + ms * 1000LL;
    e.host = ctx.default_host;
    e.source_type = SourceType::audit;
    e.message = "type=" + m[1].str() + " " + m[5].str();
    const std::string body = m[5].str();
    static const std::regex acct(R"re(acct="([^"]+)")re");
    static const std::regex exe(R"re(exe="([^"]+)")re");
    std::smatch f;
    if (std::regex_search(body, f, acct)) e.user = f[1].str();
    if (std::regex_search(body, f, exe)) {
        const std::string path = f[1].str();
        const auto slash = path.find_last_of('/');
        e.process = slash == std::string::npos ? path : path.substr(slash + 1);
    }
    e.parse_status = ParseStatus::parsed;
    return e;
}

inline std::optional<LogEntry> parse_suricata(const std::string& raw,
                                              const ParseContext& ctx) {
    static const std::regex line(
        R"(^(\d{2})/(\d{2})/(\d{4})-(\d{2}:\d{2}:\d{2})\.(\d{6})\s+(.*)$)");
    std::smatch m;
    if (!std::regex_match(raw, m, line)) return std::nullopt;
    int mo = 0, d = 0, year = 0, h = 0, mi = 0, s = 0, us = 0;
    if (!parse_int(m[1].str(), mo) || !parse_int(m[2].str(), d) ||
        !parse_int(m[3].str(), year) || !parse_hms(m[4].str(), h, mi, s) ||
        !parse_int(m[5].str(), us) || mo < 1 || mo > 12)
        return std::nullopt;

    LogEntry e;
    try {
        e.timestamp = make_timestamp(year, static_cast<unsigned>(mo),
                                     static_cast<unsigned>(d),
                                     static_cast<unsigned>(h),
                                     static_cast<unsigned>(mi),
                                     static_cast<unsigned>(s), us);
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
    e.host = ctx.default_host;
    e.source_type = SourceType::suricata;
    e.message = m[6].str();
    e.parse_status = ParseStatus::parsed;
    return e;
}

inline std::optional<LogEntry> parse_with_grammar(const std::string& raw,
                                                  SourceType hint,
                                                  const ParseContext& ctx) {
    switch (hint) {
        case SourceType::syslog: return parse_sysloglike(raw, hint, ctx);
        case SourceType::auth: return parse_sysloglike(raw, hint, ctx);
        case SourceType::apache_access: return parse_apache(raw, ctx);
        case SourceType::dns: return parse_dns(raw, ctx);
        case SourceType::audit: return parse_audit(raw, ctx);
        case SourceType::suricata: return parse_suricata(raw, ctx);
        case SourceType::raw: return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace detail

// Total parse of a single line: grammar match on success, fallback otherwise.
// The fallback timestamp is the caller-provided sidecar value; parse_stream
// replaces it with the interpolated position between parsed neighbors.
inline LogEntry parse_line(const std::string& raw, SourceType hint,
                           const ParseContext& ctx,
                           Timestamp fallback_timestamp = 0) {
    if (auto e = detail::parse_with_grammar(raw, hint, ctx)) return *e;
    LogEntry e;
    e.timestamp = fallback_timestamp;
    e.host = ctx.default_host;
    e.source_type = hint;
    e.message = raw;  // verbatim
    e.parse_status = ParseStatus::fallback_raw;
    return e;
}

struct ParseStats {
    std::map<SourceType, ParseCounts> per_source;
    std::int64_t lines_read = 0;

    std::int64_t total_parsed() const {
        std::int64_t n = 0;
        for (const auto& [_, c] : per_source) n += c.parsed;
        return n;
    }
    std::int64_t total_fallback() const {
        std::int64_t n = 0;
        for (const auto& [_, c] : per_source) n += c.fallback_raw;
        return n;
    }
    void merge(const ParseStats& other) {
        for (const auto& [t, c] : other.per_source) {
            per_source[t].parsed += c.parsed;
            per_source[t].fallback_raw += c.fallback_raw;
        }
        lines_read += other.lines_read;
    }
};

inline void to_json(json& j, const ParseStats& s) {
    json per = json::object();
    for (const auto& [t, c] : s.per_source) per[std::string(to_string(t))] = c;
    j = json{{"per_source", std::move(per)},
             {"lines_read", s.lines_read},
             {"parsed", s.total_parsed()},
             {"fallback_raw", s.total_fallback()}};
}

struct ParseResult {
    std::vector<LogEntry> entries;
    ParseStats stats;
};

// Parses a whole stream in file order. Fallback lines get timestamps by
// linear interpolation between the nearest parsed neighbors; one-sided runs
// take the nearest parsed timestamp, and a file with no parsed line at all
// uses ctx.file_start. Output order always equals input order.
template <typename NextLine>
ParseResult parse_stream(NextLine&& next_line, SourceType hint,
                         const ParseContext& ctx) {
    ParseResult out;
    std::vector<std::size_t> pending;  // fallback indices awaiting timestamps
    std::optional<std::size_t> last_parsed_idx;

    auto interpolate = [&](Timestamp next_ts, std::size_t next_idx) {
        if (pending.empty()) return;
        if (!last_parsed_idx) {
            for (std::size_t i : pending) out.entries[i].timestamp = next_ts;
        } else {
            const Timestamp a = out.entries[*last_parsed_idx].timestamp;
            const auto pa = static_cast<double>(*last_parsed_idx);
            const auto span = static_cast<double>(next_idx) - pa;
            for (std::size_t i : pending) {
                const double frac = (static_cast<double>(i) - pa) / span;
                out.entries[i].timestamp =
                    a + static_cast<Timestamp>(std::llround(
                            static_cast<double>(next_ts - a) * frac));
            }
        }
        pending.clear();
    };

    while (auto line = next_line()) {
        ++out.stats.lines_read;
        LogEntry e = parse_line(*line, hint, ctx, ctx.file_start);
        const std::size_t idx = out.entries.size();
        ParseCounts& pc = out.stats.per_source[e.source_type];
        if (e.parse_status == ParseStatus::parsed) {
            ++pc.parsed;
            out.entries.push_back(std::move(e));
            interpolate(out.entries[idx].timestamp, idx);
            last_parsed_idx = idx;
        } else {
            ++pc.fallback_raw;
            out.entries.push_back(std::move(e));
            pending.push_back(idx);
        }
    }
    if (!pending.empty()) {
        const Timestamp tail = last_parsed_idx
                                   ? out.entries[*last_parsed_idx].timestamp
                                   : ctx.file_start;
        for (std::size_t i : pending) out.entries[i].timestamp = tail;
    }
    return out;
}

inline ParseResult parse_lines(const std::vector<std::string>& lines,
                               SourceType hint, const ParseContext& ctx) {
    std::size_t i = 0;
    return parse_stream(
        [&]() -> std::optional<std::string> {
            if (i >= lines.size()) return std::nullopt;
            return lines[i++];
        },
        hint, ctx);
}

inline ParseResult parse_file(const std::filesystem::path& path, SourceType hint,
                              const ParseContext& ctx) {
    LineReader reader(path);
    return parse_stream([&]() { return reader.next(); }, hint, ctx);
}

// Filename convention for the format hint, e.g. "*.auth.log" -> auth.
inline SourceType hint_from_filename(const std::filesystem::path& path) {
    std::string name = path.filename().string();
    for (char& c : name) c = static_cast<char>(std::tolower(c));
    auto has = [&](std::string_view s) { return name.find(s) != std::string::npos; };
    if (has("apache") || has("access")) return SourceType::apache_access;
    if (has("auth")) return SourceType::auth;
    if (has("dns")) return SourceType::dns;
    if (has("audit")) return SourceType::audit;
    if (has("suricata") || has("fast")) return SourceType::suricata;
    if (has("syslog") || has("messages")) return SourceType::syslog;
    return SourceType::raw;
}

}  // namespace logatlas

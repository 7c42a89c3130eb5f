#pragma once

// Synthetic multi-source testbed corpus: continuous normal behavior shaped by
// a business-hours rate profile, with tagged attack windows injected at known
// times. Output is deterministic under the config seed, and every generated
// line parses as status=parsed under the matching grammar (round-trip
// invariant, enforced by tests).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "logatlas/core.hpp"
#include "logatlas/io.hpp"
#include "logatlas/rng.hpp"
#include "logatlas/time.hpp"

namespace logatlas {

enum class HostRole {
    monitoring,
    mail,
    cloud_share,
    web,
    vpn,
    firewall,
    intranet,
    dns,
};

constexpr std::array<HostRole, 8> kAllHostRoles = {
    HostRole::monitoring, HostRole::mail,     HostRole::cloud_share,
    HostRole::web,        HostRole::vpn,      HostRole::firewall,
    HostRole::intranet,   HostRole::dns,
};

inline std::string_view to_string(HostRole r) {
    switch (r) {
        case HostRole::monitoring: return "monitoring";
        case HostRole::mail: return "mail";
        case HostRole::cloud_share: return "cloud_share";
        case HostRole::web: return "web";
        case HostRole::vpn: return "vpn";
        case HostRole::firewall: return "firewall";
        case HostRole::intranet: return "intranet";
        case HostRole::dns: return "dns";
    }
    throw std::logic_error("to_string: bad HostRole");
}

inline std::optional<HostRole> host_role_from(std::string_view s) {
    for (HostRole r : kAllHostRoles)
        if (to_string(r) == s) return r;
    return std::nullopt;
}

struct AttackWindow {
    double start_hours = 0.0;  // relative to corpus start
    double end_hours = 0.0;
    AttackTag tag = AttackTag::reconnaissance;
    std::string target_host;
};

struct TestbedConfig {
    struct Host {
        std::string name;
        HostRole role = HostRole::web;
        double rate_multiplier = 1.0;
    };

    std::vector<Host> hosts;
    int duration_hours = 24;
    std::uint64_t seed = 0;
    std::vector<AttackWindow> attack_windows;
    double business_hour_weight = 1.0;
    double night_peak_weight = 1.0;
    // Weekend days carry more per-day mass than weekdays in the target
    // distribution (65.2/34.8 over a 5/2 split), hence a factor above 1.
    double weekend_scale = 1.33435;
    double base_events_per_hour = 60.0;
    double attack_rate_multiplier = 3.0;
    Timestamp start_time = make_timestamp(2024, 1, 8, 0, 0, 0);  // a Monday

    void validate() const {
        if (hosts.empty()) throw std::invalid_argument("config: no hosts");
        if (duration_hours < 0)
            throw std::invalid_argument("config: negative duration");
        std::set<std::string> names;
        for (const auto& h : hosts) {
            if (h.name.empty() || !names.insert(h.name).second)
                throw std::invalid_argument("config: host names must be unique");
        }
        for (const auto& w : attack_windows) {
            if (w.start_hours < 0.0 || w.end_hours > duration_hours ||
                w.start_hours >= w.end_hours)
                throw std::invalid_argument(
                    "config: attack window outside [0, duration]");
            if (!names.count(w.target_host))
                throw std::invalid_argument("config: attack window targets "
                                            "unknown host " + w.target_host);
        }
    }
};

inline void to_json(json& j, const AttackWindow& w) {
    j = json{{"start", w.start_hours},
             {"end", w.end_hours},
             {"tag", to_string(w.tag)},
             {"target_host", w.target_host}};
}

inline void from_json(const json& j, AttackWindow& w) {
    w.start_hours = j.at("start").get<double>();
    w.end_hours = j.at("end").get<double>();
    const auto tag = attack_tag_from(j.at("tag").get<std::string>());
    if (!tag) throw std::invalid_argument("attack window: bad tag");
    w.tag = *tag;
    w.target_host = j.at("target_host").get<std::string>();
}

inline void to_json(json& j, const TestbedConfig::Host& h) {
    j = json{{"name", h.name},
             {"role", to_string(h.role)},
             {"rate_multiplier", h.rate_multiplier}};
}

inline void from_json(const json& j, TestbedConfig::Host& h) {
    h.name = j.at("name").get<std::string>();
    const auto role = host_role_from(j.at("role").get<std::string>());
    if (!role) throw std::invalid_argument("host: bad role");
    h.role = *role;
    h.rate_multiplier = j.value("rate_multiplier", 1.0);
}

inline void to_json(json& j, const TestbedConfig& c) {
    j = json{{"hosts", c.hosts},
             {"duration_hours", c.duration_hours},
             {"seed", c.seed},
             {"attack_windows", c.attack_windows},
             {"business_hour_weight", c.business_hour_weight},
             {"night_peak_weight", c.night_peak_weight},
             {"weekend_scale", c.weekend_scale},
             {"base_events_per_hour", c.base_events_per_hour},
             {"attack_rate_multiplier", c.attack_rate_multiplier},
             {"start_time", format_rfc3339(c.start_time)}};
}

inline void from_json(const json& j, TestbedConfig& c) {
    c.hosts = j.at("hosts").get<std::vector<TestbedConfig::Host>>();
    c.duration_hours = j.at("duration_hours").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.attack_windows =
        j.value("attack_windows", std::vector<AttackWindow>{});
    c.business_hour_weight = j.value("business_hour_weight", 1.0);
    c.night_peak_weight = j.value("night_peak_weight", 1.0);
    c.weekend_scale = j.value("weekend_scale", 1.33435);
    c.base_events_per_hour = j.value("base_events_per_hour", 60.0);
    c.attack_rate_multiplier = j.value("attack_rate_multiplier", 3.0);
    if (j.contains("start_time")) {
        const auto ts = parse_rfc3339(j.at("start_time").get<std::string>());
        if (!ts) throw std::invalid_argument("config: bad start_time");
        c.start_time = *ts;
    }
}

// Relative event rate for an hour of day. Business plateau over 08:00-18:00,
// a secondary bump at 22:00 for scheduled tasks, and a weekend factor chosen
// so weekday session mass integrates to ~65% over a week.
inline double rate_profile(int hour, bool is_weekend, const TestbedConfig& cfg) {
    if (hour < 0 || hour > 23)
        throw std::invalid_argument("rate_profile: hour out of range");
    static constexpr double base[24] = {
        0.12, 0.10, 0.08, 0.08, 0.10, 0.15, 0.25, 0.55,  // 00-07
        1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00,  // 08-15
        1.00, 1.00, 0.80, 0.45, 0.30, 0.32, 0.60, 0.22,  // 16-23
    };
    double r = base[hour];
    if (hour >= 8 && hour <= 17) r *= cfg.business_hour_weight;
    if (hour == 22) r *= cfg.night_peak_weight;
    if (is_weekend) r *= cfg.weekend_scale;
    return r;
}

struct GeneratedFile {
    std::string host;
    SourceType source = SourceType::syslog;
    std::string rel_path;  // "<host>/<source>.log"
    std::vector<std::string> lines;
};

struct LabelRecord {
    std::string file;
    std::int64_t line = 0;  // 1-based
    std::set<AttackTag> tags;
};

inline void to_json(json& j, const LabelRecord& r) {
    j = json{{"file", r.file}, {"line", r.line}, {"tags", json::array()}};
    for (AttackTag t : r.tags) j["tags"].push_back(to_string(t));
}

inline void from_json(const json& j, LabelRecord& r) {
    r.file = j.at("file").get<std::string>();
    r.line = j.at("line").get<std::int64_t>();
    r.tags.clear();
    for (const auto& t : j.at("tags")) {
        const auto tag = attack_tag_from(t.get<std::string>());
        if (!tag) throw std::invalid_argument("label: bad tag");
        r.tags.insert(*tag);
    }
}

struct Corpus {
    std::vector<GeneratedFile> files;
    std::vector<LabelRecord> labels;

    std::int64_t total_lines() const {
        std::int64_t n = 0;
        for (const auto& f : files) n += static_cast<std::int64_t>(f.lines.size());
        return n;
    }
};

namespace detail {

inline const char* month_abbrev(unsigned m) {
    static const char* names[12] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                    "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    return names[m - 1];
}

struct CivilTime {
    int year;
    unsigned month, day;
    int hour, minute, second;
    std::int64_t micros;
};

inline CivilTime civil_of(Timestamp ts) {
    using namespace std::chrono;
    const auto d = floor<days>(sys_time<microseconds>{microseconds{ts}});
    const year_month_day ymd{d};
    std::int64_t in_day = ts - duration_cast<microseconds>(d.time_since_epoch()).count();
    CivilTime c;
    c.year = static_cast<int>(ymd.year());
    c.month = static_cast<unsigned>(ymd.month());
    c.day = static_cast<unsigned>(ymd.day());
    c.micros = in_day % kMicrosPerSecond;
    std::int64_t secs = in_day / kMicrosPerSecond;
    c.hour = static_cast<int>(secs / 3600);
    c.minute = static_cast<int>((secs / 60) % 60);
    c.second = static_cast<int>(secs % 60);
    return c;
}

inline std::string syslog_ts(Timestamp ts) {
    const CivilTime c = civil_of(ts);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s %2u %02d:%02d:%02d",
                  month_abbrev(c.month), c.day, c.hour, c.minute, c.second);
    return buf;
}

inline std::string apache_ts(Timestamp ts) {
    const CivilTime c = civil_of(ts);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%02u/%s/%04d:%02d:%02d:%02d +0000", c.day,
                  month_abbrev(c.month), c.year, c.hour, c.minute, c.second);
    return buf;
}

inline std::string dns_ts(Timestamp ts) {
    const CivilTime c = civil_of(ts);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%02u-%s-%04d %02d:%02d:%02d.%03d", c.day,
                  month_abbrev(c.month), c.year, c.hour, c.minute, c.second,
                  static_cast<int>(c.micros / 1000));
    return buf;
}

inline std::string suricata_ts(Timestamp ts) {
    const CivilTime c = civil_of(ts);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%02u/%02u/%04d-%02d:%02d:%02d.%06d",
                  c.month, c.day, c.year, c.hour, c.minute, c.second,
                  static_cast<int>(c.micros));
    return buf;
}

struct EventDraft {
    Timestamp ts;
    bool attack = false;
    std::string line;  // rendered lazily after the merge
};

struct NamePools {
    std::vector<std::string> users = {"alice",      "bob",     "carol",
                                      "dave",       "erin",    "frank",
                                      "svc-backup", "svc-monitor"};
    std::vector<std::string> qnames = {"mail.corp.lan",      "files.corp.lan",
                                       "www.corp.lan",       "intranet.corp.lan",
                                       "updates.vendor.com", "time.pool.org"};
    std::vector<std::string> paths = {"/index.html",    "/assets/app.js",
                                      "/api/v1/status", "/login",
                                      "/share/docs",    "/favicon.ico"};
    std::vector<std::string> agents = {"Mozilla/5.0", "curl/8.0",
                                       "health-check/1.2"};
};

inline std::string pick(Rng& rng, const std::vector<std::string>& pool) {
    return pool[uniform_below(rng, pool.size())];
}

inline std::string internal_ip(Rng& rng) {
    return "10.0." + std::to_string(uniform_below(rng, 8)) + "." +
           std::to_string(1 + uniform_below(rng, 250));
}

inline std::string external_ip(Rng& rng) {
    return "203.0.113." + std::to_string(1 + uniform_below(rng, 250));
}

inline int pid(Rng& rng) { return static_cast<int>(100 + uniform_below(rng, 30000)); }

inline std::string normal_line(Rng& rng, SourceType src, Timestamp ts,
                               const std::string& host, const NamePools& pools) {
    char buf[512];
    switch (src) {
        case SourceType::syslog: {
            const int variant = static_cast<int>(uniform_below(rng, 4));
            if (variant == 0)
                std::snprintf(buf, sizeof(buf),
                              "%s %s CRON[%d]: (root) CMD (run-parts /etc/cron.hourly)",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng));
            else if (variant == 1)
                std::snprintf(buf, sizeof(buf),
                              "%s %s systemd[1]: Started Daily apt download activities.",
                              syslog_ts(ts).c_str(), host.c_str());
            else if (variant == 2)
                std::snprintf(buf, sizeof(buf),
                              "%s %s postfix/qmgr[%d]: queue run complete",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng));
            else
                std::snprintf(buf, sizeof(buf),
                              "%s %s collectd[%d]: metrics flushed to %s",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng),
                              internal_ip(rng).c_str());
            return buf;
        }
        case SourceType::auth: {
            const auto user = pick(rng, pools.users);
            const int variant = static_cast<int>(uniform_below(rng, 3));
            if (variant == 0)
                std::snprintf(buf, sizeof(buf),
                              "%s %s sshd[%d]: Accepted password for %s from %s "
                              "port %d ssh2",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng),
                              user.c_str(), internal_ip(rng).c_str(),
                              static_cast<int>(20000 + uniform_below(rng, 40000)));
            else if (variant == 1)
                std::snprintf(buf, sizeof(buf),
                              "%s %s sshd[%d]: Disconnected from user %s %s "
                              "port %d",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng),
                              user.c_str(), internal_ip(rng).c_str(),
                              static_cast<int>(20000 + uniform_below(rng, 40000)));
            else
                std::snprintf(buf, sizeof(buf),
                              "%s %s systemd-logind[%d]: New session %d of "
                              "user %s.",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng),
                              static_cast<int>(uniform_below(rng, 900)),
                              user.c_str());
            return buf;
        }
        case SourceType::apache_access: {
            const bool authed = uniform01(rng) < 0.2;
            std::snprintf(buf, sizeof(buf),
                          "%s - %s [%s] \"GET %s HTTP/1.1\" %d %d \"-\" \"%s\"",
                          internal_ip(rng).c_str(),
                          authed ? pick(rng, pools.users).c_str() : "-",
                          apache_ts(ts).c_str(), pick(rng, pools.paths).c_str(),
                          uniform01(rng) < 0.95 ? 200 : 404,
                          static_cast<int>(200 + uniform_below(rng, 40000)),
                          pick(rng, pools.agents).c_str());
            return buf;
        }
        case SourceType::dns: {
            const auto qname = pick(rng, pools.qnames);
            std::snprintf(buf, sizeof(buf),
                          "%s client %s#%d (%s): query: %s IN %s",
                          dns_ts(ts).c_str(), internal_ip(rng).c_str(),
                          static_cast<int>(1024 + uniform_below(rng, 60000)),
                          qname.c_str(), qname.c_str(),
                          uniform01(rng) < 0.8 ? "A" : "AAAA");
            return buf;
        }
        case SourceType::audit: {
            const auto user = pick(rng, pools.users);
            std::snprintf(buf, sizeof(buf),
                          "type=USER_LOGIN msg=audit(%lld.%03d:%d): pid=%d uid=0 "
                          "auid=1000 ses=%d msg='op=login acct=\"%s\" "
                          "exe=\"/usr/sbin/sshd\" hostname=%s addr=%s "
                          "terminal=ssh res=success'",
                          static_cast<long long>(ts / kMicrosPerSecond),
                          static_cast<int>((ts % kMicrosPerSecond) / 1000),
                          static_cast<int>(1000 + uniform_below(rng, 9000)),
                          pid(rng), static_cast<int>(uniform_below(rng, 900)),
                          user.c_str(), internal_ip(rng).c_str(),
                          internal_ip(rng).c_str());
            return buf;
        }
        case SourceType::suricata: {
            std::snprintf(buf, sizeof(buf),
                          "%s  [**] [1:%d:1] SURICATA STREAM excessive "
                          "retransmissions [**] [Classification: Generic "
                          "Protocol Command Decode] [Priority: 3] {TCP} "
                          "%s:%d -> %s:443",
                          suricata_ts(ts).c_str(),
                          static_cast<int>(2200000 + uniform_below(rng, 100)),
                          internal_ip(rng).c_str(),
                          static_cast<int>(20000 + uniform_below(rng, 40000)),
                          internal_ip(rng).c_str());
            return buf;
        }
        case SourceType::raw: break;
    }
    throw std::logic_error("normal_line: unsupported source");
}

inline std::string attack_line(Rng& rng, SourceType src, AttackTag tag,
                               Timestamp ts, const std::string& host,
                               const NamePools& pools) {
    char buf[512];
    const std::string ext = external_ip(rng);
    switch (tag) {
        case AttackTag::reconnaissance:
            if (src == SourceType::auth) {
                std::snprintf(buf, sizeof(buf),
                              "%s %s sshd[%d]: Failed password for invalid user "
                              "%s from %s port %d ssh2",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng),
                              uniform01(rng) < 0.5 ? "admin" : "oracle",
                              ext.c_str(),
                              static_cast<int>(40000 + uniform_below(rng, 20000)));
                return buf;
            }
            if (src == SourceType::dns) {
                std::snprintf(buf, sizeof(buf),
                              "%s client %s#%d (probe%llu.corp.lan): query: "
                              "probe%llu.corp.lan IN A",
                              dns_ts(ts).c_str(), ext.c_str(),
                              static_cast<int>(1024 + uniform_below(rng, 60000)),
                              static_cast<unsigned long long>(uniform_below(rng, 100000)),
                              static_cast<unsigned long long>(uniform_below(rng, 100000)));
                return buf;
            }
            if (src == SourceType::suricata) {
                std::snprintf(buf, sizeof(buf),
                              "%s  [**] [1:2019401:3] ET SCAN Nmap Scripting "
                              "Engine User-Agent Detected [**] [Classification: "
                              "Attempted Recon] [Priority: 2] {TCP} %s:%d -> "
                              "%s:80",
                              suricata_ts(ts).c_str(), ext.c_str(),
                              static_cast<int>(40000 + uniform_below(rng, 20000)),
                              internal_ip(rng).c_str());
                return buf;
            }
            break;
        case AttackTag::compromise:
            if (src == SourceType::auth) {
                std::snprintf(buf, sizeof(buf),
                              "%s %s sshd[%d]: Accepted password for root from "
                              "%s port %d ssh2",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng),
                              ext.c_str(),
                              static_cast<int>(40000 + uniform_below(rng, 20000)));
                return buf;
            }
            if (src == SourceType::apache_access) {
                std::snprintf(buf, sizeof(buf),
                              "%s - - [%s] \"POST /wp-content/uploads/shell.php "
                              "HTTP/1.1\" 200 %d \"-\" \"python-requests/2.31\"",
                              ext.c_str(), apache_ts(ts).c_str(),
                              static_cast<int>(100 + uniform_below(rng, 4000)));
                return buf;
            }
            if (src == SourceType::audit) {
                std::snprintf(buf, sizeof(buf),
                              "type=USER_LOGIN msg=audit(%lld.%03d:%d): pid=%d "
                              "uid=0 auid=0 ses=%d msg='op=login acct=\"root\" "
                              "exe=\"/usr/sbin/sshd\" hostname=%s addr=%s "
                              "terminal=ssh res=success'",
                              static_cast<long long>(ts / kMicrosPerSecond),
                              static_cast<int>((ts % kMicrosPerSecond) / 1000),
                              static_cast<int>(1000 + uniform_below(rng, 9000)),
                              pid(rng), static_cast<int>(uniform_below(rng, 900)),
                              ext.c_str(), ext.c_str());
                return buf;
            }
            if (src == SourceType::suricata) {
                std::snprintf(buf, sizeof(buf),
                              "%s  [**] [1:2016683:5] ET WEB_SERVER WebShell "
                              "Generic POST [**] [Classification: A Network "
                              "Trojan was detected] [Priority: 1] {TCP} %s:%d "
                              "-> %s:80",
                              suricata_ts(ts).c_str(), ext.c_str(),
                              static_cast<int>(40000 + uniform_below(rng, 20000)),
                              internal_ip(rng).c_str());
                return buf;
            }
            break;
        case AttackTag::lateral_movement:
            if (src == SourceType::auth) {
                std::snprintf(buf, sizeof(buf),
                              "%s %s sshd[%d]: Accepted publickey for svc-admin "
                              "from %s port %d ssh2",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng),
                              internal_ip(rng).c_str(),
                              static_cast<int>(40000 + uniform_below(rng, 20000)));
                return buf;
            }
            if (src == SourceType::audit) {
                std::snprintf(buf, sizeof(buf),
                              "type=USER_CMD msg=audit(%lld.%03d:%d): pid=%d "
                              "uid=1000 auid=1000 ses=%d msg='op=PAM:setcred "
                              "acct=\"svc-admin\" exe=\"/usr/bin/sudo\" "
                              "hostname=%s addr=%s terminal=pts/1 res=success'",
                              static_cast<long long>(ts / kMicrosPerSecond),
                              static_cast<int>((ts % kMicrosPerSecond) / 1000),
                              static_cast<int>(1000 + uniform_below(rng, 9000)),
                              pid(rng), static_cast<int>(uniform_below(rng, 900)),
                              internal_ip(rng).c_str(), internal_ip(rng).c_str());
                return buf;
            }
            if (src == SourceType::syslog) {
                std::snprintf(buf, sizeof(buf),
                              "%s %s smbd[%d]: connection from %s as user "
                              "svc-admin",
                              syslog_ts(ts).c_str(), host.c_str(), pid(rng),
                              internal_ip(rng).c_str());
                return buf;
            }
            break;
        case AttackTag::data_exfiltration:
            if (src == SourceType::apache_access) {
                std::snprintf(buf, sizeof(buf),
                              "%s - - [%s] \"GET /share/backup-full.tar.gz "
                              "HTTP/1.1\" 200 %lld \"-\" \"Wget/1.21\"",
                              internal_ip(rng).c_str(), apache_ts(ts).c_str(),
                              static_cast<long long>(50'000'000 +
                                                     uniform_below(rng, 900'000'000)));
                return buf;
            }
            if (src == SourceType::dns) {
                std::snprintf(buf, sizeof(buf),
                              "%s client %s#%d (x%llx.exfil.example.net): query: "
                              "x%llx.exfil.example.net IN TXT",
                              dns_ts(ts).c_str(), internal_ip(rng).c_str(),
                              static_cast<int>(1024 + uniform_below(rng, 60000)),
                              static_cast<unsigned long long>(rng()),
                              static_cast<unsigned long long>(rng()));
                return buf;
            }
            if (src == SourceType::suricata) {
                std::snprintf(buf, sizeof(buf),
                              "%s  [**] [1:2018959:4] ET POLICY Outbound Large "
                              "Transfer [**] [Classification: Potential "
                              "Corporate Privacy Violation] [Priority: 1] {TCP} "
                              "%s:%d -> %s:443",
                              suricata_ts(ts).c_str(), internal_ip(rng).c_str(),
                              static_cast<int>(40000 + uniform_below(rng, 20000)),
                              ext.c_str());
                return buf;
            }
            break;
    }
    // Tag has no template for this source: emit a syslog-format note the
    // syslog grammar still accepts (used only when a host lacks richer
    // sources).
    std::snprintf(buf, sizeof(buf), "%s %s kernel: audit event for %s window",
                  syslog_ts(ts).c_str(), host.c_str(),
                  std::string(to_string(tag)).c_str());
    return buf;
}

inline const std::vector<SourceType>& role_sources(HostRole role) {
    static const std::map<HostRole, std::vector<SourceType>> table = {
        {HostRole::monitoring, {SourceType::syslog, SourceType::suricata}},
        {HostRole::mail, {SourceType::syslog, SourceType::auth, SourceType::dns}},
        {HostRole::cloud_share,
         {SourceType::syslog, SourceType::auth, SourceType::apache_access}},
        {HostRole::web,
         {SourceType::syslog, SourceType::apache_access, SourceType::auth}},
        {HostRole::vpn, {SourceType::syslog, SourceType::auth}},
        {HostRole::firewall,
         {SourceType::syslog, SourceType::suricata, SourceType::dns}},
        {HostRole::intranet,
         {SourceType::syslog, SourceType::apache_access, SourceType::audit}},
        {HostRole::dns, {SourceType::syslog, SourceType::dns, SourceType::audit}},
    };
    return table.at(role);
}

inline const std::vector<SourceType>& tag_sources(AttackTag tag) {
    static const std::map<AttackTag, std::vector<SourceType>> table = {
        {AttackTag::reconnaissance,
         {SourceType::auth, SourceType::dns, SourceType::suricata}},
        {AttackTag::compromise,
         {SourceType::auth, SourceType::apache_access, SourceType::audit,
          SourceType::suricata}},
        {AttackTag::lateral_movement,
         {SourceType::auth, SourceType::audit, SourceType::syslog}},
        {AttackTag::data_exfiltration,
         {SourceType::apache_access, SourceType::dns, SourceType::suricata}},
    };
    return table.at(tag);
}

inline double source_weight(SourceType s) {
    switch (s) {
        case SourceType::syslog: return 1.0;
        case SourceType::auth: return 0.6;
        case SourceType::apache_access: return 1.5;
        case SourceType::dns: return 2.0;
        case SourceType::audit: return 0.5;
        case SourceType::suricata: return 0.3;
        case SourceType::raw: return 0.0;
    }
    return 0.0;
}

}  // namespace detail

// Generates the whole corpus in memory. Per-(host, source) streams are
// seeded independently, so host generation could be parallelized; the merge
// and label assignment are deterministic either way.
inline Corpus generate(const TestbedConfig& cfg) {
    cfg.validate();
    detail::NamePools pools;
    Corpus corpus;

    for (const auto& host : cfg.hosts) {
        for (SourceType src : detail::role_sources(host.role)) {
            Rng rng(mix_seed(mix_seed(cfg.seed, host.name),
                             std::string(to_string(src))));
            std::vector<detail::EventDraft> events;

            for (int h = 0; h < cfg.duration_hours; ++h) {
                const Timestamp hour_start =
                    cfg.start_time + static_cast<Timestamp>(h) * 3600 * kMicrosPerSecond;
                const double rate =
                    cfg.base_events_per_hour * detail::source_weight(src) *
                    host.rate_multiplier *
                    rate_profile(utc_hour(hour_start), utc_is_weekend(hour_start),
                                 cfg);
                const std::int64_t n = poisson(rng, rate);
                for (std::int64_t i = 0; i < n; ++i) {
                    detail::EventDraft ev;
                    ev.ts = hour_start + static_cast<Timestamp>(uniform_below(
                                rng, 3600ULL * kMicrosPerSecond));
                    events.push_back(std::move(ev));
                }
            }

            // Injected attack steps, only on the targeted host and only for
            // sources that fit the tag (syslog fallback otherwise).
            for (const auto& w : cfg.attack_windows) {
                if (w.target_host != host.name) continue;
                const auto& wanted = detail::tag_sources(w.tag);
                const auto& have = detail::role_sources(host.role);
                const bool src_fits =
                    std::find(wanted.begin(), wanted.end(), src) != wanted.end();
                bool any_fits = false;
                for (SourceType s : have)
                    any_fits = any_fits || std::find(wanted.begin(), wanted.end(),
                                                     s) != wanted.end();
                const bool use_syslog_fallback =
                    !any_fits && src == SourceType::syslog;
                if (!src_fits && !use_syslog_fallback) continue;

                const double window_hours = w.end_hours - w.start_hours;
                const double lambda = cfg.base_events_per_hour *
                                      cfg.attack_rate_multiplier * window_hours;
                const std::int64_t n = std::max<std::int64_t>(
                    1, poisson(rng, lambda));
                const Timestamp wstart =
                    cfg.start_time + static_cast<Timestamp>(
                                         w.start_hours * 3600.0 * kMicrosPerSecond);
                const auto span_us = static_cast<std::uint64_t>(
                    window_hours * 3600.0 * kMicrosPerSecond);
                for (std::int64_t i = 0; i < n; ++i) {
                    detail::EventDraft ev;
                    ev.ts = wstart + static_cast<Timestamp>(
                                         uniform_below(rng, span_us));
                    ev.attack = true;
                    ev.line = detail::attack_line(rng, src, w.tag, ev.ts,
                                                  host.name, pools);
                    events.push_back(std::move(ev));
                }
            }

            std::stable_sort(events.begin(), events.end(),
                             [](const auto& a, const auto& b) { return a.ts < b.ts; });
            for (auto& ev : events)
                if (!ev.attack)
                    ev.line = detail::normal_line(rng, src, ev.ts, host.name, pools);

            GeneratedFile file;
            file.host = host.name;
            file.source = src;
            file.rel_path = host.name + "/" + std::string(to_string(src)) + ".log";
            file.lines.reserve(events.size());

            for (std::size_t i = 0; i < events.size(); ++i) {
                file.lines.push_back(std::move(events[i].line));
                // Ground truth covers every line inside a window on the
                // target host, normal background included.
                std::set<AttackTag> tags;
                for (const auto& w : cfg.attack_windows) {
                    if (w.target_host != host.name) continue;
                    const Timestamp ws =
                        cfg.start_time + static_cast<Timestamp>(
                                             w.start_hours * 3600.0 * kMicrosPerSecond);
                    const Timestamp we =
                        cfg.start_time + static_cast<Timestamp>(
                                             w.end_hours * 3600.0 * kMicrosPerSecond);
                    if (events[i].ts >= ws && events[i].ts < we) tags.insert(w.tag);
                }
                if (!tags.empty())
                    corpus.labels.push_back(LabelRecord{
                        file.rel_path, static_cast<std::int64_t>(i + 1),
                        std::move(tags)});
            }
            corpus.files.push_back(std::move(file));
        }
    }
    return corpus;
}

// Ground-truth lookup for tagging parsed entries: (file, 1-based line) -> tags.
using LabelIndex =
    std::map<std::pair<std::string, std::int64_t>, std::set<AttackTag>>;

inline LabelIndex index_labels(const std::vector<LabelRecord>& labels) {
    LabelIndex idx;
    for (const auto& r : labels) idx[{r.file, r.line}] = r.tags;
    return idx;
}

// Entries must be in file order (entry i came from line i+1), which
// parse_stream guarantees.
inline void apply_labels(std::vector<LogEntry>& entries,
                         const std::string& rel_path, const LabelIndex& idx) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto it = idx.find({rel_path, static_cast<std::int64_t>(i + 1)});
        if (it != idx.end()) entries[i].attack_tags = it->second;
    }
}

inline void write_corpus(const Corpus& corpus, const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    for (const auto& f : corpus.files) {
        const fs::path p = out / f.rel_path;
        fs::create_directories(p.parent_path());
        std::ofstream os(p);
        if (!os) throw std::runtime_error("cannot write " + p.string());
        for (const auto& line : f.lines) os << line << '\n';
    }
    write_jsonl(out / "labels.jsonl", corpus.labels);
}

}  // namespace logatlas

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <logatlas/parsers.hpp>

using namespace logatlas;

namespace {
const ParseContext kCtx{"testhost", 2024, make_timestamp(2024, 1, 1, 0, 0, 0)};
}

TEST_CASE("syslog grammar extracts host, process, user") {
    const auto e = parse_line(
        "Jan 12 08:30:01 mail01 sshd[412]: Accepted password for alice",
        SourceType::syslog, kCtx);
    CHECK(e.parse_status == ParseStatus::parsed);
    CHECK(e.host == "mail01");
    CHECK(e.process == "sshd");
    CHECK(e.user == "alice");
    CHECK(e.timestamp == make_timestamp(2024, 1, 12, 8, 30, 1));
    CHECK(e.message == "Accepted password for alice");
}

TEST_CASE("syslog variants") {
    SUBCASE("no pid") {
        const auto e = parse_line("Feb  3 00:05:59 db02 cron: session opened for user root",
                                  SourceType::syslog, kCtx);
        CHECK(e.parse_status == ParseStatus::parsed);
        CHECK(e.process == "cron");
        CHECK(e.user == "root");
        CHECK(e.timestamp == make_timestamp(2024, 2, 3, 0, 5, 59));
    }
    SUBCASE("no tag") {
        const auto e = parse_line("Mar 10 12:00:00 fw01 link state changed",
                                  SourceType::syslog, kCtx);
        CHECK(e.parse_status == ParseStatus::parsed);
        CHECK(!e.process.has_value());
        CHECK(e.message == "link state changed");
    }
    SUBCASE("failed auth with invalid user") {
        const auto e = parse_line(
            "Jan 12 08:30:02 vpn01 sshd[99]: Failed password for invalid user "
            "admin from 203.0.113.9 port 42411 ssh2",
            SourceType::auth, kCtx);
        CHECK(e.source_type == SourceType::auth);
        CHECK(e.user == "admin");
    }
}

TEST_CASE("empty string falls back with verbatim message") {
    const auto e = parse_line("", SourceType::syslog, kCtx, 777);
    CHECK(e.parse_status == ParseStatus::fallback_raw);
    CHECK(e.message == "");
    CHECK(e.timestamp == 777);
    CHECK(e.host == "testhost");
}

TEST_CASE("apache combined log parses") {
    const auto e = parse_line(
        R"(10.0.0.8 - frank [12/Jan/2024:08:30:01 +0000] "GET /index.html HTTP/1.1" 200 5120 "-" "Mozilla/5.0")",
        SourceType::apache_access, kCtx);
    CHECK(e.parse_status == ParseStatus::parsed);
    CHECK(e.source_type == SourceType::apache_access);
    CHECK(e.host == "testhost");
    CHECK(e.user == "frank");
    CHECK(e.timestamp == make_timestamp(2024, 1, 12, 8, 30, 1));
    CHECK(e.message ==
          R"(10.0.0.8 "GET /index.html HTTP/1.1" 200 5120 "-" "Mozilla/5.0")");
}

TEST_CASE("apache timezone offsets normalize to UTC") {
    const auto e = parse_line(
        R"(10.0.0.8 - - [12/Jan/2024:10:30:01 +0200] "GET / HTTP/1.1" 200 12 "-" "curl/8.0")",
        SourceType::apache_access, kCtx);
    CHECK(e.parse_status == ParseStatus::parsed);
    CHECK(e.timestamp == make_timestamp(2024, 1, 12, 8, 30, 1));
    CHECK(!e.user.has_value());
}

TEST_CASE("dns, audit, suricata grammars") {
    SUBCASE("dns") {
        const auto e = parse_line(
            "12-Jan-2024 08:30:01.123 client 10.0.0.21#53124 (files.corp.lan): "
            "query: files.corp.lan IN A",
            SourceType::dns, kCtx);
        CHECK(e.parse_status == ParseStatus::parsed);
        CHECK(e.timestamp == make_timestamp(2024, 1, 12, 8, 30, 1, 123000));
        CHECK(e.message == "client 10.0.0.21#53124 query files.corp.lan IN A");
    }
    SUBCASE("audit") {
        const auto e = parse_line(
            "type=USER_LOGIN msg=audit(1705048201.123:4567): pid=412 uid=0 "
            "msg='op=login acct=\"alice\" exe=\"/usr/sbin/sshd\" "
            "addr=10.0.0.8 res=success'",
            SourceType::audit, kCtx);
        CHECK(e.parse_status == ParseStatus::parsed);
        CHECK(e.timestamp == 1705048201LL * kMicrosPerSecond + 123000);
        CHECK(e.user == "alice");
        CHECK(e.process == "sshd");
    }
    SUBCASE("suricata") {
        const auto e = parse_line(
            "01/12/2024-08:30:01.123456  [**] [1:2019401:3] ET SCAN Nmap probe "
            "[**] [Classification: Attempted Recon] [Priority: 2] {TCP} "
            "203.0.113.9:44231 -> 10.0.0.5:80",
            SourceType::suricata, kCtx);
        CHECK(e.parse_status == ParseStatus::parsed);
        CHECK(e.timestamp == make_timestamp(2024, 1, 12, 8, 30, 1, 123456));
        CHECK(e.message.find("ET SCAN Nmap probe") != std::string::npos);
    }
}

TEST_CASE("totality: garbage never drops a line") {
    const std::vector<std::string> lines = {
        "complete nonsense",
        "Jan 12 08:30:01 mail01 sshd[412]: Accepted password for alice",
        "{\"not\": \"syslog\"}",
        "",
        "Jan 12 08:31:00 mail01 sshd[412]: Disconnected from 10.0.0.8",
    };
    const auto r = parse_lines(lines, SourceType::syslog, kCtx);
    CHECK(r.entries.size() == lines.size());
    CHECK(r.stats.lines_read == 5);
    CHECK(r.stats.total_parsed() == 2);
    CHECK(r.stats.total_fallback() == 3);
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (r.entries[i].parse_status == ParseStatus::fallback_raw)
            CHECK(r.entries[i].message == lines[i]);
}

TEST_CASE("parse_stream counts by construction") {
    std::vector<std::string> lines;
    for (int i = 0; i < 10; ++i)
        lines.push_back("Jan 12 08:3" + std::to_string(i) +
                        ":01 web01 nginx[7]: request served");
    lines.insert(lines.begin() + 3, "??");
    lines.insert(lines.begin() + 7, "!!");
    lines.push_back("trailing garbage");
    const auto r = parse_lines(lines, SourceType::syslog, kCtx);
    CHECK(r.entries.size() == 13);
    CHECK(r.stats.per_source.at(SourceType::syslog).parsed == 10);
    CHECK(r.stats.per_source.at(SourceType::syslog).fallback_raw == 3);
    CHECK(r.stats.total_parsed() + r.stats.total_fallback() == r.stats.lines_read);
}

TEST_CASE("zero lines produce empty output and zero stats") {
    const auto r = parse_lines({}, SourceType::auth, kCtx);
    CHECK(r.entries.empty());
    CHECK(r.stats.lines_read == 0);
    CHECK(r.stats.total_parsed() == 0);
    CHECK(r.stats.total_fallback() == 0);
}

TEST_CASE("fallback timestamps interpolate between parsed neighbors") {
    const std::vector<std::string> lines = {
        "Jan 12 08:00:00 h syslogd: mark",
        "junk a",
        "junk b",
        "junk c",
        "Jan 12 08:00:40 h syslogd: mark",
    };
    const auto r = parse_lines(lines, SourceType::syslog, kCtx);
    const Timestamp t0 = r.entries[0].timestamp;
    CHECK(r.entries[1].timestamp == t0 + 10 * kMicrosPerSecond);
    CHECK(r.entries[2].timestamp == t0 + 20 * kMicrosPerSecond);
    CHECK(r.entries[3].timestamp == t0 + 30 * kMicrosPerSecond);

    SUBCASE("head run takes first parsed timestamp") {
        const auto r2 = parse_lines({"x", "y", lines[0]}, SourceType::syslog, kCtx);
        CHECK(r2.entries[0].timestamp == t0);
        CHECK(r2.entries[1].timestamp == t0);
    }
    SUBCASE("tail run takes last parsed timestamp") {
        const auto r2 = parse_lines({lines[0], "x"}, SourceType::syslog, kCtx);
        CHECK(r2.entries[1].timestamp == t0);
    }
    SUBCASE("all-garbage file takes file start") {
        const auto r2 = parse_lines({"x", "y"}, SourceType::syslog, kCtx);
        CHECK(r2.entries[0].timestamp == kCtx.file_start);
        CHECK(r2.entries[1].timestamp == kCtx.file_start);
    }
}

TEST_CASE("filename conventions pick grammars") {
    CHECK(hint_from_filename("mail01/auth.log") == SourceType::auth);
    CHECK(hint_from_filename("x.auth.log.gz") == SourceType::auth);
    CHECK(hint_from_filename("web/apache_access.log") == SourceType::apache_access);
    CHECK(hint_from_filename("access.log") == SourceType::apache_access);
    CHECK(hint_from_filename("ns1/dns.log") == SourceType::dns);
    CHECK(hint_from_filename("audit.log") == SourceType::audit);
    CHECK(hint_from_filename("suricata_fast.log") == SourceType::suricata);
    CHECK(hint_from_filename("syslog.log") == SourceType::syslog);
    CHECK(hint_from_filename("whatever.txt") == SourceType::raw);
}

TEST_CASE("every grammar is registered") {
    CHECK(grammars().size() == 6);
    for (const auto& g : grammars()) {
        CHECK(!g.pattern.empty());
        CHECK(!g.timestamp_format.empty());
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <logatlas/core.hpp>
#include <logatlas/rng.hpp>

using namespace logatlas;

namespace {

LogEntry entry_at(Timestamp ts, std::string host = "web01",
                  SourceType st = SourceType::syslog) {
    LogEntry e;
    e.timestamp = ts;
    e.host = std::move(host);
    e.source_type = st;
    e.message = "cron job finished";
    return e;
}

// Independent oracle: label is a brute-force OR over tag-nonemptiness.
Label label_oracle(const std::vector<LogEntry>& entries) {
    bool any = false;
    for (const auto& e : entries) any = any || !e.attack_tags.empty();
    return any ? Label::anomalous : Label::normal;
}

LogEntry random_entry(Rng& rng, Timestamp ts) {
    LogEntry e = entry_at(ts);
    if (uniform01(rng) < 0.05) e.attack_tags.insert(AttackTag::reconnaissance);
    if (uniform01(rng) < 0.01) e.attack_tags.insert(AttackTag::compromise);
    return e;
}

}  // namespace

TEST_CASE("derive_label basic cases") {
    std::vector<LogEntry> all_clean(5, entry_at(1000));
    CHECK(derive_label(all_clean) == Label::normal);

    // One tagged entry out of 100 flips the whole session.
    std::vector<LogEntry> one_tagged(100, entry_at(1000));
    one_tagged[42].attack_tags.insert(AttackTag::reconnaissance);
    CHECK(derive_label(one_tagged) == Label::anomalous);

    std::vector<LogEntry> all_tagged(3, entry_at(1000));
    for (auto& e : all_tagged) e.attack_tags.insert(AttackTag::data_exfiltration);
    CHECK(derive_label(all_tagged) == Label::anomalous);

    CHECK_THROWS_AS(derive_label({}), std::invalid_argument);
}

TEST_CASE("derive_label matches brute-force oracle on random sessions") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 1 + uniform_below(rng, 10000);
        std::vector<LogEntry> entries;
        entries.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i)
            entries.push_back(random_entry(rng, static_cast<Timestamp>(i)));
        CHECK(derive_label(entries) == label_oracle(entries));
    }
}

TEST_CASE("derive_meta fields") {
    SUBCASE("single entry has zero duration") {
        const auto m = derive_meta({entry_at(make_timestamp(2024, 1, 10, 9, 0, 0))});
        CHECK(m.duration_seconds == 0.0);
        CHECK(m.hour == 9);
        CHECK(!m.is_weekend);
    }
    SUBCASE("270 second span") {
        const Timestamp t0 = make_timestamp(2024, 1, 10, 9, 0, 0);
        const auto m =
            derive_meta({entry_at(t0), entry_at(t0 + 270 * kMicrosPerSecond)});
        CHECK(m.duration_seconds == 270.0);
    }
    SUBCASE("Saturday 03:15 UTC") {
        const auto m =
            derive_meta({entry_at(make_timestamp(2024, 1, 13, 3, 15, 0))});
        CHECK(m.hour == 3);
        CHECK(m.is_weekend);
    }
    SUBCASE("unsorted input rejected") {
        CHECK_THROWS_AS(derive_meta({entry_at(2000), entry_at(1000)}),
                        std::invalid_argument);
    }
    SUBCASE("counts per source sum to entry count") {
        std::vector<LogEntry> entries = {
            entry_at(0, "a", SourceType::syslog),
            entry_at(1, "a", SourceType::auth),
            entry_at(2, "a", SourceType::auth),
        };
        entries[2].parse_status = ParseStatus::fallback_raw;
        const auto m = derive_meta(entries);
        CHECK(m.log_types.at(SourceType::syslog) == 1);
        CHECK(m.log_types.at(SourceType::auth) == 2);
        std::int64_t total = 0;
        for (const auto& [_, c] : m.parsing_stats) total += c.total();
        CHECK(total == 3);
        CHECK(m.parsing_stats.at(SourceType::auth).fallback_raw == 1);
    }
}

TEST_CASE("duration is non-negative and zero iff all timestamps equal") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = 1 + uniform_below(rng, 50);
        std::vector<LogEntry> entries;
        Timestamp t = 1000000;
        bool advanced = false;
        for (std::uint64_t i = 0; i < n; ++i) {
            entries.push_back(entry_at(t));
            if (uniform01(rng) < 0.5) {
                t += 1 + static_cast<Timestamp>(uniform_below(rng, 1000000));
                if (i + 1 < n) advanced = true;
            }
        }
        const auto m = derive_meta(entries);
        CHECK(m.duration_seconds >= 0.0);
        CHECK((m.duration_seconds == 0.0) == !advanced);
    }
}

TEST_CASE("tag alias resolution") {
    TagAliasMap aliases{{"nmap_scan", AttackTag::reconnaissance},
                        {"dnsteal", AttackTag::data_exfiltration}};
    CHECK(resolve_tag("reconnaissance", aliases) == AttackTag::reconnaissance);
    CHECK(resolve_tag("nmap_scan", aliases) == AttackTag::reconnaissance);
    CHECK(resolve_tag("dnsteal", aliases) == AttackTag::data_exfiltration);
    CHECK(!resolve_tag("unknown_thing", aliases));
}

TEST_CASE("LogEntry JSON round trip is bit exact") {
    Rng rng(99);
    for (int trial = 0; trial < 500; ++trial) {
        LogEntry e;
        e.timestamp = static_cast<Timestamp>(uniform_below(rng, 1'900'000'000ULL)) *
                          kMicrosPerSecond +
                      static_cast<Timestamp>(uniform_below(rng, kMicrosPerSecond));
        e.host = "host" + std::to_string(uniform_below(rng, 50));
        e.source_type = kAllSourceTypes[uniform_below(rng, kAllSourceTypes.size())];
        if (uniform01(rng) < 0.5) e.process = "proc" + std::to_string(trial);
        if (uniform01(rng) < 0.5) e.user = "user" + std::to_string(trial);
        e.message = "msg \"quoted\" and unicode Ω " + std::to_string(rng());
        for (AttackTag t : kAllAttackTags)
            if (uniform01(rng) < 0.2) e.attack_tags.insert(t);
        e.parse_status =
            uniform01(rng) < 0.8 ? ParseStatus::parsed : ParseStatus::fallback_raw;

        const std::string s1 = json(e).dump();
        const LogEntry back = json::parse(s1).get<LogEntry>();
        CHECK(back == e);
        CHECK(json(back).dump() == s1);
    }
}

TEST_CASE("Session JSON round trip is bit exact") {
    std::vector<LogEntry> entries = {entry_at(make_timestamp(2024, 3, 2, 14, 0, 0)),
                                     entry_at(make_timestamp(2024, 3, 2, 14, 1, 30))};
    entries[1].attack_tags.insert(AttackTag::lateral_movement);
    entries[1].user = "alice";
    Session s{entries, derive_meta(entries), derive_label(entries)};
    CHECK(s.label == Label::anomalous);

    const std::string s1 = json(s).dump();
    const Session back = json::parse(s1).get<Session>();
    CHECK(back == s);
    CHECK(json(back).dump() == s1);
}

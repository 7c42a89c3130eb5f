#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include <logatlas/dataset.hpp>

using namespace logatlas;

namespace {

Session make_session(Timestamp start, const std::string& host, bool tagged,
                     int n_entries = 3, int spacing_s = 10) {
    std::vector<LogEntry> entries;
    for (int i = 0; i < n_entries; ++i) {
        LogEntry e;
        e.timestamp = start + static_cast<Timestamp>(i) * spacing_s * kMicrosPerSecond;
        e.host = host;
        e.source_type = SourceType::syslog;
        e.message = "event " + std::to_string(i);
        entries.push_back(std::move(e));
    }
    if (tagged) entries.back().attack_tags.insert(AttackTag::reconnaissance);
    return Session{entries, derive_meta(entries), derive_label(entries)};
}

std::vector<Session> make_pool(int anomalous, int normal) {
    std::vector<Session> out;
    Timestamp t = make_timestamp(2024, 1, 8, 8, 0, 0);
    for (int i = 0; i < anomalous + normal; ++i) {
        out.push_back(make_session(t, "host" + std::to_string(i % 7), i < anomalous));
        t += 3600 * kMicrosPerSecond;
    }
    return out;
}

RuleTables rules() {
    const std::string dir = LOGATLAS_DATA_DIR;
    return load_rule_tables(dir + "/risk_grades.tsv", dir + "/remediation.tsv");
}

}  // namespace

TEST_CASE("pearson") {
    const std::vector<double> xs = {1, 2, 3, 4};
    CHECK(pearson(xs, xs) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> neg = {-1, -2, -3, -4};
    CHECK(pearson(xs, neg) == doctest::Approx(-1.0).epsilon(1e-12));
    const std::vector<double> ys = {2, 1, 4, 3};
    CHECK(pearson(xs, ys) == doctest::Approx(0.6).epsilon(1e-12));

    const std::vector<double> flat = {5, 5, 5, 5};
    CHECK_THROWS_AS(pearson(xs, flat), std::invalid_argument);
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}),
                    std::invalid_argument);
    CHECK_THROWS_AS(pearson(xs, std::vector<double>{1, 2}),
                    std::invalid_argument);
}

TEST_CASE("quantiles use linear interpolation") {
    const auto d = summarize({4, 1, 3, 2});
    CHECK(d.min == 1.0);
    CHECK(d.q1 == doctest::Approx(1.75));
    CHECK(d.median == doctest::Approx(2.5));
    CHECK(d.q3 == doctest::Approx(3.25));
    CHECK(d.max == 4.0);
    CHECK(d.mean == doctest::Approx(2.5));
}

TEST_CASE("chinchilla plan") {
    const auto paper = chinchilla_plan(29.9e6, 1.544e9);
    CHECK(paper.ratio > 51.5);
    CHECK(paper.ratio < 51.7);
    CHECK(chinchilla_plan(1e6, 1e6).ratio == doctest::Approx(1.0));
    CHECK(chinchilla_plan(1e6, 1.0).compute_optimal_tokens ==
          doctest::Approx(2e7));
    CHECK_THROWS_AS(chinchilla_plan(0, 10), std::invalid_argument);
    CHECK_THROWS_AS(chinchilla_plan(10, 0), std::invalid_argument);
}

TEST_CASE("foundation build") {
    const auto pool = make_pool(20, 980);
    const auto built = build_foundation(pool, 7);

    SUBCASE("exact 90/10 split") {
        CHECK(built.manifest.train_ids.size() == 900);
        CHECK(built.manifest.val_ids.size() == 100);
    }
    SUBCASE("prevalence untouched, sessions unmodified") {
        CHECK(built.sessions == pool);
        CHECK(built.manifest.achieved_prevalence == prevalence(pool));
        CHECK(built.manifest.achieved_prevalence.fraction() == 0.02);
    }
    SUBCASE("splits disjoint and exhaustive") {
        std::set<std::int64_t> seen(built.manifest.train_ids.begin(),
                                    built.manifest.train_ids.end());
        for (auto id : built.manifest.val_ids) CHECK(seen.insert(id).second);
        CHECK(seen.size() == pool.size());
    }
    SUBCASE("same seed, same split; different seed, different split") {
        const auto again = build_foundation(pool, 7);
        CHECK(again.manifest.train_ids == built.manifest.train_ids);
        CHECK(again.manifest.val_ids == built.manifest.val_ids);
        const auto other = build_foundation(pool, 8);
        CHECK(other.manifest.train_ids != built.manifest.train_ids);
    }
    SUBCASE("empty input rejected") {
        CHECK_THROWS_AS(build_foundation({}, 1), std::invalid_argument);
    }
}

TEST_CASE("rebalance reaches the target window by subsampling normals") {
    const auto pool = make_pool(100, 10000);
    const auto built = rebalance(pool, 0.35, 0.01, 3);

    const double frac = built.manifest.achieved_prevalence.fraction();
    CHECK(frac >= 0.34);
    CHECK(frac <= 0.36);
    CHECK(built.manifest.achieved_prevalence.anomalous == 100);
    // n = a(1-p)/p = 185.7 -> ~186 normals kept.
    const auto normals = built.manifest.achieved_prevalence.total - 100;
    CHECK(normals >= 184);
    CHECK(normals <= 188);

    SUBCASE("no duplicates and output is a subset of input") {
        std::set<std::string> input_keys;
        for (const auto& s : pool)
            input_keys.insert(json(s).dump());
        std::set<std::string> seen;
        for (const auto& s : built.sessions) {
            const auto key = json(s).dump();
            CHECK(input_keys.count(key));
            CHECK(seen.insert(key).second);
        }
    }
    SUBCASE("recount oracle") {
        std::int64_t anom = 0;
        for (const auto& s : built.sessions)
            anom += s.label == Label::anomalous ? 1 : 0;
        CHECK(anom == built.manifest.achieved_prevalence.anomalous);
        CHECK(static_cast<std::int64_t>(built.sessions.size()) ==
              built.manifest.achieved_prevalence.total);
    }
    SUBCASE("stratified split within one session of exact") {
        std::int64_t train_anom = 0;
        for (auto id : built.manifest.train_ids)
            train_anom +=
                built.sessions[static_cast<std::size_t>(id)].label ==
                        Label::anomalous
                    ? 1
                    : 0;
        CHECK(train_anom == 90);  // floor(0.9 * 100)
        CHECK(built.manifest.train_ids.size() + built.manifest.val_ids.size() ==
              built.sessions.size());
    }
}

TEST_CASE("rebalance keeps an already-balanced pool whole") {
    SUBCASE("exactly at target") {
        const auto pool = make_pool(350, 650);
        const auto built = rebalance(pool, 0.35, 0.01, 1);
        CHECK(built.sessions.size() == 1000);
        CHECK(built.manifest.achieved_prevalence.fraction() == 0.35);
    }
    SUBCASE("paper ratio: 1.68M attack / 3M normal scaled down") {
        const auto pool = make_pool(1680, 3000);
        const auto built = rebalance(pool, 0.35, 0.01, 1);
        CHECK(built.sessions.size() == 4680);  // kept whole
        CHECK(built.manifest.achieved_prevalence.fraction() ==
              doctest::Approx(0.359).epsilon(0.001));
    }
}

TEST_CASE("rebalance errors") {
    SUBCASE("infeasible target names achievable prevalence") {
        const auto pool = make_pool(500, 500);  // natural 0.5
        try {
            rebalance(pool, 0.35, 0.01, 1);
            FAIL("expected throw");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("0.5") != std::string::npos);
        }
    }
    SUBCASE("single class rejected") {
        CHECK_THROWS_AS(rebalance(make_pool(0, 50), 0.35, 0.01, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(rebalance(make_pool(50, 0), 0.35, 0.01, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("stats recomputation from materialized sessions is exact") {
    const auto pool = make_pool(40, 400);
    const auto built = rebalance(pool, 0.35, 0.01, 11);
    const auto recomputed = compute_stats(built.sessions);
    CHECK(recomputed == built.manifest.stats);
    CHECK(json(recomputed).dump() == json(built.manifest.stats).dump());

    std::int64_t hist_sum = 0;
    for (auto c : recomputed.hour_histogram) hist_sum += c;
    CHECK(hist_sum == recomputed.session_count);
    CHECK(recomputed.weekday_share + recomputed.weekend_share ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("manifest JSON round trip") {
    const auto built = rebalance(make_pool(30, 300), 0.35, 0.01, 5);
    const std::string s = json(built.manifest).dump();
    const auto back = json::parse(s).get<DatasetManifest>();
    CHECK(json(back).dump() == s);
}

TEST_CASE("instruction pairs") {
    const auto r = rules();
    SUBCASE("untagged session: LOW grade, none observed") {
        const auto s = make_session(make_timestamp(2024, 1, 9, 10, 0, 0), "w", false);
        const auto p = to_instruction_pair(s, r);
        CHECK(p.response.find("Anomalous Patterns: none observed.") !=
              std::string::npos);
        CHECK(p.response.find("Risk Grade: LOW") != std::string::npos);
    }
    SUBCASE("data exfiltration grades CRITICAL") {
        auto s = make_session(make_timestamp(2024, 1, 9, 10, 0, 0), "w", false);
        s.entries[1].attack_tags.insert(AttackTag::data_exfiltration);
        s.label = derive_label(s.entries);
        const auto p = to_instruction_pair(s, r);
        CHECK(p.response.find("Risk Grade: CRITICAL") != std::string::npos);
    }
    SUBCASE("most severe tag wins") {
        auto s = make_session(make_timestamp(2024, 1, 9, 10, 0, 0), "w", false);
        s.entries[0].attack_tags.insert(AttackTag::reconnaissance);
        s.entries[1].attack_tags.insert(AttackTag::lateral_movement);
        const auto p = to_instruction_pair(s, r);
        CHECK(p.response.find("Risk Grade: HIGH") != std::string::npos);
    }
    SUBCASE("all four part headers always present") {
        for (bool tagged : {false, true}) {
            const auto s =
                make_session(make_timestamp(2024, 1, 9, 10, 0, 0), "w", tagged);
            const auto p = to_instruction_pair(s, r);
            CHECK(p.response.find("Activity Summary:") != std::string::npos);
            CHECK(p.response.find("Anomalous Patterns:") != std::string::npos);
            CHECK(p.response.find("Risk Grade:") != std::string::npos);
            CHECK(p.response.find("Remediation Steps:") != std::string::npos);
            CHECK(!p.prompt.empty());
            CHECK(p.prompt.find("Host: w") != std::string::npos);
        }
    }
}

TEST_CASE("tag map TSV loads") {
    const auto aliases = load_tag_map(std::string(LOGATLAS_DATA_DIR) +
                                      "/attack_tag_map.tsv");
    CHECK(aliases.size() >= 10);
    CHECK(resolve_tag("dnsteal", aliases) == AttackTag::data_exfiltration);
    CHECK(resolve_tag("nmap", aliases) == AttackTag::reconnaissance);
}

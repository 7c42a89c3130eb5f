#pragma once

// Dataset materialization: the natural-prevalence foundation set, the
// rebalanced defense set (majority-class subsampling, anomalous sessions
// always retained), seeded 90/10 splits, instruction pairs driven by the
// shipped rule tables, and the token-budget arithmetic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "logatlas/rng.hpp"
#include "logatlas/stats.hpp"

namespace logatlas {

enum class DatasetKind { foundation, defense };

inline std::string_view to_string(DatasetKind k) {
    return k == DatasetKind::foundation ? "foundation" : "defense";
}

inline std::optional<DatasetKind> dataset_kind_from(std::string_view s) {
    if (s == "foundation") return DatasetKind::foundation;
    if (s == "defense") return DatasetKind::defense;
    return std::nullopt;
}

// Split assignments index the materialized session list (the sessions.jsonl
// written next to the manifest), not the pre-rebalance input.
struct DatasetManifest {
    DatasetKind kind = DatasetKind::foundation;
    std::uint64_t seed = 0;
    Prevalence achieved_prevalence;
    std::vector<std::int64_t> train_ids;
    std::vector<std::int64_t> val_ids;
    StatsReport stats;
    std::optional<double> target_prevalence;  // defense only
    std::optional<double> tolerance;          // defense only
};

inline void to_json(json& j, const DatasetManifest& m) {
    j = json{{"kind", to_string(m.kind)},
             {"seed", m.seed},
             {"achieved_prevalence", m.achieved_prevalence},
             {"train_ids", m.train_ids},
             {"val_ids", m.val_ids},
             {"stats", m.stats},
             {"target_prevalence",
              m.target_prevalence ? json(*m.target_prevalence) : json(nullptr)},
             {"tolerance", m.tolerance ? json(*m.tolerance) : json(nullptr)}};
}

inline void from_json(const json& j, DatasetManifest& m) {
    const auto kind = dataset_kind_from(j.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("manifest: bad kind");
    m.kind = *kind;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.achieved_prevalence = j.at("achieved_prevalence").get<Prevalence>();
    m.train_ids = j.at("train_ids").get<std::vector<std::int64_t>>();
    m.val_ids = j.at("val_ids").get<std::vector<std::int64_t>>();
    m.stats = j.at("stats").get<StatsReport>();
    if (j.at("target_prevalence").is_null())
        m.target_prevalence.reset();
    else
        m.target_prevalence = j.at("target_prevalence").get<double>();
    if (j.at("tolerance").is_null())
        m.tolerance.reset();
    else
        m.tolerance = j.at("tolerance").get<double>();
}

struct BuiltDataset {
    DatasetManifest manifest;
    std::vector<Session> sessions;  // the materialized dataset, input order
};

namespace detail {

// floor(0.9 n) training rows; per-label when stratified, so each label's
// split is within one session of exact.
inline std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>
split_90_10(std::vector<std::int64_t> ids, Rng& rng) {
    shuffle(ids, rng);
    const std::size_t n_train = ids.size() * 9 / 10;
    std::vector<std::int64_t> train(ids.begin(), ids.begin() + n_train);
    std::vector<std::int64_t> val(ids.begin() + n_train, ids.end());
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {std::move(train), std::move(val)};
}

}  // namespace detail

// Foundation set: every session, prevalence untouched, seeded 90/10 split.
inline BuiltDataset build_foundation(const std::vector<Session>& sessions,
                                     std::uint64_t seed) {
    if (sessions.empty())
        throw std::invalid_argument("build_foundation: empty session list");
    BuiltDataset out;
    out.sessions = sessions;
    out.manifest.kind = DatasetKind::foundation;
    out.manifest.seed = seed;
    out.manifest.achieved_prevalence = prevalence(sessions);
    out.manifest.stats = compute_stats(sessions);

    std::vector<std::int64_t> ids(sessions.size());
    for (std::size_t i = 0; i < sessions.size(); ++i)
        ids[i] = static_cast<std::int64_t>(i);
    Rng rng(mix_seed(seed, "foundation-split"));
    auto [train, val] = detail::split_90_10(std::move(ids), rng);
    out.manifest.train_ids = std::move(train);
    out.manifest.val_ids = std::move(val);
    return out;
}

// Defense set: seeded subsampling of normal sessions (never oversampling,
// never dropping an anomalous session) until prevalence lands inside
// [target - tolerance, target + tolerance]; then a label-stratified split.
inline BuiltDataset rebalance(const std::vector<Session>& sessions,
                              double target_prevalence = 0.35,
                              double tolerance = 0.01,
                              std::uint64_t seed = 0) {
    if (target_prevalence <= 0.0 || target_prevalence >= 1.0)
        throw std::invalid_argument("rebalance: target must be in (0,1)");
    std::vector<std::size_t> anom, norm;
    for (std::size_t i = 0; i < sessions.size(); ++i)
        (sessions[i].label == Label::anomalous ? anom : norm).push_back(i);
    if (anom.empty() || norm.empty())
        throw std::invalid_argument("rebalance: both classes must be present");

    const auto a = static_cast<double>(anom.size());
    const double lo = target_prevalence - tolerance;
    const double hi = target_prevalence + tolerance;
    const double natural = a / static_cast<double>(anom.size() + norm.size());

    std::size_t keep_normals = norm.size();
    if (natural > hi) {
        std::ostringstream msg;
        msg << "rebalance: target " << target_prevalence << " +/- " << tolerance
            << " infeasible: subsampling normals only raises prevalence above "
            << "the natural " << natural << " (closest achievable)";
        throw std::invalid_argument(msg.str());
    }
    if (natural < lo) {
        // Solve a / (a + n) = target for n, then nudge into the window.
        auto achieved = [&](std::size_t n) {
            return a / (a + static_cast<double>(n));
        };
        const double exact = a * (1.0 - target_prevalence) / target_prevalence;
        auto n = static_cast<std::int64_t>(std::llround(exact));
        n = std::clamp<std::int64_t>(n, 0,
                                     static_cast<std::int64_t>(norm.size()));
        while (n > 0 && achieved(static_cast<std::size_t>(n)) < lo) --n;
        while (n < static_cast<std::int64_t>(norm.size()) &&
               achieved(static_cast<std::size_t>(n)) > hi)
            ++n;
        const double got = achieved(static_cast<std::size_t>(n));
        if (got < lo || got > hi) {
            std::ostringstream msg;
            msg << "rebalance: no normal-subset size reaches " << target_prevalence
                << " +/- " << tolerance << "; closest achievable prevalence is "
                << got;
            throw std::invalid_argument(msg.str());
        }
        keep_normals = static_cast<std::size_t>(n);
    }

    Rng rng(mix_seed(seed, "rebalance-subsample"));
    std::vector<std::size_t> chosen = norm;
    shuffle(chosen, rng);
    chosen.resize(keep_normals);

    std::vector<std::size_t> selected = anom;
    selected.insert(selected.end(), chosen.begin(), chosen.end());
    std::sort(selected.begin(), selected.end());

    BuiltDataset out;
    out.sessions.reserve(selected.size());
    for (std::size_t i : selected) out.sessions.push_back(sessions[i]);
    out.manifest.kind = DatasetKind::defense;
    out.manifest.seed = seed;
    out.manifest.target_prevalence = target_prevalence;
    out.manifest.tolerance = tolerance;
    out.manifest.achieved_prevalence = prevalence(out.sessions);
    out.manifest.stats = compute_stats(out.sessions);

    std::vector<std::int64_t> anom_ids, norm_ids;
    for (std::size_t i = 0; i < out.sessions.size(); ++i) {
        (out.sessions[i].label == Label::anomalous ? anom_ids : norm_ids)
            .push_back(static_cast<std::int64_t>(i));
    }
    Rng split_rng(mix_seed(seed, "defense-split"));
    auto [train_a, val_a] = detail::split_90_10(std::move(anom_ids), split_rng);
    auto [train_n, val_n] = detail::split_90_10(std::move(norm_ids), split_rng);
    train_a.insert(train_a.end(), train_n.begin(), train_n.end());
    val_a.insert(val_a.end(), val_n.begin(), val_n.end());
    std::sort(train_a.begin(), train_a.end());
    std::sort(val_a.begin(), val_a.end());
    out.manifest.train_ids = std::move(train_a);
    out.manifest.val_ids = std::move(val_a);
    return out;
}

// ---------------------------------------------------------------------------
// Instruction pairs. Grades and remediation playbooks are versioned TSV data
// shipped under data/, not code; the loader validates against the closed
// grade set.

struct InstructionPair {
    std::string prompt;
    std::string response;
};

inline void to_json(json& j, const InstructionPair& p) {
    j = json{{"prompt", p.prompt}, {"response", p.response}};
}

inline void from_json(const json& j, InstructionPair& p) {
    p.prompt = j.at("prompt").get<std::string>();
    p.response = j.at("response").get<std::string>();
}

struct RuleTables {
    struct GradeRule {
        std::string grade;
        std::string justification;
    };
    std::map<AttackTag, GradeRule> grades;
    std::map<AttackTag, std::string> remediation;
    GradeRule untagged_grade;
    std::string untagged_remediation;

    static bool valid_grade(std::string_view g) {
        return g == "CRITICAL" || g == "HIGH" || g == "MEDIUM" || g == "LOW";
    }

    static int severity(std::string_view g) {
        if (g == "CRITICAL") return 3;
        if (g == "HIGH") return 2;
        if (g == "MEDIUM") return 1;
        return 0;
    }
};

namespace detail {

inline std::vector<std::vector<std::string>> read_tsv(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const std::size_t tab = line.find('\t', pos);
            if (tab == std::string::npos) {
                fields.push_back(line.substr(pos));
                break;
            }
            fields.push_back(line.substr(pos, tab - pos));
            pos = tab + 1;
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace detail

inline TagAliasMap load_tag_map(const std::filesystem::path& path) {
    TagAliasMap out;
    for (const auto& row : detail::read_tsv(path)) {
        if (row.size() != 2)
            throw std::runtime_error(path.string() + ": expected 2 columns");
        const auto tag = attack_tag_from(row[1]);
        if (!tag)
            throw std::runtime_error(path.string() + ": unknown family " + row[1]);
        out[row[0]] = *tag;
    }
    return out;
}

inline RuleTables load_rule_tables(const std::filesystem::path& grades_tsv,
                                   const std::filesystem::path& remediation_tsv) {
    RuleTables t;
    for (const auto& row : detail::read_tsv(grades_tsv)) {
        if (row.size() != 3)
            throw std::runtime_error(grades_tsv.string() + ": expected 3 columns");
        if (!RuleTables::valid_grade(row[1]))
            throw std::runtime_error(grades_tsv.string() + ": bad grade " + row[1]);
        if (row[0] == "none") {
            t.untagged_grade = {row[1], row[2]};
        } else {
            const auto tag = attack_tag_from(row[0]);
            if (!tag)
                throw std::runtime_error(grades_tsv.string() + ": unknown tag " +
                                         row[0]);
            t.grades[*tag] = {row[1], row[2]};
        }
    }
    for (const auto& row : detail::read_tsv(remediation_tsv)) {
        if (row.size() != 2)
            throw std::runtime_error(remediation_tsv.string() +
                                     ": expected 2 columns");
        if (row[0] == "none") {
            t.untagged_remediation = row[1];
        } else {
            const auto tag = attack_tag_from(row[0]);
            if (!tag)
                throw std::runtime_error(remediation_tsv.string() +
                                         ": unknown tag " + row[0]);
            t.remediation[*tag] = row[1];
        }
    }
    for (AttackTag tag : kAllAttackTags) {
        if (!t.grades.count(tag) || !t.remediation.count(tag))
            throw std::runtime_error("rule tables: missing entry for " +
                                     std::string(to_string(tag)));
    }
    if (t.untagged_grade.grade.empty() || t.untagged_remediation.empty())
        throw std::runtime_error("rule tables: missing 'none' rows");
    return t;
}

namespace detail {

constexpr std::size_t kPromptEntryCap = 50;

inline std::string render_prompt(const Session& s) {
    std::ostringstream os;
    os << "Analyze the following log session and assess its security risk.\n";
    os << "Host: " << s.meta.host << "\n";
    os << "Start: " << format_rfc3339(s.entries.front().timestamp) << " (hour "
       << s.meta.hour << ", " << (s.meta.is_weekend ? "weekend" : "weekday")
       << ")\n";
    os << "Duration: " << s.meta.duration_seconds << " seconds\n";
    os << "Entries: " << s.entries.size() << "\n";
    os << "Sources:";
    for (const auto& [t, n] : s.meta.log_types)
        os << " " << to_string(t) << "=" << n;
    os << "\nLog entries:\n";
    const std::size_t shown = std::min(s.entries.size(), kPromptEntryCap);
    for (std::size_t i = 0; i < shown; ++i) {
        const auto& e = s.entries[i];
        os << "[" << to_string(e.source_type) << "] " << e.message << "\n";
    }
    if (s.entries.size() > shown)
        os << "... (" << s.entries.size() - shown << " more entries)\n";
    return os.str();
}

}  // namespace detail

// Deterministic rule-table response with the fixed four-part structure.
inline InstructionPair to_instruction_pair(const Session& s,
                                           const RuleTables& rules) {
    InstructionPair p;
    p.prompt = detail::render_prompt(s);

    std::map<AttackTag, std::int64_t> tag_counts;
    for (const auto& e : s.entries)
        for (AttackTag t : e.attack_tags) ++tag_counts[t];

    std::ostringstream os;
    // 1. Activity summary.
    os << "Activity Summary: " << s.entries.size() << " log entries on host "
       << s.meta.host << " over " << s.meta.duration_seconds << " seconds (";
    bool first = true;
    for (const auto& [t, n] : s.meta.log_types) {
        if (!first) os << ", ";
        os << to_string(t) << "=" << n;
        first = false;
    }
    os << ").\n";

    // 2. Anomalous patterns.
    if (tag_counts.empty()) {
        os << "Anomalous Patterns: none observed.\n";
    } else {
        os << "Anomalous Patterns:";
        for (const auto& [t, n] : tag_counts)
            os << " " << n << " entries tagged " << to_string(t) << ";";
        std::size_t quoted = 0;
        for (const auto& e : s.entries) {
            if (e.attack_tags.empty() || quoted >= 2) continue;
            os << " e.g. \"" << e.message << "\"";
            ++quoted;
        }
        os << "\n";
    }

    // 3. Risk grade: the most severe grade any present tag maps to.
    const RuleTables::GradeRule* grade = &rules.untagged_grade;
    for (const auto& [t, _] : tag_counts) {
        const auto& rule = rules.grades.at(t);
        if (RuleTables::severity(rule.grade) > RuleTables::severity(grade->grade))
            grade = &rule;
    }
    os << "Risk Grade: " << grade->grade << " - " << grade->justification
       << "\n";

    // 4. Remediation playbook entries for every tag present.
    os << "Remediation Steps: ";
    if (tag_counts.empty()) {
        os << rules.untagged_remediation << "\n";
    } else {
        first = true;
        for (const auto& [t, _] : tag_counts) {
            if (!first) os << " ";
            os << rules.remediation.at(t);
            first = false;
        }
        os << "\n";
    }
    p.response = os.str();
    return p;
}

// Tokens-per-parameter bookkeeping against the ~20:1 compute-optimal point.
struct ChinchillaPlan {
    double ratio = 0.0;
    double compute_optimal_tokens = 0.0;  // at 20 tokens per parameter
};

inline ChinchillaPlan chinchilla_plan(double trainable_params, double tokens) {
    if (trainable_params <= 0.0)
        throw std::invalid_argument("chinchilla_plan: params must be positive");
    if (tokens <= 0.0)
        throw std::invalid_argument("chinchilla_plan: tokens must be positive");
    return ChinchillaPlan{tokens / trainable_params, 20.0 * trainable_params};
}

}  // namespace logatlas

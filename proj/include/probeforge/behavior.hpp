#pragma once

// Choice extraction from generated responses, choice entropy, and the
// conflict-entropy statistics report.

#include "analysis.hpp"
#include "errors.hpp"
#include "stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probeforge {

enum class Choice { A, B, other };

[[nodiscard]] constexpr std::string_view to_string(Choice c) noexcept
{
    switch (c) {
    case Choice::A: return "A";
    case Choice::B: return "B";
    case Choice::other: return "OTHER";
    }
    return "OTHER";
}

struct Extraction {
    Choice choice{Choice::other};
    std::optional<int> tier; ///< 1..5, empty for OTHER
};

namespace detail {

inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

/// Uppercase A/B at `i`, bounded by non-alphanumerics or the string edges.
inline std::optional<Choice> standalone_letter(std::string_view s, std::size_t i)
{
    if (i >= s.size() || (s[i] != 'A' && s[i] != 'B')) return std::nullopt;
    if (i > 0 && is_alnum(s[i - 1])) return std::nullopt;
    if (i + 1 < s.size() && is_alnum(s[i + 1])) return std::nullopt;
    return s[i] == 'A' ? Choice::A : Choice::B;
}

inline std::string lowercase(std::string_view s)
{
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::size_t skip_spaces(std::string_view s, std::size_t i)
{
    while (i < s.size() && is_space(s[i])) ++i;
    return i;
}

/// Earliest word-initial, case-insensitive occurrence of `word` for which
/// `tail(pos_after_word)` yields a choice.
template <typename Tail>
std::optional<Choice> scan_keyword(std::string_view text, const std::string& lower,
                                   std::string_view word, Tail tail)
{
    for (auto pos = lower.find(word); pos != std::string::npos; pos = lower.find(word, pos + 1)) {
        if (pos > 0 && is_alnum(text[pos - 1])) continue;
        if (auto c = tail(pos + word.size())) return c;
    }
    return std::nullopt;
}

inline std::optional<Choice> tier1_marker(std::string_view text)
{
    const auto a = text.find("(A)");
    const auto b = text.find("(B)");
    if (a == std::string_view::npos && b == std::string_view::npos) return std::nullopt;
    return a < b ? Choice::A : Choice::B;
}

inline std::optional<Choice> tier2_answer_prefix(std::string_view text, const std::string& lower)
{
    return scan_keyword(text, lower, "answer", [&](std::size_t i) -> std::optional<Choice> {
        i = skip_spaces(text, i);
        if (i >= text.size() || text[i] != ':') return std::nullopt;
        i = skip_spaces(text, i + 1);
        if (i < text.size() && (text[i] == '(' || text[i] == '[')) i = skip_spaces(text, i + 1);
        if (i >= text.size() || (text[i] != 'A' && text[i] != 'B')) return std::nullopt;
        if (i + 1 < text.size() && is_alnum(text[i + 1])) return std::nullopt;
        return text[i] == 'A' ? Choice::A : Choice::B;
    });
}

inline std::optional<Choice> tier3_leading(std::string_view text)
{
    return standalone_letter(text, skip_spaces(text, 0));
}

inline std::optional<Choice> tier4_early_token(std::string_view text)
{
    const auto limit = std::min<std::size_t>(text.size(), 100);
    for (std::size_t i = 0; i < limit; ++i) {
        if (auto c = standalone_letter(text, i)) return c;
    }
    return std::nullopt;
}

inline std::optional<Choice> tier5_phrase(std::string_view text, const std::string& lower)
{
    std::optional<Choice> best;
    std::size_t best_pos = std::string::npos;
    for (std::string_view word : {std::string_view("option"), std::string_view("choose")}) {
        for (auto pos = lower.find(word); pos != std::string::npos; pos = lower.find(word, pos + 1)) {
            if (pos > 0 && is_alnum(text[pos - 1])) continue;
            const auto after = pos + word.size();
            if (after >= text.size() || !is_space(text[after])) continue;
            if (auto c = standalone_letter(text, skip_spaces(text, after))) {
                if (pos < best_pos) {
                    best = c;
                    best_pos = pos;
                }
                break;
            }
        }
    }
    return best;
}

} // namespace detail

/// Hierarchical extraction, first matching tier wins:
///   1. an explicit "(A)" / "(B)" marker (earliest one)
///   2. "Answer: A" (case-insensitive "answer", optional "(" or "[")
///   3. the response starts with a standalone A or B
///   4. the first standalone A or B within the first 100 characters
///   5. "Option A" / "Choose B" (case-insensitive keyword)
/// A standalone letter is an uppercase A/B bounded by non-alphanumerics.
inline Extraction extract_choice(std::string_view text)
{
    const auto lower = detail::lowercase(text);
    if (auto c = detail::tier1_marker(text)) return {*c, 1};
    if (auto c = detail::tier2_answer_prefix(text, lower)) return {*c, 2};
    if (auto c = detail::tier3_leading(text)) return {*c, 3};
    if (auto c = detail::tier4_early_token(text)) return {*c, 4};
    if (auto c = detail::tier5_phrase(text, lower)) return {*c, 5};
    return {Choice::other, std::nullopt};
}

/// Shannon entropy in bits over the empirical {A, B, OTHER} distribution.
inline double choice_entropy(std::span<const Choice> choices)
{
    if (choices.empty()) throw EmptyList("entropy of an empty choice list");
    std::array<std::size_t, 3> counts{};
    for (auto c : choices) ++counts[static_cast<std::size_t>(c)];
    const auto n = static_cast<double>(choices.size());
    double h = 0.0;
    for (auto k : counts) {
        if (k == 0) continue;
        const double p = static_cast<double>(k) / n;
        h -= p * std::log2(p);
    }
    return h;
}

struct Generation {
    std::string scenario_id;
    int sample_index{0};
    std::string text;
};

struct ChoiceSample {
    std::string scenario_id;
    std::string text;
    Choice choice{Choice::other};
    std::optional<int> tier;
};

struct BehaviorRecord {
    std::string scenario_id;
    std::vector<ChoiceSample> samples;
    double entropy{0.0};
    double valid_fraction{0.0};

    [[nodiscard]] double other_fraction() const { return 1.0 - valid_fraction; }
};

inline nlohmann::json to_json(const Generation& g)
{
    return {{"scenario_id", g.scenario_id}, {"sample_index", g.sample_index}, {"text", g.text}};
}

inline std::vector<Generation> read_generations(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open generations file " + path);
    std::vector<Generation> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("scenario_id").get<std::string>(), j.at("sample_index").get<int>(),
                           j.at("text").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void write_generations(const std::vector<Generation>& gens, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    for (const auto& g : gens) out << to_json(g).dump() << '\n';
}

/// Groups generations by scenario (ordered by sample index) and extracts
/// choices. Records come back sorted by scenario id.
inline std::vector<BehaviorRecord> build_behavior_records(std::vector<Generation> gens)
{
    std::stable_sort(gens.begin(), gens.end(), [](const Generation& a, const Generation& b) {
        return a.scenario_id != b.scenario_id ? a.scenario_id < b.scenario_id
                                              : a.sample_index < b.sample_index;
    });
    std::vector<BehaviorRecord> out;
    for (const auto& g : gens) {
        if (out.empty() || out.back().scenario_id != g.scenario_id) {
            out.push_back({g.scenario_id, {}, 0.0, 0.0});
        }
        const auto e = extract_choice(g.text);
        out.back().samples.push_back({g.scenario_id, g.text, e.choice, e.tier});
    }
    for (auto& r : out) {
        std::vector<Choice> choices;
        for (const auto& s : r.samples) choices.push_back(s.choice);
        r.entropy = choice_entropy(choices);
        const auto valid = std::count_if(choices.begin(), choices.end(),
                                         [](Choice c) { return c != Choice::other; });
        r.valid_fraction = static_cast<double>(valid) / static_cast<double>(choices.size());
    }
    return out;
}

inline nlohmann::json to_json(const BehaviorRecord& r)
{
    auto choices = nlohmann::json::array();
    auto tiers = nlohmann::json::array();
    for (const auto& s : r.samples) {
        choices.push_back(to_string(s.choice));
        tiers.push_back(s.tier ? nlohmann::json(*s.tier) : nlohmann::json(nullptr));
    }
    return {{"scenario_id", r.scenario_id}, {"choices", std::move(choices)}, {"tiers", std::move(tiers)},
            {"entropy", r.entropy},         {"valid_fraction", r.valid_fraction}};
}

struct BehaviorAnalysisOptions {
    std::string model = "model";
    double other_max_fraction = 0.2; ///< scenarios above this are excluded
    double family_alpha = 0.05;
    int family_size = 3; ///< Bonferroni family (models compared)
};

/// Correlation, interval, effect size and corrected significance for one model.
struct CorrelationReport {
    std::string model;
    double r{0.0};
    double ci_low{0.0};
    double ci_high{0.0};
    double p{1.0};
    std::size_t n{0};
    double cohens_d{0.0};
    double alpha_corrected{0.05};
    bool significant{false};
    double group_p{1.0};            ///< Welch, high vs low entropy
    double group_p_mann_whitney{1.0};
    std::size_t n_high{0};
    std::size_t n_low{0};
    std::size_t n_excluded{0};
    bool degenerate{false}; ///< entropy or scores constant; r, d reported as 0
};

/// Correlates conflict score with choice entropy over the sampled scenarios
/// that pass the OTHER-fraction filter, and compares high vs low groups.
/// Throws IntegrityError when a sampled scenario has no generations.
inline CorrelationReport analyze_conflict_entropy(std::span<const ConflictRecord> sampled,
                                                  std::span<const BehaviorRecord> behavior,
                                                  const BehaviorAnalysisOptions& opt)
{
    std::map<std::string_view, const BehaviorRecord*> by_id;
    for (const auto& b : behavior) by_id[b.scenario_id] = &b;

    CorrelationReport rep;
    rep.model = opt.model;
    std::vector<double> scores;
    std::vector<double> entropies;
    std::vector<double> high;
    std::vector<double> low;
    for (const auto& c : sampled) {
        const auto it = by_id.find(c.scenario_id);
        if (it == by_id.end() || it->second->samples.empty()) {
            throw IntegrityError("scenario '" + c.scenario_id + "' has no generations");
        }
        const auto& b = *it->second;
        if (b.other_fraction() > opt.other_max_fraction + 1e-12) {
            ++rep.n_excluded;
            continue;
        }
        scores.push_back(c.score);
        entropies.push_back(b.entropy);
        if (c.group == ConflictGroup::high) high.push_back(b.entropy);
        if (c.group == ConflictGroup::low) low.push_back(b.entropy);
    }
    rep.n = scores.size();
    rep.n_high = high.size();
    rep.n_low = low.size();

    try {
        const auto pr = stats::pearson(scores, entropies);
        rep.r = pr.r;
        rep.p = pr.p;
        rep.ci_low = pr.ci_low;
        rep.ci_high = pr.ci_high;
    } catch (const ZeroVariance&) {
        rep.degenerate = true;
        rep.r = 0.0;
        rep.p = 1.0;
    }
    try {
        const auto g = stats::group_comparison(high, low);
        rep.cohens_d = g.d;
        rep.group_p = g.p;
        rep.group_p_mann_whitney = g.mann_whitney_p;
    } catch (const DegenerateGroups&) {
        rep.degenerate = true;
    }
    rep.alpha_corrected = opt.family_alpha / static_cast<double>(std::max(opt.family_size, 1));
    rep.significant = !rep.degenerate && rep.p < rep.alpha_corrected;
    return rep;
}

inline nlohmann::json to_json(const CorrelationReport& r)
{
    return {{"model", r.model},
            {"r", r.r},
            {"ci", {r.ci_low, r.ci_high}},
            {"p", r.p},
            {"d", r.cohens_d},
            {"n", r.n},
            {"alpha_corrected", r.alpha_corrected},
            {"significant", r.significant},
            {"group_p_welch", r.group_p},
            {"group_p_mann_whitney", r.group_p_mann_whitney},
            {"n_high", r.n_high},
            {"n_low", r.n_low},
            {"n_excluded", r.n_excluded},
            {"degenerate", r.degenerate}};
}

inline CorrelationReport correlation_report_from_json(const nlohmann::json& j)
{
    try {
        CorrelationReport r;
        r.model = j.at("model").get<std::string>();
        r.r = j.at("r").get<double>();
        r.ci_low = j.at("ci").at(0).get<double>();
        r.ci_high = j.at("ci").at(1).get<double>();
        r.p = j.at("p").get<double>();
        r.cohens_d = j.at("d").get<double>();
        r.n = j.at("n").get<std::size_t>();
        r.alpha_corrected = j.at("alpha_corrected").get<double>();
        r.significant = j.at("significant").get<bool>();
        r.group_p = j.value("group_p_welch", 1.0);
        r.group_p_mann_whitney = j.value("group_p_mann_whitney", 1.0);
        r.n_high = j.value("n_high", std::size_t{0});
        r.n_low = j.value("n_low", std::size_t{0});
        r.n_excluded = j.value("n_excluded", std::size_t{0});
        r.degenerate = j.value("degenerate", false);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad stats report: ") + e.what());
    }
}

} // namespace probeforge

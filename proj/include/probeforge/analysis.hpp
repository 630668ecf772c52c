#pragma once

// Layer sweeps, unified-depth layer selection, cross-framework transfer
// matrices and probe-disagreement conflict scoring.

#include "activations.hpp"
#include "errors.hpp"
#include "format.hpp"
#include "framework.hpp"
#include "parallel.hpp"
#include "probe.hpp"
#include "rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace probeforge {

enum class DepthMode { floor, round };

/// Layer index at `fraction` of the model's depth. Floor mode absorbs a 1e-9
/// representation error so that e.g. 0.29 * 100 maps to 29.
inline int depth_to_layer(int n_layers, double fraction, DepthMode mode)
{
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("depth fraction must be in (0, 1]");
    const double x = fraction * n_layers;
    return static_cast<int>(mode == DepthMode::floor ? std::floor(x + 1e-9) : std::round(x));
}

// Layer sweep.

struct LayerEval {
    int layer{0};
    EvalReport report;
    bool converged{false};
};

struct LayerSweepResult {
    Framework framework{Framework::commonsense};
    std::vector<LayerEval> layers;
};

/// One independently trained probe per layer, each evaluated on the same
/// layer's test split. `train[k]` and `test[k]` belong to the same layer.
inline LayerSweepResult layer_sweep(std::span<const ActivationSet> train,
                                    std::span<const ActivationSet> test, const ProbeConfig& cfg,
                                    int n_bins = 10, int jobs = 1)
{
    if (train.empty()) throw EmptyData("layer sweep without layers");
    if (train.size() != test.size()) throw DimensionMismatch("train/test layer counts differ");
    for (std::size_t k = 0; k < train.size(); ++k) {
        const auto& a = train[k];
        if (a.framework != train[0].framework || test[k].framework != a.framework) {
            throw DimensionMismatch("layer sweep mixes frameworks");
        }
        if (test[k].layer != a.layer) throw DimensionMismatch("train/test layer mismatch");
        if (k > 0 && a.layer <= train[k - 1].layer) {
            throw DimensionMismatch("layer sweep layers must be strictly increasing");
        }
        if (a.n != train[0].n || a.d != train[0].d || a.labels != train[0].labels) {
            throw DimensionMismatch("layer sweep inputs must share n, d and labels");
        }
    }

    LayerSweepResult out;
    out.framework = train[0].framework;
    out.layers.resize(train.size());
    parallel_for(train.size(), jobs, [&](std::size_t k) {
        const auto model = train_probe(train[k], cfg);
        out.layers[k] = {train[k].layer, evaluate(model, test[k], n_bins), model.converged};
    });
    return out;
}

// Transfer matrix.

enum class TransferMetric { accuracy, confidence, ece };

[[nodiscard]] constexpr std::string_view to_string(TransferMetric m) noexcept
{
    switch (m) {
    case TransferMetric::accuracy: return "accuracy";
    case TransferMetric::confidence: return "confidence";
    case TransferMetric::ece: return "ece";
    }
    return "unknown";
}

struct TransferMatrix {
    std::vector<Framework> frameworks;
    int layer{0};
    /// cells[i][j]: probe trained on frameworks[i], evaluated on frameworks[j].
    std::vector<std::vector<EvalReport>> cells;
    std::vector<ProbeModel> probes;

    [[nodiscard]] double value(std::size_t i, std::size_t j, TransferMetric m) const
    {
        const auto& c = cells[i][j];
        switch (m) {
        case TransferMetric::accuracy: return c.accuracy;
        case TransferMetric::confidence: return c.mean_confidence;
        case TransferMetric::ece: return c.ece;
        }
        return 0.0;
    }
};

/// Trains one probe per framework on `train[i]` and evaluates it on every
/// `test[j]`.
inline TransferMatrix transfer_matrix(std::span<const ActivationSet> train,
                                      std::span<const ActivationSet> test, const ProbeConfig& cfg,
                                      int n_bins = 10, int jobs = 1)
{
    const auto k = train.size();
    if (k == 0) throw EmptyData("transfer matrix without frameworks");
    if (test.size() != k) throw DimensionMismatch("transfer matrix needs one test set per framework");
    for (std::size_t i = 0; i < k; ++i) {
        if (train[i].framework != test[i].framework) {
            throw DimensionMismatch("train/test framework order differs at position " +
                                    std::to_string(i));
        }
        for (const auto* s : {&train[i], &test[i]}) {
            if (s->layer != train[0].layer) throw DimensionMismatch("transfer sets span several layers");
            if (s->d != train[0].d) throw DimensionMismatch("transfer sets differ in width");
        }
        if (test[i].n == 0) {
            throw EmptyData(std::string("empty test split for ") + std::string(to_string(test[i].framework)));
        }
    }

    TransferMatrix out;
    out.layer = train[0].layer;
    for (const auto& s : train) out.frameworks.push_back(s.framework);
    out.probes.resize(k);
    parallel_for(k, jobs, [&](std::size_t i) { out.probes[i] = train_probe(train[i], cfg); });
    out.cells.assign(k, std::vector<EvalReport>(k));
    parallel_for(k * k, jobs, [&](std::size_t c) {
        const auto i = c / k;
        const auto j = c % k;
        out.cells[i][j] = evaluate(out.probes[i], test[j], n_bins);
    });
    return out;
}

inline std::string transfer_csv(const TransferMatrix& m, TransferMetric metric)
{
    std::string csv = "train\\test";
    for (auto f : m.frameworks) csv += "," + std::string(to_string(f));
    csv += "\n";
    for (std::size_t i = 0; i < m.frameworks.size(); ++i) {
        csv += to_string(m.frameworks[i]);
        for (std::size_t j = 0; j < m.frameworks.size(); ++j) {
            csv += "," + format_double(m.value(i, j, metric));
        }
        csv += "\n";
    }
    return csv;
}

inline nlohmann::json to_json(const TransferMatrix& m)
{
    nlohmann::json j;
    j["layer"] = m.layer;
    auto& names = j["frameworks"] = nlohmann::json::array();
    for (auto f : m.frameworks) names.push_back(to_string(f));
    for (auto metric : {TransferMetric::accuracy, TransferMetric::confidence, TransferMetric::ece}) {
        auto rows = nlohmann::json::array();
        for (std::size_t i = 0; i < m.frameworks.size(); ++i) {
            auto row = nlohmann::json::array();
            for (std::size_t j2 = 0; j2 < m.frameworks.size(); ++j2) row.push_back(m.value(i, j2, metric));
            rows.push_back(std::move(row));
        }
        j[std::string(to_string(metric))] = std::move(rows);
    }
    auto counts = nlohmann::json::array();
    for (const auto& row : m.cells) {
        auto r = nlohmann::json::array();
        for (const auto& c : row) r.push_back(c.n);
        counts.push_back(std::move(r));
    }
    j["n"] = std::move(counts);
    return j;
}

// Conflict scoring.

/// |p_d - p_u| * min(2|p_d - 0.5|, 2|p_u - 0.5|).
[[nodiscard]] inline double conflict_score(double p_d, double p_u)
{
    return std::abs(p_d - p_u) * std::min(confidence(p_d), confidence(p_u));
}

enum class ConflictGroup { high, low, mid };

[[nodiscard]] constexpr std::string_view to_string(ConflictGroup g) noexcept
{
    switch (g) {
    case ConflictGroup::high: return "high";
    case ConflictGroup::low: return "low";
    case ConflictGroup::mid: return "mid";
    }
    return "mid";
}

inline ConflictGroup parse_conflict_group(std::string_view s)
{
    if (s == "high") return ConflictGroup::high;
    if (s == "low") return ConflictGroup::low;
    if (s == "mid") return ConflictGroup::mid;
    throw MalformedRecord("unknown conflict group '" + std::string(s) + "'");
}

struct ConflictRecord {
    std::string scenario_id;
    double p_d{0.5};
    double p_u{0.5};
    double c_d{0.0};
    double c_u{0.0};
    double score{0.0};
    ConflictGroup group{ConflictGroup::mid};
};

inline ConflictRecord make_conflict_record(std::string id, double p_d, double p_u)
{
    return {std::move(id), p_d, p_u, confidence(p_d), confidence(p_u), conflict_score(p_d, p_u),
            ConflictGroup::mid};
}

/// Applies the deontology and utilitarian probes to the same scenario set.
inline std::vector<ConflictRecord> score_conflicts(const ProbeModel& deontology,
                                                   const ProbeModel& utilitarian,
                                                   const ActivationSet& scenarios)
{
    const auto pd = predict_proba(deontology, scenarios.view());
    const auto pu = predict_proba(utilitarian, scenarios.view());
    std::vector<ConflictRecord> out;
    out.reserve(scenarios.n);
    for (std::size_t i = 0; i < scenarios.n; ++i) {
        out.push_back(make_conflict_record(scenarios.scenario_ids[i], pd[i], pu[i]));
    }
    return out;
}

/// q-th percentile (q in [0, 100]) by linear interpolation between order
/// statistics at position q/100 * (n - 1).
inline double percentile(std::vector<double> values, double q)
{
    if (values.empty()) throw EmptyData("percentile of an empty sample");
    if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

struct ConflictSelection {
    double hi_threshold{0.0};
    double lo_threshold{0.0};
    std::vector<ConflictRecord> records; ///< input order, with group assigned
    std::vector<std::size_t> sampled_high; ///< indices into records, ascending
    std::vector<std::size_t> sampled_low;
};

/// Pools: high = score >= hi-th percentile, low = score <= lo-th percentile.
/// A record in both pools (only when the thresholds coincide) is labelled
/// high. Up to `sample_n` records are drawn uniformly without replacement from
/// each pool; the low draw excludes records already drawn for high.
inline ConflictSelection select_conflict_groups(std::vector<ConflictRecord> records, double hi_pct,
                                                double lo_pct, std::size_t sample_n,
                                                std::uint64_t seed)
{
    if (records.size() < 4) throw EmptyData("conflict selection needs at least 4 records");
    if (lo_pct > hi_pct) throw ConfigError("low percentile exceeds high percentile");
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) scores.push_back(r.score);

    ConflictSelection sel;
    sel.hi_threshold = percentile(scores, hi_pct);
    sel.lo_threshold = percentile(scores, lo_pct);

    std::vector<std::size_t> high_pool;
    std::vector<std::size_t> low_pool;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& r = records[i];
        const bool hi = r.score >= sel.hi_threshold;
        const bool lo = r.score <= sel.lo_threshold;
        r.group = hi ? ConflictGroup::high : lo ? ConflictGroup::low : ConflictGroup::mid;
        if (hi) high_pool.push_back(i);
        if (lo) low_pool.push_back(i);
    }

    Rng rng_high(derive_seed(seed, {0x68ULL}));
    for (auto k : rng_high.sample_without_replacement(high_pool.size(), sample_n)) {
        sel.sampled_high.push_back(high_pool[k]);
    }
    std::sort(sel.sampled_high.begin(), sel.sampled_high.end());

    const std::unordered_set<std::size_t> taken(sel.sampled_high.begin(), sel.sampled_high.end());
    std::erase_if(low_pool, [&](std::size_t i) { return taken.contains(i); });
    Rng rng_low(derive_seed(seed, {0x6CULL}));
    for (auto k : rng_low.sample_without_replacement(low_pool.size(), sample_n)) {
        sel.sampled_low.push_back(low_pool[k]);
    }
    std::sort(sel.sampled_low.begin(), sel.sampled_low.end());

    sel.records = std::move(records);
    return sel;
}

inline nlohmann::json to_json(const ConflictRecord& r)
{
    return {{"scenario_id", r.scenario_id}, {"p_d", r.p_d}, {"p_u", r.p_u}, {"c_d", r.c_d},
            {"c_u", r.c_u},                 {"score", r.score}, {"group", to_string(r.group)}};
}

inline ConflictRecord conflict_from_json(const nlohmann::json& j)
{
    try {
        ConflictRecord r;
        r.scenario_id = j.at("scenario_id").get<std::string>();
        r.p_d = j.at("p_d").get<double>();
        r.p_u = j.at("p_u").get<double>();
        r.c_d = j.value("c_d", confidence(r.p_d));
        r.c_u = j.value("c_u", confidence(r.p_u));
        r.score = j.at("score").get<double>();
        r.group = parse_conflict_group(j.value("group", std::string("mid")));
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedRecord(std::string("bad conflict record: ") + e.what());
    }
}

} // namespace probeforge

#pragma once

// Bootstrap stability of conflict scores: retrain the deontology and
// utilitarian probes on resampled training rows under several seeds and
// measure how well the resulting conflict scores agree.

#include "activations.hpp"
#include "analysis.hpp"
#include "parallel.hpp"
#include "probe.hpp"
#include "rng.hpp"
#include "stats.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace probeforge {

struct StabilityOptions {
    int n_seeds = 5;
    std::uint64_t seed = 0;
    double bottom_pct = 25.0;
    /// Permute the resampled labels independently per seed (permutation null).
    bool permute_labels = false;
    int jobs = 1;
};

struct StabilityResult {
    double mean_pairwise_r{0.0};
    double bottom_quartile_iou{0.0};
    std::vector<double> pairwise_r;
    std::vector<double> pairwise_iou;
    std::vector<std::vector<double>> scores; ///< per seed, eval-set order
};

/// Indices whose score is at or below the `pct` percentile (ties included).
inline std::vector<std::size_t> bottom_set(const std::vector<double>& scores, double pct)
{
    const double cut = percentile(scores, pct);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] <= cut) out.push_back(i);
    }
    return out;
}

/// |A n B| / |A u B| of two ascending index sets; 1 when both are empty.
inline double iou(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b)
{
    std::vector<std::size_t> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    const auto uni = a.size() + b.size() - inter.size();
    return uni == 0 ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
}

namespace detail {

/// Bootstrap resample containing both classes.
inline ActivationSet resample(const ActivationSet& set, Rng& rng, bool permute)
{
    std::vector<std::size_t> idx(set.n);
    for (int attempt = 0;; ++attempt) {
        for (auto& i : idx) i = static_cast<std::size_t>(rng.index(set.n));
        auto out = select_rows(set, idx);
        if (permute) rng.shuffle(out.labels);
        const auto ones = std::count(out.labels.begin(), out.labels.end(), std::uint8_t{1});
        if (ones > 0 && static_cast<std::size_t>(ones) < out.n) return out;
        if (attempt > 100) throw SingleClass("bootstrap resamples keep collapsing to one class");
    }
}

} // namespace detail

inline StabilityResult bootstrap_stability(const ActivationSet& deontology_train,
                                           const ActivationSet& utilitarian_train,
                                           const ProbeConfig& cfg, const ActivationSet& eval_set,
                                           const StabilityOptions& opt = {})
{
    if (opt.n_seeds < 2) throw ConfigError("bootstrap stability needs at least two seeds");
    const auto k = static_cast<std::size_t>(opt.n_seeds);
    StabilityResult out;
    out.scores.resize(k);
    parallel_for(k, opt.jobs, [&](std::size_t s) {
        Rng rng(derive_seed(opt.seed, {0x626F6F74ULL, s}));
        auto seed_cfg = cfg;
        seed_cfg.seed = derive_seed(opt.seed, {s});
        const auto d = train_probe(detail::resample(deontology_train, rng, opt.permute_labels), seed_cfg);
        const auto u = train_probe(detail::resample(utilitarian_train, rng, opt.permute_labels), seed_cfg);
        std::vector<double> scores;
        for (const auto& r : score_conflicts(d, u, eval_set)) scores.push_back(r.score);
        out.scores[s] = std::move(scores);
    });

    std::vector<std::vector<std::size_t>> bottoms;
    for (const auto& s : out.scores) bottoms.push_back(bottom_set(s, opt.bottom_pct));
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
            double r = 0.0;
            try {
                r = stats::pearson(out.scores[a], out.scores[b]).r;
            } catch (const ZeroVariance&) {
                r = 0.0; // constant scores carry no ranking to agree on
            }
            out.pairwise_r.push_back(r);
            out.pairwise_iou.push_back(iou(bottoms[a], bottoms[b]));
        }
    }
    out.mean_pairwise_r = stats::mean(out.pairwise_r);
    out.bottom_quartile_iou = stats::mean(out.pairwise_iou);
    return out;
}

} // namespace probeforge

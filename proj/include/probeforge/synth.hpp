#pragma once

// Synthetic activation geometries with planted per-framework directions and
// a one-parameter behavioral channel. Serves as ground truth for the pipeline.

#include "activations.hpp"
#include "analysis.hpp"
#include "behavior.hpp"
#include "errors.hpp"
#include "framework.hpp"
#include "rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace probeforge {

struct SynthConfig {
    std::string model_id = "synth";
    int d = 32;
    int n_per_framework = 1000; ///< training rows per framework
    int n_test = 1000;          ///< test rows per framework
    /// Target pairwise cosines between framework directions, in kFrameworks order.
    std::vector<std::vector<double>> cosines = identity_cosines();
    double signal_strength = 1.0;
    double noise_stdev = 1.0;
    int n_layers = 1;
    /// Per-layer multiplier on signal_strength; empty means 1 at every layer.
    std::vector<double> layer_onset;
    double behavior_coupling = 1.0;
    std::uint64_t seed = 0;

    static std::vector<std::vector<double>> identity_cosines()
    {
        std::vector<std::vector<double>> m(kFrameworks.size(), std::vector<double>(kFrameworks.size(), 0.0));
        for (std::size_t i = 0; i < m.size(); ++i) m[i][i] = 1.0;
        return m;
    }

    [[nodiscard]] double onset(int layer) const
    {
        return layer_onset.empty() ? 1.0 : layer_onset[static_cast<std::size_t>(layer)];
    }

    void validate() const
    {
        if (d < static_cast<int>(kFrameworks.size())) throw ConfigError("synth d must be >= 5");
        if (n_per_framework < 2 || n_test < 1) throw ConfigError("synth needs n_per_framework >= 2 and n_test >= 1");
        if (n_layers < 1) throw ConfigError("synth n_layers must be >= 1");
        if (!layer_onset.empty() && layer_onset.size() != static_cast<std::size_t>(n_layers)) {
            throw ConfigError("layer_onset must have one entry per layer");
        }
        if (!(noise_stdev >= 0.0) || !(signal_strength >= 0.0)) {
            throw ConfigError("synth signal_strength and noise_stdev must be >= 0");
        }
        if (!(behavior_coupling >= 0.0)) throw ConfigError("behavior_coupling must be >= 0");
        if (cosines.size() != kFrameworks.size()) throw ConfigError("cosines must be 5x5");
        for (const auto& row : cosines) {
            if (row.size() != kFrameworks.size()) throw ConfigError("cosines must be 5x5");
        }
    }
};

inline nlohmann::json to_json(const SynthConfig& c)
{
    return {{"model_id", c.model_id},
            {"d", c.d},
            {"n_per_framework", c.n_per_framework},
            {"n_test", c.n_test},
            {"cosines", c.cosines},
            {"signal_strength", c.signal_strength},
            {"noise_stdev", c.noise_stdev},
            {"n_layers", c.n_layers},
            {"layer_onset", c.layer_onset},
            {"behavior_coupling", c.behavior_coupling},
            {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j)
{
    SynthConfig c;
    try {
        c.model_id = j.value("model_id", c.model_id);
        c.d = j.value("d", c.d);
        c.n_per_framework = j.value("n_per_framework", c.n_per_framework);
        c.n_test = j.value("n_test", c.n_test);
        if (j.contains("cosines")) c.cosines = j.at("cosines").get<std::vector<std::vector<double>>>();
        c.signal_strength = j.value("signal_strength", c.signal_strength);
        c.noise_stdev = j.value("noise_stdev", c.noise_stdev);
        c.n_layers = j.value("n_layers", c.n_layers);
        if (j.contains("layer_onset")) c.layer_onset = j.at("layer_onset").get<std::vector<double>>();
        c.behavior_coupling = j.value("behavior_coupling", c.behavior_coupling);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad synth config: ") + e.what());
    }
    c.validate();
    return c;
}

/// Unit vectors in R^d whose Gram matrix equals `cosines`: factor the PSD
/// target as V sqrt(L) and embed the rows through a random orthonormal basis.
inline std::vector<Vector> plant_directions(const Eigen::MatrixXd& cosines, int d, std::uint64_t seed)
{
    const auto k = cosines.rows();
    if (cosines.cols() != k || k == 0) throw NotRealizable("cosine matrix must be square");
    if (d < k) throw NotRealizable("dimension smaller than the number of directions");
    for (Eigen::Index i = 0; i < k; ++i) {
        if (std::abs(cosines(i, i) - 1.0) > 1e-12) throw NotRealizable("cosine matrix needs a unit diagonal");
        for (Eigen::Index j = 0; j < i; ++j) {
            if (std::abs(cosines(i, j) - cosines(j, i)) > 1e-12) {
                throw NotRealizable("cosine matrix is not symmetric");
            }
        }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cosines);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
        throw NotRealizable("cosine matrix is not positive semidefinite");
    }
    const Eigen::MatrixXd coords =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    Rng rng(derive_seed(seed, {0x646972ULL}));
    Eigen::MatrixXd gauss(d, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) gauss(i, j) = rng.normal();
    }
    const Eigen::MatrixXd basis =
        Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ() * Eigen::MatrixXd::Identity(d, k);

    std::vector<Vector> out;
    for (Eigen::Index i = 0; i < k; ++i) {
        Vector u = basis * coords.row(i).transpose();
        u.normalize();
        out.push_back(std::move(u));
    }
    return out;
}

inline Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

struct SynthDataset {
    SynthConfig config;
    std::vector<Vector> directions; ///< kFrameworks order
    std::vector<ActivationSet> sets; ///< see index()

    [[nodiscard]] static std::size_t index(Framework f, Split s, int layer)
    {
        return (static_cast<std::size_t>(layer) * 2 + (s == Split::train ? 0 : 1)) * kFrameworks.size() +
               index_of(f);
    }
    [[nodiscard]] const ActivationSet& get(Framework f, Split s, int layer) const
    {
        return sets.at(index(f, s, layer));
    }
};

inline std::string synth_scenario_id(Framework f, Split s, std::size_t i)
{
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%05zu", i);
    return std::string(to_string(f)) + "-" + std::string(to_string(s)) + "-" + buf;
}

/// x = (2y - 1) * signal * onset(layer) * u_f + noise * eps, y ~ Bernoulli(1/2).
/// Labels are shared across layers of a (framework, split); noise is drawn per
/// layer. Each job has its own stream derived from the root seed.
inline SynthDataset generate_activations(const SynthConfig& cfg)
{
    cfg.validate();
    SynthDataset out;
    out.config = cfg;
    out.directions = plant_directions(to_matrix(cfg.cosines), cfg.d, cfg.seed);
    out.sets.resize(static_cast<std::size_t>(cfg.n_layers) * 2 * kFrameworks.size());
    const auto d = static_cast<std::size_t>(cfg.d);

    for (auto f : kFrameworks) {
        for (auto split : {Split::train, Split::test}) {
            const auto n = static_cast<std::size_t>(split == Split::train ? cfg.n_per_framework : cfg.n_test);
            const auto split_tag = static_cast<std::uint64_t>(split == Split::train ? 0 : 1);
            Rng label_rng(derive_seed(cfg.seed, {0x6C6162ULL, index_of(f), split_tag}));
            std::vector<std::uint8_t> labels(n);
            for (auto& y : labels) y = label_rng.bernoulli(0.5) ? 1 : 0;
            std::vector<std::string> ids(n);
            for (std::size_t i = 0; i < n; ++i) ids[i] = synth_scenario_id(f, split, i);

            const auto& u = out.directions[index_of(f)];
            for (int layer = 0; layer < cfg.n_layers; ++layer) {
                Rng rng(derive_seed(cfg.seed, {0x6E6F6973ULL, index_of(f), split_tag,
                                               static_cast<std::uint64_t>(layer)}));
                ActivationSet set;
                set.model_id = cfg.model_id;
                set.layer = layer;
                set.framework = f;
                set.n = n;
                set.d = d;
                set.labels = labels;
                set.scenario_ids = ids;
                set.matrix.resize(n * d);
                const double amp = cfg.signal_strength * cfg.onset(layer);
                for (std::size_t i = 0; i < n; ++i) {
                    const double sign = labels[i] != 0 ? 1.0 : -1.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double v = sign * amp * u[static_cast<Eigen::Index>(j)] + cfg.noise_stdev * rng.normal();
                        set.matrix[i * d + j] = static_cast<float>(v);
                    }
                }
                out.sets[SynthDataset::index(f, split, layer)] = std::move(set);
            }
        }
    }
    return out;
}

/// Probability of choice A for a scenario with conflict score C under
/// coupling kappa: 0.5 + (1 - C min(kappa, 1)) 0.5, clipped to [0.5, 1].
[[nodiscard]] inline double behavior_choice_probability(double score, double kappa)
{
    const double coupling = std::min(kappa, 1.0);
    return std::clamp(0.5 + (1.0 - score * coupling) * 0.5, 0.5, 1.0);
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline constexpr std::array<const char*, 4> kResponseTemplates = {
    "(%c) After weighing both options, this is the one I would pick.",
    "I would go with (%c). It seems the more defensible course here.",
    "My choice is (%c), although the other option has some merit.",
    "Considering the situation carefully, (%c) is my answer.",
};

} // namespace detail

struct ScoredScenario {
    std::string scenario_id;
    double score{0.0};
};

/// Emits `samples_per_scenario` templated responses per scenario, each
/// carrying an explicit "(A)"/"(B)" marker. Per-scenario streams are keyed by
/// the scenario id, so output does not depend on input order.
inline std::vector<Generation> simulate_behavior(std::span<const ScoredScenario> scenarios, double kappa,
                                                 int samples_per_scenario, std::uint64_t seed)
{
    std::vector<Generation> out;
    out.reserve(scenarios.size() * static_cast<std::size_t>(std::max(samples_per_scenario, 0)));
    for (const auto& s : scenarios) {
        Rng rng(derive_seed(seed, {0x626568ULL, detail::fnv1a(s.scenario_id)}));
        const double p_a = behavior_choice_probability(s.score, kappa);
        for (int k = 0; k < samples_per_scenario; ++k) {
            const char letter = rng.bernoulli(p_a) ? 'A' : 'B';
            const auto* tmpl = detail::kResponseTemplates[rng.index(detail::kResponseTemplates.size())];
            char buf[128];
            std::snprintf(buf, sizeof(buf), tmpl, letter);
            out.push_back({s.scenario_id, k, buf});
        }
    }
    return out;
}

} // namespace probeforge

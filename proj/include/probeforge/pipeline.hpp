#pragma once

// Workflow commands behind the `probeforge` CLI. Every command reads its
// inputs, computes in memory, and writes outputs under the run directory from
// a single thread.
//
// Dataset directory layout:
//   dataset.json                       {model_id, n_layers, d, frameworks}
//   <framework>_<split>_L<layer>.actb  layer zero-padded to 3 digits
//   scenarios.jsonl                    optional

#include "activations.hpp"
#include "analysis.hpp"
#include "behavior.hpp"
#include "errors.hpp"
#include "format.hpp"
#include "framework.hpp"
#include "parallel.hpp"
#include "probe.hpp"
#include "scenario.hpp"
#include "stability.hpp"
#include "stats.hpp"
#include "synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace probeforge::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
    std::string scenarios;
    std::string activations;
    std::string out = "run";
    // Inputs produced by earlier commands; each defaults to its location under `out`.
    std::string probes;
    std::string generations;
    std::string manifest;
    std::vector<std::string> reports;
    std::string layers;
    std::string model;

    ProbeConfig probe;
    double transfer_depth = 0.65;
    double conflict_depth = 0.90;
    int ece_bins = 10;
    double hi_pct = 75.0;
    double lo_pct = 25.0;
    std::size_t sample_n = 100;
    Framework conflict_source = Framework::commonsense;
    double alpha = 0.05;
    int family_size = 3;
    double other_max_fraction = 0.2;
    int stability_seeds = 0;
    bool stability_permute = false;
    double kappa = 1.0;
    int samples_per_scenario = 10;
    std::uint64_t seed = 0;
    int jobs = default_jobs();

    [[nodiscard]] std::string probes_dir() const
    {
        return probes.empty() ? (fs::path(out) / "probes").string() : probes;
    }
    [[nodiscard]] std::string generations_path() const
    {
        return generations.empty() ? (fs::path(out) / "generations.jsonl").string() : generations;
    }
    [[nodiscard]] std::string manifest_path() const
    {
        return manifest.empty() ? (fs::path(out) / "manifest.json").string() : manifest;
    }

    void validate() const
    {
        probe.validate();
        if (!(transfer_depth > 0.0 && transfer_depth <= 1.0)) throw ConfigError("transfer_depth must be in (0, 1]");
        if (!(conflict_depth > 0.0 && conflict_depth <= 1.0)) throw ConfigError("conflict_depth must be in (0, 1]");
        if (ece_bins < 1) throw ConfigError("ece_bins must be >= 1");
        if (!(0.0 <= lo_pct && lo_pct <= hi_pct && hi_pct <= 100.0)) {
            throw ConfigError("percentiles must satisfy 0 <= lo_pct <= hi_pct <= 100");
        }
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
        if (family_size < 1) throw ConfigError("family_size must be >= 1");
        if (!(other_max_fraction >= 0.0 && other_max_fraction <= 1.0)) {
            throw ConfigError("other_max_fraction must be in [0, 1]");
        }
        if (stability_seeds == 1 || stability_seeds < 0) throw ConfigError("stability_seeds must be 0 or >= 2");
        if (!(kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
        if (samples_per_scenario < 1) throw ConfigError("samples_per_scenario must be >= 1");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
    }
};

/// Loads flat JSON keys over the defaults. Unknown keys are rejected.
inline void apply_config_json(RunConfig& c, const nlohmann::json& j)
{
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "scenarios") c.scenarios = v.get<std::string>();
            else if (key == "activations") c.activations = v.get<std::string>();
            else if (key == "out") c.out = v.get<std::string>();
            else if (key == "probes") c.probes = v.get<std::string>();
            else if (key == "generations") c.generations = v.get<std::string>();
            else if (key == "manifest") c.manifest = v.get<std::string>();
            else if (key == "reports") c.reports = v.get<std::vector<std::string>>();
            else if (key == "layers") c.layers = v.get<std::string>();
            else if (key == "model") c.model = v.get<std::string>();
            else if (key == "reg_C") c.probe.reg_C = v.get<double>();
            else if (key == "balanced_weights") c.probe.balanced_weights = v.get<bool>();
            else if (key == "population_stdev") c.probe.population_stdev = v.get<bool>();
            else if (key == "max_iter") c.probe.optimizer.max_iter = v.get<int>();
            else if (key == "memory") c.probe.optimizer.memory = v.get<int>();
            else if (key == "grad_tol") c.probe.optimizer.grad_tol = v.get<double>();
            else if (key == "wolfe_c1") c.probe.optimizer.wolfe_c1 = v.get<double>();
            else if (key == "wolfe_c2") c.probe.optimizer.wolfe_c2 = v.get<double>();
            else if (key == "transfer_depth") c.transfer_depth = v.get<double>();
            else if (key == "conflict_depth") c.conflict_depth = v.get<double>();
            else if (key == "ece_bins") c.ece_bins = v.get<int>();
            else if (key == "hi_pct") c.hi_pct = v.get<double>();
            else if (key == "lo_pct") c.lo_pct = v.get<double>();
            else if (key == "sample_n") c.sample_n = v.get<std::size_t>();
            else if (key == "conflict_source") c.conflict_source = parse_framework(v.get<std::string>());
            else if (key == "alpha") c.alpha = v.get<double>();
            else if (key == "family_size") c.family_size = v.get<int>();
            else if (key == "other_max_fraction") c.other_max_fraction = v.get<double>();
            else if (key == "stability_seeds") c.stability_seeds = v.get<int>();
            else if (key == "stability_permute") c.stability_permute = v.get<bool>();
            else if (key == "kappa") c.kappa = v.get<double>();
            else if (key == "samples_per_scenario") c.samples_per_scenario = v.get<int>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "jobs") c.jobs = v.get<int>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    } catch (const MalformedRecord& e) {
        throw ConfigError(e.what());
    }
    c.probe.seed = c.seed;
}

inline nlohmann::json read_json_file(const std::string& path, ErrorKind kind)
{
    std::ifstream in(path);
    if (!in) {
        if (kind == ErrorKind::config) throw ConfigError("cannot open " + path);
        throw FormatError("cannot open " + path);
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        if (kind == ErrorKind::config) throw ConfigError(path + ": " + e.what());
        throw FormatError(path + ": " + e.what());
    }
}

inline RunConfig load_run_config(const std::string& path)
{
    RunConfig c;
    apply_config_json(c, read_json_file(path, ErrorKind::config));
    return c;
}

// Files.

inline void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

inline std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string layer_tag(int layer)
{
    char buf[16];
    std::snprintf(buf, sizeof(buf), "L%03d", layer);
    return buf;
}

inline fs::path activation_path(const fs::path& dir, Framework f, Split s, int layer)
{
    return dir / (std::string(to_string(f)) + "_" + std::string(to_string(s)) + "_" + layer_tag(layer) + ".actb");
}

inline fs::path probe_path(const fs::path& dir, Framework f, int layer)
{
    return dir / (std::string(to_string(f)) + "_" + layer_tag(layer) + ".json");
}

struct DatasetInfo {
    std::string model_id;
    int n_layers{0};
    std::size_t d{0};
    std::vector<Framework> frameworks;
};

inline nlohmann::json to_json(const DatasetInfo& info)
{
    auto names = nlohmann::json::array();
    for (auto f : info.frameworks) names.push_back(to_string(f));
    return {{"model_id", info.model_id}, {"n_layers", info.n_layers}, {"d", info.d}, {"frameworks", names}};
}

inline DatasetInfo read_dataset_info(const std::string& dir)
{
    if (dir.empty()) throw ConfigError("no activation directory configured (--activations)");
    const auto path = fs::path(dir) / "dataset.json";
    if (!fs::exists(path)) throw FormatError("missing " + path.string());
    const auto j = read_json_file(path.string(), ErrorKind::data);
    DatasetInfo info;
    try {
        info.model_id = j.at("model_id").get<std::string>();
        info.n_layers = j.at("n_layers").get<int>();
        info.d = j.at("d").get<std::size_t>();
        for (const auto& f : j.at("frameworks")) info.frameworks.push_back(parse_framework(f.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (info.n_layers < 1) throw IntegrityError(path.string() + ": n_layers must be >= 1");
    std::sort(info.frameworks.begin(), info.frameworks.end());
    return info;
}

/// Loads one activation file; a missing file is a data error naming the layer.
inline ActivationSet load_set(const std::string& dir, const DatasetInfo& info, Framework f, Split s, int layer)
{
    const auto path = activation_path(dir, f, s, layer);
    if (!fs::exists(path)) {
        throw IntegrityError("missing activation file for layer " + std::to_string(layer) + ": " + path.string());
    }
    auto set = read_activation_file(path.string());
    if (set.layer != layer || set.framework != f) {
        throw IntegrityError(path.string() + ": header does not match file name");
    }
    if (set.d != info.d) throw IntegrityError(path.string() + ": width differs from dataset.json");
    return set;
}

inline void require_files(const std::string& dir, const std::vector<Framework>& fws, const std::vector<int>& layers)
{
    for (int layer : layers) {
        for (auto f : fws) {
            for (auto s : {Split::train, Split::test}) {
                const auto path = activation_path(dir, f, s, layer);
                if (!fs::exists(path)) {
                    throw IntegrityError("missing activation file for layer " + std::to_string(layer) + ": " +
                                         path.string());
                }
            }
        }
    }
}

/// Comma-separated items: "N", "a..b" (end exclusive), or "P%" (floor of
/// P/100 * n_layers). Result is sorted and de-duplicated.
inline std::vector<int> parse_layers(const std::string& selection, int n_layers)
{
    std::set<int> out;
    std::stringstream ss(selection);
    std::string item;
    auto to_int = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(s, &used);
            if (used != s.size()) throw ConfigError("bad layer selection item '" + s + "'");
            return v;
        } catch (const std::logic_error&) {
            throw ConfigError("bad layer selection item '" + s + "'");
        }
    };
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item.empty()) continue;
        if (const auto dots = item.find(".."); dots != std::string::npos) {
            const int lo = to_int(item.substr(0, dots));
            const int hi = to_int(item.substr(dots + 2));
            if (hi <= lo) throw ConfigError("empty layer range '" + item + "'");
            for (int l = lo; l < hi; ++l) out.insert(l);
        } else if (item.back() == '%') {
            double pct = 0.0;
            try {
                pct = std::stod(item.substr(0, item.size() - 1));
            } catch (const std::logic_error&) {
                throw ConfigError("bad layer selection item '" + item + "'");
            }
            out.insert(depth_to_layer(n_layers, pct / 100.0, DepthMode::floor));
        } else {
            out.insert(to_int(item));
        }
    }
    if (out.empty()) throw ConfigError("layer selection '" + selection + "' selects no layers");
    for (int l : out) {
        if (l < 0 || l >= n_layers) {
            throw ConfigError("layer " + std::to_string(l) + " out of range for a " + std::to_string(n_layers) +
                              "-layer model");
        }
    }
    return {out.begin(), out.end()};
}

inline std::vector<int> resolve_layers(const RunConfig& cfg, const DatasetInfo& info)
{
    if (cfg.layers.empty()) {
        std::vector<int> all(static_cast<std::size_t>(info.n_layers));
        for (int l = 0; l < info.n_layers; ++l) all[static_cast<std::size_t>(l)] = l;
        return all;
    }
    return parse_layers(cfg.layers, info.n_layers);
}

inline int single_layer(const RunConfig& cfg, const DatasetInfo& info, double fraction, DepthMode mode)
{
    if (!cfg.layers.empty()) {
        const auto layers = parse_layers(cfg.layers, info.n_layers);
        if (layers.size() != 1) throw ConfigError("this command takes exactly one layer");
        return layers.front();
    }
    const int layer = depth_to_layer(info.n_layers, fraction, mode);
    if (layer >= info.n_layers) {
        throw ConfigError("depth fraction maps to layer " + std::to_string(layer) + ", beyond the last layer");
    }
    return layer;
}

/// Cross-checks ids, frameworks and labels of an activation set against the
/// scenario file, when one is configured.
inline void check_against_scenarios(const std::map<std::string, ScenarioRecord>& scenarios, const ActivationSet& set)
{
    for (std::size_t i = 0; i < set.n; ++i) {
        const auto it = scenarios.find(set.scenario_ids[i]);
        if (it == scenarios.end()) {
            throw IntegrityError("scenario '" + set.scenario_ids[i] + "' missing from scenario file");
        }
        if (it->second.framework != set.framework || it->second.label != set.labels[i]) {
            throw IntegrityError("scenario '" + set.scenario_ids[i] + "' disagrees with scenario file");
        }
    }
}

inline std::map<std::string, ScenarioRecord> load_scenario_index(const RunConfig& cfg)
{
    std::map<std::string, ScenarioRecord> out;
    if (cfg.scenarios.empty()) return out;
    if (!fs::exists(cfg.scenarios)) throw ConfigError("scenario file not found: " + cfg.scenarios);
    for (auto& r : read_scenarios(cfg.scenarios)) {
        auto id = r.id;
        out.emplace(std::move(id), std::move(r));
    }
    return out;
}

// synth

/// Placeholder scenario texts matching the synthetic activation ids.
inline std::vector<ScenarioRecord> synth_scenarios(const SynthDataset& data)
{
    std::vector<ScenarioRecord> out;
    for (auto f : kFrameworks) {
        for (auto s : {Split::train, Split::test}) {
            const auto& set = data.get(f, s, 0);
            for (std::size_t i = 0; i < set.n; ++i) {
                ScenarioRecord r;
                r.id = set.scenario_ids[i];
                r.framework = f;
                r.label = set.labels[i];
                r.split = s;
                const std::string text = "Synthetic scenario " + r.id + ".";
                switch (f) {
                case Framework::deontology: r.fields = {{"scenario", text}, {"excuse", "Synthetic excuse."}}; break;
                case Framework::utilitarianism:
                    r.fields = {{"pleasant", text + " It goes well."}, {"unpleasant", text + " It goes badly."}};
                    break;
                case Framework::virtue: r.fields = {{"behavior", text}, {"trait", "synthetic"}}; break;
                case Framework::justice:
                case Framework::commonsense: r.fields = {{"scenario", text}}; break;
                }
                out.push_back(std::move(r));
            }
        }
    }
    return out;
}

inline void cmd_synth(const SynthConfig& sc, const std::string& out_dir, std::ostream& log)
{
    const auto data = generate_activations(sc);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    DatasetInfo info{sc.model_id, sc.n_layers, static_cast<std::size_t>(sc.d), {kFrameworks.begin(), kFrameworks.end()}};
    write_text(dir / "dataset.json", to_json(info).dump(2) + "\n");
    write_text(dir / "synth_config.json", to_json(sc).dump(2) + "\n");
    for (const auto& set : data.sets) {
        const auto split = set.scenario_ids.front().find("-train-") != std::string::npos ? Split::train : Split::test;
        write_activation_file(set, activation_path(dir, set.framework, split, set.layer).string());
    }
    write_scenarios(synth_scenarios(data), (dir / "scenarios.jsonl").string());
    log << "synth: wrote " << data.sets.size() << " activation files to " << dir.string() << "\n";
}

struct Manifest {
    std::string model_id;
    int layer{0};
    Framework source{Framework::commonsense};
    double hi_threshold{0.0};
    double lo_threshold{0.0};
    std::vector<ConflictRecord> scenarios; ///< group = pool the record was drawn for
};

inline Manifest read_manifest(const std::string& path)
{
    if (!fs::exists(path)) throw IntegrityError("missing manifest " + path);
    const auto j = read_json_file(path, ErrorKind::data);
    Manifest m;
    try {
        m.model_id = j.value("model_id", std::string());
        m.layer = j.at("layer").get<int>();
        m.source = parse_framework(j.at("source").get<std::string>());
        m.hi_threshold = j.at("hi_threshold").get<double>();
        m.lo_threshold = j.at("lo_threshold").get<double>();
        for (const auto& r : j.at("scenarios")) m.scenarios.push_back(conflict_from_json(r));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return m;
}

inline void cmd_synth_generations(const RunConfig& cfg, std::ostream& log)
{
    const auto manifest = read_manifest(cfg.manifest_path());
    std::vector<ScoredScenario> scored;
    for (const auto& r : manifest.scenarios) scored.push_back({r.scenario_id, r.score});
    const auto gens = simulate_behavior(scored, cfg.kappa, cfg.samples_per_scenario, cfg.seed);
    const auto path = fs::path(cfg.out) / "generations.jsonl";
    fs::create_directories(cfg.out);
    write_generations(gens, path.string());
    log << "synth: wrote " << gens.size() << " simulated generations to " << path.string() << "\n";
}

// train / sweep

inline void cmd_train(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const auto info = read_dataset_info(cfg.activations);
    const auto layers = resolve_layers(cfg, info);
    require_files(cfg.activations, info.frameworks, layers);
    const auto scenarios = load_scenario_index(cfg);

    struct Job {
        Framework f;
        int layer;
        ProbeModel model;
        EvalReport report;
        std::size_t n_train{0};
    };
    std::vector<Job> jobs;
    for (auto f : info.frameworks) {
        for (int l : layers) jobs.push_back({f, l, {}, {}, 0});
    }
    parallel_for(jobs.size(), cfg.jobs, [&](std::size_t k) {
        auto& job = jobs[k];
        const auto train = load_set(cfg.activations, info, job.f, Split::train, job.layer);
        const auto test = load_set(cfg.activations, info, job.f, Split::test, job.layer);
        if (!scenarios.empty()) {
            check_against_scenarios(scenarios, train);
            check_against_scenarios(scenarios, test);
        }
        job.model = train_probe(train, cfg.probe);
        job.report = evaluate(job.model, test, cfg.ece_bins);
        job.n_train = train.n;
    });

    const auto probe_dir = fs::path(cfg.out) / "probes";
    fs::create_directories(probe_dir);
    std::string csv = "framework,layer,n_train,n_test,accuracy,mean_confidence,ece,converged,iterations\n";
    for (const auto& job : jobs) {
        save_probe(job.model, probe_path(probe_dir, job.f, job.layer).string());
        csv += std::string(to_string(job.f)) + "," + std::to_string(job.layer) + "," + std::to_string(job.n_train) +
               "," + std::to_string(job.report.n) + "," + format_double(job.report.accuracy) + "," +
               format_double(job.report.mean_confidence) + "," + format_double(job.report.ece) + "," +
               (job.model.converged ? "true" : "false") + "," + std::to_string(job.model.iterations) + "\n";
    }
    write_text(fs::path(cfg.out) / "train_summary.csv", csv);
    log << "train: wrote " << jobs.size() << " probes to " << probe_dir.string() << "\n";
}

inline void cmd_sweep(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const auto info = read_dataset_info(cfg.activations);
    const auto layers = resolve_layers(cfg, info);
    require_files(cfg.activations, info.frameworks, layers);

    std::vector<LayerSweepResult> results;
    for (auto f : info.frameworks) {
        std::vector<ActivationSet> train;
        std::vector<ActivationSet> test;
        for (int l : layers) {
            train.push_back(load_set(cfg.activations, info, f, Split::train, l));
            test.push_back(load_set(cfg.activations, info, f, Split::test, l));
        }
        results.push_back(layer_sweep(train, test, cfg.probe, cfg.ece_bins, cfg.jobs));
    }

    std::string csv = "framework,layer,accuracy,mean_confidence,ece,converged\n";
    for (const auto& r : results) {
        for (const auto& e : r.layers) {
            csv += std::string(to_string(r.framework)) + "," + std::to_string(e.layer) + "," +
                   format_double(e.report.accuracy) + "," + format_double(e.report.mean_confidence) + "," +
                   format_double(e.report.ece) + "," + (e.converged ? "true" : "false") + "\n";
        }
    }
    std::string summary = "layer,mean_accuracy,max_accuracy,mean_confidence,max_confidence\n";
    for (std::size_t k = 0; k < layers.size(); ++k) {
        double acc_sum = 0.0;
        double acc_max = 0.0;
        double conf_sum = 0.0;
        double conf_max = 0.0;
        for (const auto& r : results) {
            const auto& rep = r.layers[k].report;
            acc_sum += rep.accuracy;
            acc_max = std::max(acc_max, rep.accuracy);
            conf_sum += rep.mean_confidence;
            conf_max = std::max(conf_max, rep.mean_confidence);
        }
        const auto m = static_cast<double>(results.size());
        summary += std::to_string(layers[k]) + "," + format_double(acc_sum / m) + "," + format_double(acc_max) + "," +
                   format_double(conf_sum / m) + "," + format_double(conf_max) + "\n";
    }
    write_text(fs::path(cfg.out) / "sweep.csv", csv);
    write_text(fs::path(cfg.out) / "sweep_summary.csv", summary);
    log << "sweep: " << results.size() << " frameworks x " << layers.size() << " layers\n";
}

// transfer

inline void cmd_transfer(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const auto info = read_dataset_info(cfg.activations);
    const int layer = single_layer(cfg, info, cfg.transfer_depth, DepthMode::floor);
    require_files(cfg.activations, info.frameworks, {layer});
    const auto scenarios = load_scenario_index(cfg);

    std::vector<ActivationSet> train;
    std::vector<ActivationSet> test;
    for (auto f : info.frameworks) {
        train.push_back(load_set(cfg.activations, info, f, Split::train, layer));
        test.push_back(load_set(cfg.activations, info, f, Split::test, layer));
        if (!scenarios.empty()) {
            check_against_scenarios(scenarios, train.back());
            check_against_scenarios(scenarios, test.back());
        }
    }
    const auto m = transfer_matrix(train, test, cfg.probe, cfg.ece_bins, cfg.jobs);
    const fs::path out(cfg.out);
    for (auto metric : {TransferMetric::accuracy, TransferMetric::confidence, TransferMetric::ece}) {
        write_text(out / ("transfer_" + std::string(to_string(metric)) + ".csv"), transfer_csv(m, metric));
    }
    auto j = to_json(m);
    j["model_id"] = info.model_id;
    write_text(out / "transfer.json", j.dump(2) + "\n");
    log << "transfer: " << m.frameworks.size() << "x" << m.frameworks.size() << " matrix at layer " << layer << "\n";
}

// conflict

inline void cmd_conflict(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const auto info = read_dataset_info(cfg.activations);
    const int layer = single_layer(cfg, info, cfg.conflict_depth, DepthMode::round);
    const fs::path probe_dir = cfg.probes_dir();
    for (auto f : {Framework::deontology, Framework::utilitarianism}) {
        if (!fs::exists(probe_path(probe_dir, f, layer))) {
            throw IntegrityError("missing probe for conflict layer " + std::to_string(layer) + ": " +
                                 probe_path(probe_dir, f, layer).string());
        }
    }
    const auto deon = load_probe(probe_path(probe_dir, Framework::deontology, layer).string());
    const auto util = load_probe(probe_path(probe_dir, Framework::utilitarianism, layer).string());
    const auto eval_set = load_set(cfg.activations, info, cfg.conflict_source, Split::test, layer);
    if (eval_set.n < 4) throw EmptyData("conflict scoring needs at least 4 scenarios");

    const auto sel = select_conflict_groups(score_conflicts(deon, util, eval_set), cfg.hi_pct, cfg.lo_pct,
                                            cfg.sample_n, cfg.seed);
    std::string jsonl;
    for (const auto& r : sel.records) jsonl += to_json(r).dump() + "\n";
    write_text(fs::path(cfg.out) / "conflicts.jsonl", jsonl);

    auto sampled = nlohmann::json::array();
    for (auto [indices, group] : {std::pair{&sel.sampled_high, ConflictGroup::high},
                                  std::pair{&sel.sampled_low, ConflictGroup::low}}) {
        for (auto i : *indices) {
            auto r = sel.records[i];
            r.group = group;
            sampled.push_back(to_json(r));
        }
    }
    const nlohmann::json manifest = {{"model_id", info.model_id},
                                     {"layer", layer},
                                     {"source", to_string(cfg.conflict_source)},
                                     {"hi_pct", cfg.hi_pct},
                                     {"lo_pct", cfg.lo_pct},
                                     {"hi_threshold", sel.hi_threshold},
                                     {"lo_threshold", sel.lo_threshold},
                                     {"sample_n", cfg.sample_n},
                                     {"seed", cfg.seed},
                                     {"n_records", sel.records.size()},
                                     {"n_high", sel.sampled_high.size()},
                                     {"n_low", sel.sampled_low.size()},
                                     {"scenarios", std::move(sampled)}};
    write_text(fs::path(cfg.out) / "manifest.json", manifest.dump(2) + "\n");
    log << "conflict: scored " << sel.records.size() << " scenarios at layer " << layer << ", sampled "
        << sel.sampled_high.size() << " high / " << sel.sampled_low.size() << " low\n";
}

// behave / stats

inline void cmd_behave(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const auto manifest = read_manifest(cfg.manifest_path());
    if (!fs::exists(cfg.generations_path())) throw IntegrityError("missing generations file " + cfg.generations_path());
    const auto records = build_behavior_records(read_generations(cfg.generations_path()));

    BehaviorAnalysisOptions opt;
    opt.model = !cfg.model.empty() ? cfg.model : !manifest.model_id.empty() ? manifest.model_id : "model";
    opt.other_max_fraction = cfg.other_max_fraction;
    opt.family_alpha = cfg.alpha;
    opt.family_size = cfg.family_size;
    const auto report = analyze_conflict_entropy(manifest.scenarios, records, opt);

    std::set<std::string> wanted;
    for (const auto& r : manifest.scenarios) wanted.insert(r.scenario_id);
    std::string jsonl;
    for (const auto& r : records) {
        if (wanted.contains(r.scenario_id)) jsonl += to_json(r).dump() + "\n";
    }
    write_text(fs::path(cfg.out) / "behavior.jsonl", jsonl);
    write_text(fs::path(cfg.out) / "behave_report.json", to_json(report).dump(2) + "\n");
    log << "behave: r=" << report.r << " p=" << report.p << " n=" << report.n
        << (report.significant ? " (significant)" : " (not significant)") << "\n";
}

inline void cmd_stats(const RunConfig& cfg, std::ostream& log)
{
    cfg.validate();
    auto paths = cfg.reports;
    if (paths.empty()) paths.push_back((fs::path(cfg.out) / "behave_report.json").string());

    std::vector<CorrelationReport> reports;
    std::vector<double> pvals;
    for (const auto& p : paths) {
        if (!fs::exists(p)) throw IntegrityError("missing stats report " + p);
        reports.push_back(correlation_report_from_json(read_json_file(p, ErrorKind::data)));
        pvals.push_back(reports.back().p);
    }
    // The family is at least `family_size` tests even when fewer reports are supplied.
    const auto k = std::max(reports.size(), static_cast<std::size_t>(cfg.family_size));
    pvals.resize(k, 1.0);
    const auto bf = stats::bonferroni(pvals, cfg.alpha);
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        auto r = reports[i];
        r.alpha_corrected = bf.alpha_corrected;
        r.significant = bf.significant[i] && !r.degenerate;
        rows.push_back(to_json(r));
    }
    const nlohmann::json table = {{"family_alpha", cfg.alpha},
                                  {"alpha_corrected", bf.alpha_corrected},
                                  {"k", k},
                                  {"rows", std::move(rows)}};
    write_text(fs::path(cfg.out) / "stats.json", table.dump(2) + "\n");
    log << "stats: " << reports.size() << " report(s), corrected alpha " << bf.alpha_corrected << "\n";

    if (cfg.stability_seeds >= 2) {
        const auto info = read_dataset_info(cfg.activations);
        const int layer = single_layer(cfg, info, cfg.conflict_depth, DepthMode::round);
        const auto deon = load_set(cfg.activations, info, Framework::deontology, Split::train, layer);
        const auto util = load_set(cfg.activations, info, Framework::utilitarianism, Split::train, layer);
        const auto eval_set = load_set(cfg.activations, info, cfg.conflict_source, Split::test, layer);
        StabilityOptions opt;
        opt.n_seeds = cfg.stability_seeds;
        opt.seed = cfg.seed;
        opt.permute_labels = cfg.stability_permute;
        opt.jobs = cfg.jobs;
        const auto st = bootstrap_stability(deon, util, cfg.probe, eval_set, opt);
        const nlohmann::json j = {{"layer", layer},
                                  {"n_seeds", cfg.stability_seeds},
                                  {"mean_pairwise_r", st.mean_pairwise_r},
                                  {"bottom_quartile_iou", st.bottom_quartile_iou},
                                  {"pairwise_r", st.pairwise_r},
                                  {"pairwise_iou", st.pairwise_iou}};
        write_text(fs::path(cfg.out) / "stability.json", j.dump(2) + "\n");
        log << "stats: bootstrap mean pairwise r=" << st.mean_pairwise_r << " IoU=" << st.bottom_quartile_iou << "\n";
    }
}

// report

namespace detail {

inline std::string fixed(double v, int digits = 3)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

inline std::string p_text(double p)
{
    if (p < 0.001) return "<0.001";
    return fixed(p, 3);
}

inline std::string report_row(const nlohmann::json& r)
{
    return "| " + r.at("model").get<std::string>() + " | " + fixed(r.at("r").get<double>()) + " | [" +
           fixed(r.at("ci").at(0).get<double>(), 2) + ", " + fixed(r.at("ci").at(1).get<double>(), 2) + "] | " +
           p_text(r.at("p").get<double>()) + " | " + fixed(r.at("d").get<double>(), 2) + " | " +
           std::to_string(r.at("n").get<std::size_t>()) + " | " + fixed(r.at("alpha_corrected").get<double>(), 4) +
           " | " + (r.at("significant").get<bool>() ? "yes" : "no") + " |\n";
}

} // namespace detail

/// Markdown summary of whatever outputs exist in the run directory.
inline std::string render_report(const fs::path& run)
{
    std::string md = "# Probe analysis report\n";

    const auto stats_path = run / "stats.json";
    const auto behave_path = run / "behave_report.json";
    if (fs::exists(stats_path) || fs::exists(behave_path)) {
        md += "\n## Conflict-entropy statistics\n\n";
        md += "| Model | r | 95% CI | p | d | n | alpha (corrected) | Significant |\n";
        md += "|---|---|---|---|---|---|---|---|\n";
        if (fs::exists(stats_path)) {
            const auto table = read_json_file(stats_path.string(), ErrorKind::data);
            for (const auto& r : table.at("rows")) md += detail::report_row(r);
        } else {
            md += detail::report_row(read_json_file(behave_path.string(), ErrorKind::data));
        }
    }

    const auto transfer_path = run / "transfer.json";
    if (fs::exists(transfer_path)) {
        const auto t = read_json_file(transfer_path.string(), ErrorKind::data);
        md += "\n## Cross-framework transfer (layer " + std::to_string(t.at("layer").get<int>()) + ")\n";
        std::vector<std::string> names;
        for (const auto& f : t.at("frameworks")) names.push_back(f.get<std::string>());
        for (const char* metric : {"accuracy", "confidence", "ece"}) {
            md += std::string("\n### ") + metric + "\n\n| train \\ test |";
            for (const auto& n : names) md += " " + n + " |";
            md += "\n|---|";
            for (std::size_t k = 0; k < names.size(); ++k) md += "---|";
            md += "\n";
            const auto& rows = t.at(metric);
            for (std::size_t i = 0; i < names.size(); ++i) {
                md += "| " + names[i] + " |";
                for (std::size_t j = 0; j < names.size(); ++j) md += " " + detail::fixed(rows.at(i).at(j).get<double>()) + " |";
                md += "\n";
            }
        }
    }

    const auto sweep_path = run / "sweep_summary.csv";
    if (fs::exists(sweep_path)) {
        md += "\n## Layer sweep\n\n```\n" + read_text(sweep_path) + "```\n";
    }

    const auto manifest_path = run / "manifest.json";
    if (fs::exists(manifest_path)) {
        const auto m = read_json_file(manifest_path.string(), ErrorKind::data);
        md += "\n## Conflict selection\n\n";
        md += "- layer: " + std::to_string(m.at("layer").get<int>()) + "\n";
        md += "- scored scenarios: " + std::to_string(m.at("n_records").get<std::size_t>()) + "\n";
        md += "- high threshold (p" + detail::fixed(m.at("hi_pct").get<double>(), 0) +
              "): " + detail::fixed(m.at("hi_threshold").get<double>(), 4) + "\n";
        md += "- low threshold (p" + detail::fixed(m.at("lo_pct").get<double>(), 0) +
              "): " + detail::fixed(m.at("lo_threshold").get<double>(), 4) + "\n";
        md += "- sampled: " + std::to_string(m.at("n_high").get<std::size_t>()) + " high, " +
              std::to_string(m.at("n_low").get<std::size_t>()) + " low\n";
    }

    const auto stability_path = run / "stability.json";
    if (fs::exists(stability_path)) {
        const auto s = read_json_file(stability_path.string(), ErrorKind::data);
        md += "\n## Bootstrap stability\n\n";
        md += "- seeds: " + std::to_string(s.at("n_seeds").get<int>()) + "\n";
        md += "- mean pairwise r: " + detail::fixed(s.at("mean_pairwise_r").get<double>()) + "\n";
        md += "- bottom-quartile IoU: " + detail::fixed(s.at("bottom_quartile_iou").get<double>()) + "\n";
    }
    return md;
}

inline void cmd_report(const RunConfig& cfg, std::ostream& log)
{
    if (!fs::is_directory(cfg.out)) throw ConfigError("run directory not found: " + cfg.out);
    write_text(fs::path(cfg.out) / "report.md", render_report(cfg.out));
    log << "report: wrote " << (fs::path(cfg.out) / "report.md").string() << "\n";
}

} // namespace probeforge::pipeline

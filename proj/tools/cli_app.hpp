#pragma once

#include <probeforge/pipeline.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace probeforge::cli {

struct Flags {
    std::string config;
    std::optional<std::string> layers;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> out;
    std::optional<std::string> activations;
    std::optional<std::string> scenarios;
    std::optional<std::string> probes;
    std::optional<std::string> generations;
    std::optional<std::string> manifest;
    std::vector<std::string> reports;
    std::optional<std::string> model;
    std::optional<double> kappa;
    std::optional<int> samples;
    std::optional<int> stability_seeds;
    bool permute_labels = false;
};

inline void add_flags(CLI::App& sub, Flags& f)
{
    sub.add_option("--config", f.config, "JSON config file (SynthConfig for synth)");
    sub.add_option("--layers", f.layers, "layers: N, a..b (end exclusive), P% (floor), comma lists");
    sub.add_option("--seed", f.seed, "root seed");
    sub.add_option("--jobs", f.jobs, "worker threads (default $PROBEFORGE_JOBS or 1)");
    sub.add_option("--out", f.out, "output directory");
    sub.add_option("--activations", f.activations, "activation dataset directory");
    sub.add_option("--scenarios", f.scenarios, "scenario JSONL to cross-check activation ids");
    sub.add_option("--probes", f.probes, "probe directory (default <out>/probes)");
    sub.add_option("--generations", f.generations, "generations JSONL (default <out>/generations.jsonl)");
    sub.add_option("--manifest", f.manifest, "conflict manifest (default <out>/manifest.json)");
    sub.add_option("--report", f.reports, "behave report JSON; repeat for each model");
    sub.add_option("--model", f.model, "model name in the behave report");
    sub.add_option("--kappa", f.kappa, "behavioral coupling for simulated generations");
    sub.add_option("--samples", f.samples, "simulated generations per scenario");
    sub.add_option("--stability-seeds", f.stability_seeds, "bootstrap seeds for stability (0 disables)");
    sub.add_flag("--permute-labels", f.permute_labels, "permute labels per bootstrap seed");
}

inline pipeline::RunConfig build_run_config(const Flags& f)
{
    pipeline::RunConfig c = f.config.empty() ? pipeline::RunConfig{} : pipeline::load_run_config(f.config);
    if (f.layers) c.layers = *f.layers;
    if (f.seed) {
        c.seed = *f.seed;
        c.probe.seed = *f.seed;
    }
    if (f.jobs) c.jobs = *f.jobs;
    if (f.out) c.out = *f.out;
    if (f.activations) c.activations = *f.activations;
    if (f.scenarios) c.scenarios = *f.scenarios;
    if (f.probes) c.probes = *f.probes;
    if (f.generations) c.generations = *f.generations;
    if (f.manifest) c.manifest = *f.manifest;
    if (!f.reports.empty()) c.reports = f.reports;
    if (f.model) c.model = *f.model;
    if (f.kappa) c.kappa = *f.kappa;
    if (f.samples) c.samples_per_scenario = *f.samples;
    if (f.stability_seeds) c.stability_seeds = *f.stability_seeds;
    if (f.permute_labels) c.stability_permute = true;
    c.validate();
    return c;
}

inline void run_synth(const Flags& f, std::ostream& log)
{
    if (f.manifest) {
        auto c = build_run_config(f);
        if (!f.kappa && !f.config.empty()) {
            c.kappa = synth_config_from_json(pipeline::read_json_file(f.config, ErrorKind::config)).behavior_coupling;
        }
        pipeline::cmd_synth_generations(c, log);
        return;
    }
    if (f.config.empty()) throw ConfigError("synth needs --config (SynthConfig JSON) or --manifest");
    auto sc = synth_config_from_json(pipeline::read_json_file(f.config, ErrorKind::config));
    if (f.seed) sc.seed = *f.seed;
    pipeline::cmd_synth(sc, f.out.value_or("synth"), log);
}

/// Parses `args` (without the program name), runs the subcommand and returns
/// the process exit code: 0 success, 2 usage or config, 3 data.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Linear-probe analysis of moral-framework representations"};
    app.require_subcommand(1);
    Flags flags;

    using Command = std::function<void(const pipeline::RunConfig&, std::ostream&)>;
    const std::vector<std::pair<std::string, Command>> commands = {
        {"train", pipeline::cmd_train},       {"sweep", pipeline::cmd_sweep},
        {"transfer", pipeline::cmd_transfer}, {"conflict", pipeline::cmd_conflict},
        {"behave", pipeline::cmd_behave},     {"stats", pipeline::cmd_stats},
        {"report", pipeline::cmd_report},
    };
    const std::map<std::string, std::string> help = {
        {"synth", "generate a synthetic activation dataset, or simulated generations with --manifest"},
        {"train", "train one probe per (framework, layer)"},
        {"sweep", "per-layer accuracy and confidence for every framework"},
        {"transfer", "5x5 cross-framework transfer matrices at one layer"},
        {"conflict", "score conflicts and sample high/low groups"},
        {"behave", "choice entropy and conflict-entropy statistics"},
        {"stats", "Bonferroni table across behave reports; optional bootstrap stability"},
        {"report", "Markdown summary of a run directory"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, text] : help) {
        auto* sub = app.add_subcommand(name, text);
        add_flags(*sub, flags);
        subs[name] = sub;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (subs["synth"]->parsed()) {
            run_synth(flags, out);
            return 0;
        }
        for (const auto& [name, fn] : commands) {
            if (subs[name]->parsed()) {
                fn(build_run_config(flags), out);
                return 0;
            }
        }
        err << "error: no subcommand\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::config ? 2 : 3;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace probeforge::cli

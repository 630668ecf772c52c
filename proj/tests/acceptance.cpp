// Acceptance runner: one PASS/FAIL line per primary criterion.

#include "oracles.hpp"

#include "cli_app.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

using namespace probeforge;
using namespace testing_support;

namespace {

struct Outcome {
    bool pass{false};
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

Outcome optimizer_criterion()
{
    const auto p = make_problem(200, 20, 2025);
    const double C = 0.01;
    const auto obj = library_objective(p, C);

    const auto t0 = Clock::now();
    const auto res = minimize(obj, Vector::Zero(21), OptimizerConfig{});
    std::mt19937 gen(99);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        Vector t(21);
        for (auto& v : t) v = normal(gen);
        worst = std::max(worst, check_gradient(obj, t, 1e-5));
    }
    const double elapsed = seconds_since(t0);

    const double oracle = gradient_descent_oracle(p, C);
    const double rel = std::abs(res.loss - oracle) / std::abs(oracle);
    return {rel <= 1e-6 && worst < 1e-4 && elapsed < 10.0,
            fmt("rel loss gap %.2e (<=1e-6), max grad rel err %.2e (<1e-4), %.3fs (<10s)", rel, worst, elapsed)};
}

Outcome probe_criterion()
{
    double worst_gap = 0.0;
    for (double C : {1.0, 0.01}) {
        ProbeConfig cfg;
        cfg.reg_C = C;
        const auto m = train_probe(MatrixView{kTinyX, 8, 2}, kTinyY, cfg);
        worst_gap = std::max(worst_gap, std::abs(m.train_loss - grid_oracle(C)));
    }

    const std::vector<std::uint8_t> labels = {1, 1, 0, 0, 0, 0, 0, 0};
    const auto w = class_weights(labels);
    const bool weights_ok = std::abs(w[0] - 2.0) < 1e-12 && std::abs(w[2] - 8.0 / 12.0) < 1e-12;

    const auto set = to_set(make_problem(100, 10, 5));
    const auto z = fit_standardizer(set.view()).transform(set.view());
    double worst_std = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double mu = z.col(j).mean();
        const double sd = std::sqrt((z.col(j).array() - mu).square().mean());
        worst_std = std::max({worst_std, std::abs(mu), std::abs(sd - 1.0)});
    }
    return {worst_gap <= 1e-4 && weights_ok && worst_std <= 1e-10,
            fmt("grid gap %.2e (<=1e-4), weights %.4f/%.4f, standardizer dev %.2e (<=1e-10)", worst_gap, w[2], w[0],
                worst_std)};
}

Outcome calibration_criterion()
{
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(10000);
    std::vector<std::uint8_t> y(10000);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = u(gen);
        y[i] = u(gen) < p[i] ? 1 : 0;
    }
    const double mc = ece(p, y);
    const double hand = ece(std::vector<double>(10, 0.9), std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 0, 0, 0, 0});
    return {mc < 0.02 && std::abs(hand - 0.3) < 1e-12, fmt("MC ECE %.4f (<0.02), hand case %.15f (0.3)", mc, hand)};
}

Outcome conflict_criterion()
{
    const double a = conflict_score(0.9, 0.9);
    const double b = conflict_score(1.0, 0.0);
    const double c = conflict_score(0.9, 0.2);
    bool grid_ok = true;
    for (int i = 0; i <= 100; ++i) {
        for (int j = 0; j <= 100; ++j) {
            const double v = conflict_score(i / 100.0, j / 100.0);
            grid_ok = grid_ok && v >= 0.0 && v <= 1.0 && v == conflict_score(j / 100.0, i / 100.0);
        }
    }
    const bool ok = a == 0.0 && b == 1.0 && std::abs(c - 0.42) < 1e-12 && grid_ok;
    return {ok, fmt("(0.9,0.9)=%g (1,0)=%g (0.9,0.2)=%.12f, 101x101 grid %s", a, b, c, grid_ok ? "ok" : "violated")};
}

Outcome depth_criterion()
{
    const int a = depth_to_layer(80, 0.65, DepthMode::floor);
    const int b = depth_to_layer(80, 0.90, DepthMode::round);
    const int c = depth_to_layer(32, 0.90, DepthMode::round);
    return {a == 52 && b == 72 && c == 29, fmt("(80,.65,floor)=%d (80,.90,round)=%d (32,.90,round)=%d", a, b, c)};
}

Outcome entropy_criterion()
{
    auto run = [](int a, int b) {
        std::vector<Choice> v(static_cast<std::size_t>(a), Choice::A);
        v.insert(v.end(), static_cast<std::size_t>(b), Choice::B);
        return choice_entropy(v);
    };
    const double h55 = run(5, 5);
    const double h73 = run(7, 3);
    const double h10 = run(10, 0);
    return {h55 == 1.0 && std::abs(h73 - 0.8813) <= 1e-4 && h10 == 0.0,
            fmt("[5A,5B]=%.15f [7A,3B]=%.6f [10A]=%g", h55, h73, h10)};
}

Outcome extraction_criterion()
{
    const auto cases = corpus();
    std::size_t agree = 0;
    std::array<int, 6> seen{};
    std::string first_miss;
    for (const auto& c : cases) {
        const auto e = extract_choice(c.text);
        if (e.choice == c.choice && e.tier == c.tier) {
            ++agree;
        } else if (first_miss.empty()) {
            first_miss = " first miss: \"" + c.text + "\"";
        }
        ++seen[static_cast<std::size_t>(c.tier.value_or(0))];
    }
    bool covered = true;
    for (int n : seen) covered = covered && n > 0;
    return {cases.size() >= 50 && agree == cases.size() && covered,
            fmt("%zu/%zu agree, all tiers and OTHER covered: %s", agree, cases.size(), covered ? "yes" : "no") +
                first_miss};
}

Outcome statistics_criterion()
{
    std::mt19937 gen(808);
    std::normal_distribution<double> normal;
    std::vector<double> x;
    std::vector<double> y;
    for (int i = 0; i < 200; ++i) {
        x.push_back(normal(gen));
        y.push_back(0.2 * x.back() + normal(gen));
    }
    const auto r = stats::pearson(x, y);
    const double r_oracle = raw_sum_r(x, y);
    const double t = r_oracle * std::sqrt(198.0 / (1.0 - r_oracle * r_oracle));
    const double p_tail = t_tail_oracle(t, 198.0);
    const double p_perm = permutation_p(x, y, 100000);

    const std::vector<double> table = {0.004, 0.0009, 0.014};
    const auto bonf = stats::bonferroni(table, 0.05);
    const bool all_flagged = bonf.significant == std::vector<bool>{true, true, true};
    const bool ok = std::abs(r.r - r_oracle) <= 1e-10 && std::abs(r.p - p_tail) <= 1e-10 &&
                    std::abs(r.p - p_perm) <= 0.01 && std::abs(bonf.alpha_corrected - 0.05 / 3.0) < 1e-15 &&
                    all_flagged;
    return {ok, fmt("|dr| %.1e, |dp| vs t-tail %.1e, p %.4f vs permutation %.4f, alpha %.4f, flags %d%d%d",
                    std::abs(r.r - r_oracle), std::abs(r.p - p_tail), r.p, p_perm, bonf.alpha_corrected,
                    int(bonf.significant[0]), int(bonf.significant[1]), int(bonf.significant[2]))};
}

Outcome transfer_criterion()
{
    const auto t0 = Clock::now();
    auto transfer_acc = [](double cos, std::uint64_t seed) {
        SynthConfig sc;
        sc.n_per_framework = 2000;
        sc.n_test = 2000;
        sc.cosines[0][1] = sc.cosines[1][0] = cos;
        sc.seed = seed;
        const auto data = generate_activations(sc);
        const auto m = train_probe(data.get(Framework::deontology, Split::train, 0), {});
        return evaluate(m, data.get(Framework::utilitarianism, Split::test, 0)).accuracy;
    };
    double hi = 0.0;
    double lo = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        hi += transfer_acc(0.8, seed) / 5.0;
        lo += transfer_acc(0.0, seed) / 5.0;
    }

    SynthConfig sc;
    sc.n_per_framework = 10000;
    sc.n_test = 10000;
    sc.seed = 12;
    const auto data = generate_activations(sc);
    const double acc = evaluate(train_probe(data.get(Framework::deontology, Split::train, 0), {}),
                                data.get(Framework::deontology, Split::test, 0))
                           .accuracy;
    const double bayes = phi(sc.signal_strength / sc.noise_stdev);
    const double elapsed = seconds_since(t0);
    return {hi - lo >= 0.15 && std::abs(acc - bayes) <= 0.02 && elapsed < 120.0,
            fmt("gap %.3f (cos .8 %.3f, cos 0 %.3f; >=0.15), accuracy %.4f vs Bayes %.4f (+-0.02), %.1fs (<120s)",
                hi - lo, hi, lo, acc, bayes, elapsed)};
}

struct CliRun {
    int code;
    std::string err;
};

CliRun cli_run(const std::vector<std::string>& args)
{
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run_cli(args, out, err);
    return {code, err.str()};
}

/// Full synth -> train -> conflict -> generations -> behave run through the
/// CLI. Returns the behave report or throws on a non-zero exit.
nlohmann::json coupled_run(const TempDir& dir, double kappa)
{
    SynthConfig sc;
    sc.model_id = "e2e";
    sc.n_per_framework = 1000;
    sc.n_test = 1200;
    sc.seed = 31;
    const auto tag = fmt("k%g", kappa);
    const auto synth_json = dir.str(tag + "_synth.json");
    std::ofstream(synth_json) << to_json(sc).dump();
    const auto data = dir.str(tag + "_data");
    const auto run = dir.str(tag + "_run");
    const auto run_json = dir.str(tag + "_run.json");
    std::ofstream(run_json) << nlohmann::json{{"sample_n", 250}, {"layers", "0"}}.dump();

    const std::vector<std::vector<std::string>> steps = {
        {"synth", "--config", synth_json, "--out", data},
        {"train", "--config", run_json, "--activations", data, "--out", run},
        {"conflict", "--config", run_json, "--activations", data, "--out", run},
        {"synth", "--manifest", run + "/manifest.json", "--kappa", fmt("%g", kappa), "--out", run},
        {"behave", "--config", run_json, "--out", run, "--model", tag},
    };
    for (const auto& s : steps) {
        const auto r = cli_run(s);
        if (r.code != 0) throw std::runtime_error(s.front() + " exited " + std::to_string(r.code) + ": " + r.err);
    }
    std::ifstream in(run + "/behave_report.json");
    return nlohmann::json::parse(in);
}

Outcome end_to_end_criterion()
{
    const auto t0 = Clock::now();
    TempDir dir("acceptance_e2e");
    const auto coupled = coupled_run(dir, 1.0);
    const auto null = coupled_run(dir, 0.0);
    const double elapsed = seconds_since(t0);
    const double r1 = coupled.at("r").get<double>();
    const double p1 = coupled.at("p").get<double>();
    const double r0 = null.at("r").get<double>();
    const auto n1 = coupled.at("n").get<std::size_t>();
    const auto n0 = null.at("n").get<std::size_t>();
    return {r1 > 0.3 && p1 < 0.01 && std::abs(r0) < 0.1 && n1 == 500 && n0 == 500 && elapsed < 300.0,
            fmt("kappa=1: r %.3f (>0.3) p %.2e (<0.01) n %zu; kappa=0: r %.3f (|r|<0.1)%s n %zu; %.1fs (<300s)", r1,
                p1, n1, r0, null.value("degenerate", false) ? " [constant entropy]" : "", n0, elapsed)};
}

Outcome stability_criterion(std::string& info)
{
    const auto clean = planted(0.1, 5000, 1);
    const auto stable = bootstrap_stability(clean.deon, clean.util, {}, clean.eval, {});

    const auto noisy = planted(1.0, 5000, 2);
    StabilityOptions permuted;
    permuted.permute_labels = true;
    const auto null = bootstrap_stability(noisy.deon, noisy.util, {}, noisy.eval, permuted);

    // Informational: one fixed shuffle, then ordinary bootstrap.
    auto shuffled = noisy;
    Rng rng(derive_seed(7, {1}));
    for (auto* s : {&shuffled.deon, &shuffled.util}) {
        for (std::size_t i = s->labels.size(); i > 1; --i) std::swap(s->labels[i - 1], s->labels[rng.index(i)]);
    }
    const auto once = bootstrap_stability(shuffled.deon, shuffled.util, {}, shuffled.eval, {});
    info = fmt("single fixed shuffle then bootstrap: r %.3f", once.mean_pairwise_r);

    return {stable.mean_pairwise_r > 0.95 && std::abs(null.mean_pairwise_r) < 0.2,
            fmt("noise 0.1: r %.4f (>0.95), IoU %.3f; per-seed permuted labels: r %.4f (|r|<0.2)",
                stable.mean_pairwise_r, stable.bottom_quartile_iou, null.mean_pairwise_r)};
}

} // namespace

int main()
{
    struct Criterion {
        const char* name;
        std::function<Outcome(std::string&)> run;
    };
    auto plain = [](Outcome (*f)()) { return [f](std::string&) { return f(); }; };
    const std::vector<Criterion> criteria = {
        {"optimizer", plain(optimizer_criterion)},
        {"probe", plain(probe_criterion)},
        {"calibration", plain(calibration_criterion)},
        {"conflict-formula", plain(conflict_criterion)},
        {"depth-mapping", plain(depth_criterion)},
        {"entropy", plain(entropy_criterion)},
        {"choice-extraction", plain(extraction_criterion)},
        {"statistics", plain(statistics_criterion)},
        {"planted-transfer", plain(transfer_criterion)},
        {"end-to-end", plain(end_to_end_criterion)},
        {"bootstrap-stability", stability_criterion},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        std::string info;
        Outcome o;
        try {
            o = c.run(info);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %-20s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), seconds_since(t0));
        if (!info.empty()) std::printf("     %-20s info: %s\n", "", info.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}

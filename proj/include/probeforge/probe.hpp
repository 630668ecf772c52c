#pragma once

// L2-regularized, class-balanced logistic-regression probes on standardized
// activations, plus the evaluation metrics (accuracy, confidence, ECE).

#include "activations.hpp"
#include "errors.hpp"
#include "framework.hpp"
#include "optimizer.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace probeforge {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kStdevFloor = 1e-12;

struct StandardizerParams {
    std::vector<double> mean;
    std::vector<double> stdev;

    [[nodiscard]] std::size_t width() const noexcept { return mean.size(); }

    /// Standardized copy of `x` as a double matrix.
    [[nodiscard]] RowMatrix transform(const MatrixView& x) const
    {
        if (x.cols != width()) {
            throw DimensionMismatch("input has " + std::to_string(x.cols) +
                                    " columns, standardizer expects " + std::to_string(width()));
        }
        RowMatrix out(static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(x.cols));
        for (std::size_t i = 0; i < x.rows; ++i) {
            for (std::size_t j = 0; j < x.cols; ++j) {
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    (static_cast<double>(x(i, j)) - mean[j]) / stdev[j];
            }
        }
        return out;
    }
};

/// Per-column mean and standard deviation (population by default, n-1 when
/// `population` is false). Columns whose stdev falls below 1e-12 get stdev 1.
inline StandardizerParams fit_standardizer(const MatrixView& x, bool population = true)
{
    if (x.rows < 2) throw EmptyData("standardizer needs at least two rows");
    StandardizerParams p;
    p.mean.assign(x.cols, 0.0);
    p.stdev.assign(x.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = 0; j < x.cols; ++j) p.mean[j] += x(i, j);
    }
    const auto n = static_cast<double>(x.rows);
    for (auto& m : p.mean) m /= n;
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double dev = x(i, j) - p.mean[j];
            p.stdev[j] += dev * dev;
        }
    }
    const double denom = population ? n : n - 1.0;
    for (auto& s : p.stdev) {
        s = std::sqrt(s / denom);
        if (s < kStdevFloor) s = 1.0;
    }
    return p;
}

/// Balanced weights s_i = n / (2 n_{y_i}); they sum to n.
inline std::vector<double> class_weights(std::span<const std::uint8_t> labels)
{
    std::size_t positives = 0;
    for (auto l : labels) positives += (l != 0);
    const auto n = labels.size();
    if (positives == 0 || positives == n) throw SingleClass("labels contain a single class");
    const double w1 = static_cast<double>(n) / (2.0 * static_cast<double>(positives));
    const double w0 = static_cast<double>(n) / (2.0 * static_cast<double>(n - positives));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = labels[i] != 0 ? w1 : w0;
    return out;
}

struct ProbeConfig {
    double reg_C = 0.01; ///< multiplies the data term
    bool balanced_weights = true;
    bool population_stdev = true;
    OptimizerConfig optimizer{};
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(reg_C > 0.0)) throw ConfigError("reg_C must be > 0");
        optimizer.validate();
    }
};

struct ProbeModel {
    std::vector<double> w;
    double b{0.0};
    StandardizerParams standardizer;
    Framework framework{Framework::commonsense};
    int layer{0};
    ProbeConfig config;
    bool converged{false};
    double train_loss{0.0};
    int iterations{0};
};

/// Numerically safe log(1 + exp(z)).
inline double softplus(double z)
{
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z)
{
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// J(w, b) = 1/2 |w|^2 + C sum_i s_i log(1 + exp(-t_i (w.x_i + b))), t_i in {-1, +1}.
/// Parameters are packed as theta = [w; b].
class LogisticObjective {
  public:
    LogisticObjective(RowMatrix x, std::span<const std::uint8_t> labels, std::vector<double> weights,
                      double reg_C)
        : x_(std::move(x)), signs_(x_.rows()), weights_(x_.rows()), reg_C_(reg_C)
    {
        if (static_cast<std::size_t>(x_.rows()) != labels.size() || labels.size() != weights.size()) {
            throw DimensionMismatch("objective rows, labels and weights differ in length");
        }
        for (Eigen::Index i = 0; i < x_.rows(); ++i) {
            signs_[i] = labels[static_cast<std::size_t>(i)] != 0 ? 1.0 : -1.0;
            weights_[i] = weights[static_cast<std::size_t>(i)];
        }
    }

    [[nodiscard]] Eigen::Index dim() const noexcept { return x_.cols() + 1; }

    double operator()(const Vector& theta, Vector& grad) const
    {
        const auto d = x_.cols();
        const auto w = theta.head(d);
        const double b = theta[d];
        const Vector margins = (x_ * w).array() + b;
        Vector coef(x_.rows());
        double data = 0.0;
        for (Eigen::Index i = 0; i < x_.rows(); ++i) {
            const double z = signs_[i] * margins[i];
            data += weights_[i] * softplus(-z);
            coef[i] = -reg_C_ * weights_[i] * signs_[i] * sigmoid(-z);
        }
        grad.resize(d + 1);
        grad.head(d) = w + x_.transpose() * coef;
        grad[d] = coef.sum();
        return 0.5 * w.squaredNorm() + reg_C_ * data;
    }

  private:
    RowMatrix x_;
    Vector signs_;
    Vector weights_;
    double reg_C_;
};

/// Fits a probe; the standardizer is fitted on `x` only. A probe that hits
/// the iteration cap is still returned with converged=false.
inline ProbeModel train_probe(const MatrixView& x, std::span<const std::uint8_t> labels,
                              const ProbeConfig& cfg)
{
    cfg.validate();
    if (x.rows != labels.size()) throw DimensionMismatch("activation rows and labels differ");
    for (float v : x.data) {
        if (!std::isfinite(v)) throw IntegrityError("non-finite activation in training data");
    }
    auto weights = class_weights(labels); // also rejects single-class data
    if (!cfg.balanced_weights) weights.assign(labels.size(), 1.0);

    ProbeModel model;
    model.standardizer = fit_standardizer(x, cfg.population_stdev);
    model.config = cfg;
    const LogisticObjective objective(model.standardizer.transform(x), labels, std::move(weights),
                                      cfg.reg_C);
    const auto result = minimize(std::cref(objective), Vector::Zero(objective.dim()), cfg.optimizer);

    const auto d = static_cast<Eigen::Index>(x.cols);
    model.w.assign(result.theta.data(), result.theta.data() + d);
    model.b = result.theta[d];
    model.converged = result.converged;
    model.train_loss = result.loss;
    model.iterations = result.iterations;
    return model;
}

inline ProbeModel train_probe(const ActivationSet& set, const ProbeConfig& cfg)
{
    auto model = train_probe(set.view(), set.label_span(), cfg);
    model.framework = set.framework;
    model.layer = set.layer;
    return model;
}

/// Logit w.x~ + b per row.
inline std::vector<double> decision_function(const ProbeModel& model, const MatrixView& x)
{
    if (x.cols != model.w.size()) {
        throw DimensionMismatch("input width " + std::to_string(x.cols) + " does not match probe width " +
                                std::to_string(model.w.size()));
    }
    std::vector<double> out(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double z = model.b;
        for (std::size_t j = 0; j < x.cols; ++j) {
            z += model.w[j] * ((x(i, j) - model.standardizer.mean[j]) / model.standardizer.stdev[j]);
        }
        out[i] = z;
    }
    return out;
}

/// Maps a logit to a probability strictly inside (0, 1).
inline double guarded_sigmoid(double z)
{
    constexpr double eps = std::numeric_limits<double>::epsilon();
    return std::clamp(sigmoid(z), eps, 1.0 - eps);
}

inline std::vector<double> predict_proba(const ProbeModel& model, const MatrixView& x)
{
    auto out = decision_function(model, x);
    for (auto& z : out) z = guarded_sigmoid(z);
    return out;
}

/// Distance from maximal uncertainty, 2|p - 0.5|.
[[nodiscard]] inline double confidence(double p) { return 2.0 * std::abs(p - 0.5); }

/// Predicted class with ties at 0.5 going to class 1.
[[nodiscard]] inline int predicted_class(double p) { return p >= 0.5 ? 1 : 0; }

/// Expected calibration error over `n_bins` equal-width bins of predicted-class
/// confidence max(p, 1-p) on [0.5, 1]. Empty bins contribute nothing.
inline double ece(std::span<const double> probs, std::span<const std::uint8_t> labels, int n_bins = 10)
{
    if (probs.size() != labels.size()) throw DimensionMismatch("probs and labels differ in length");
    if (probs.empty()) throw EmptyData("ece of an empty sample");
    if (n_bins < 1) throw ConfigError("ece needs at least one bin");
    std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> hits(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(n_bins), 0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        const double c = std::max(p, 1.0 - p);
        auto bin = static_cast<int>(std::floor((c - 0.5) * 2.0 * n_bins));
        bin = std::clamp(bin, 0, n_bins - 1);
        const auto k = static_cast<std::size_t>(bin);
        conf_sum[k] += c;
        hits[k] += predicted_class(p) == static_cast<int>(labels[i]) ? 1.0 : 0.0;
        ++count[k];
    }
    double total = 0.0;
    const auto m = static_cast<double>(probs.size());
    for (std::size_t k = 0; k < count.size(); ++k) {
        if (count[k] == 0) continue;
        const auto nk = static_cast<double>(count[k]);
        total += (nk / m) * std::abs(hits[k] / nk - conf_sum[k] / nk);
    }
    return total;
}

struct EvalReport {
    double accuracy{0.0};
    double mean_confidence{0.0};
    double ece{0.0};
    std::vector<double> probs;
    std::size_t n{0};
};

/// Accuracy (threshold 0.5, ties positive), mean confidence and ECE from
/// probabilities alone.
inline EvalReport summarize(std::vector<double> probs, std::span<const std::uint8_t> labels,
                            int n_bins = 10)
{
    if (probs.size() != labels.size()) throw DimensionMismatch("probs and labels differ in length");
    if (probs.empty()) throw EmptyData("cannot evaluate on an empty split");
    EvalReport r;
    r.n = probs.size();
    double correct = 0.0;
    double conf = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        correct += predicted_class(probs[i]) == static_cast<int>(labels[i]) ? 1.0 : 0.0;
        conf += confidence(probs[i]);
    }
    r.accuracy = correct / static_cast<double>(r.n);
    r.mean_confidence = conf / static_cast<double>(r.n);
    r.ece = ece(probs, labels, n_bins);
    r.probs = std::move(probs);
    return r;
}

inline EvalReport evaluate(const ProbeModel& model, const MatrixView& x,
                           std::span<const std::uint8_t> labels, int n_bins = 10)
{
    return summarize(predict_proba(model, x), labels, n_bins);
}

inline EvalReport evaluate(const ProbeModel& model, const ActivationSet& set, int n_bins = 10)
{
    return evaluate(model, set.view(), set.label_span(), n_bins);
}

// Persistence.

inline nlohmann::json to_json(const OptimizerConfig& c)
{
    return {{"memory", c.memory},       {"max_iter", c.max_iter}, {"grad_tol", c.grad_tol},
            {"wolfe_c1", c.wolfe_c1},   {"wolfe_c2", c.wolfe_c2}, {"max_line_search", c.max_line_search}};
}

inline nlohmann::json to_json(const ProbeConfig& c)
{
    return {{"reg_C", c.reg_C},
            {"balanced_weights", c.balanced_weights},
            {"population_stdev", c.population_stdev},
            {"seed", c.seed},
            {"optimizer", to_json(c.optimizer)}};
}

inline nlohmann::json to_json(const ProbeModel& m)
{
    return {{"framework", to_string(m.framework)},
            {"layer", m.layer},
            {"w", m.w},
            {"b", m.b},
            {"mean", m.standardizer.mean},
            {"stdev", m.standardizer.stdev},
            {"config", to_json(m.config)},
            {"converged", m.converged},
            {"train_loss", m.train_loss},
            {"iterations", m.iterations}};
}

inline ProbeModel probe_from_json(const nlohmann::json& j)
{
    ProbeModel m;
    try {
        m.framework = parse_framework(j.at("framework").get<std::string>());
        m.layer = j.at("layer").get<int>();
        m.w = j.at("w").get<std::vector<double>>();
        m.b = j.at("b").get<double>();
        m.standardizer.mean = j.at("mean").get<std::vector<double>>();
        m.standardizer.stdev = j.at("stdev").get<std::vector<double>>();
        const auto& c = j.at("config");
        m.config.reg_C = c.at("reg_C").get<double>();
        m.config.balanced_weights = c.at("balanced_weights").get<bool>();
        m.config.population_stdev = c.value("population_stdev", true);
        m.config.seed = c.value("seed", std::uint64_t{0});
        if (c.contains("optimizer")) {
            const auto& o = c.at("optimizer");
            m.config.optimizer.memory = o.value("memory", 10);
            m.config.optimizer.max_iter = o.value("max_iter", 2000);
            m.config.optimizer.grad_tol = o.value("grad_tol", 1e-5);
            m.config.optimizer.wolfe_c1 = o.value("wolfe_c1", 1e-4);
            m.config.optimizer.wolfe_c2 = o.value("wolfe_c2", 0.9);
            m.config.optimizer.max_line_search = o.value("max_line_search", 50);
        }
        m.converged = j.at("converged").get<bool>();
        m.train_loss = j.value("train_loss", 0.0);
        m.iterations = j.value("iterations", 0);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad probe file: ") + e.what());
    }
    if (m.w.size() != m.standardizer.mean.size() || m.w.size() != m.standardizer.stdev.size()) {
        throw IntegrityError("probe weight and standardizer widths differ");
    }
    for (double v : m.w) {
        if (!std::isfinite(v)) throw IntegrityError("probe has non-finite weights");
    }
    return m;
}

inline void save_probe(const ProbeModel& m, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << to_json(m).dump(2) << '\n';
}

inline ProbeModel load_probe(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open probe file " + path);
    try {
        return probe_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

} // namespace probeforge

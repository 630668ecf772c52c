#pragma once

// Correlation, effect-size and significance statistics for the
// conflict-entropy analysis.

#include "errors.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace probeforge::stats {

inline constexpr double kZ975 = 1.959964; ///< two-sided 95% normal quantile

inline double mean(std::span<const double> x)
{
    if (x.empty()) throw EmptyData("mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Unbiased (n - 1) sample variance.
inline double sample_variance(std::span<const double> x)
{
    if (x.size() < 2) throw EmptyData("variance needs at least two values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df)
{
    if (std::isinf(t)) return 0.0;
    const boost::math::students_t dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

struct PearsonResult {
    double r{0.0};
    double p{1.0};
    double ci_low{0.0};
    double ci_high{0.0};
    double t{0.0};
    std::size_t n{0};
};

/// Sample Pearson r; two-sided p from t = r sqrt((n-2)/(1-r^2)) on n-2 degrees
/// of freedom; 95% interval by the Fisher z-transform.
inline PearsonResult pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) throw DimensionMismatch("pearson inputs differ in length");
    if (x.size() < 4) throw EmptyData("pearson needs at least 4 pairs");
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw ZeroVariance("pearson input has zero variance");

    PearsonResult out;
    out.n = x.size();
    out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const auto n = static_cast<double>(out.n);
    const double one_minus = 1.0 - out.r * out.r;
    out.t = one_minus > 0.0 ? out.r * std::sqrt((n - 2.0) / one_minus)
                            : std::copysign(INFINITY, out.r);
    out.p = t_two_sided_p(out.t, n - 2.0);
    const double z = std::atanh(out.r);
    const double se = 1.0 / std::sqrt(n - 3.0);
    out.ci_low = std::tanh(z - kZ975 * se);
    out.ci_high = std::tanh(z + kZ975 * se);
    return out;
}

/// (mean_high - mean_low) / pooled stdev, pooled variance weighted by n - 1.
inline double cohens_d(std::span<const double> high, std::span<const double> low)
{
    if (high.size() < 2 || low.size() < 2) throw DegenerateGroups("cohen's d needs groups of size >= 2");
    const auto n1 = static_cast<double>(high.size());
    const auto n2 = static_cast<double>(low.size());
    const double pooled =
        ((n1 - 1.0) * sample_variance(high) + (n2 - 1.0) * sample_variance(low)) / (n1 + n2 - 2.0);
    if (!(pooled > 0.0)) throw DegenerateGroups("pooled standard deviation is zero");
    return (mean(high) - mean(low)) / std::sqrt(pooled);
}

struct TTestResult {
    double t{0.0};
    double df{0.0};
    double p{1.0};
};

/// Welch's unequal-variance t-test, two-sided.
inline TTestResult welch_t_test(std::span<const double> a, std::span<const double> b)
{
    if (a.size() < 2 || b.size() < 2) throw DegenerateGroups("welch test needs groups of size >= 2");
    const double va = sample_variance(a) / static_cast<double>(a.size());
    const double vb = sample_variance(b) / static_cast<double>(b.size());
    const double se2 = va + vb;
    if (!(se2 > 0.0)) throw DegenerateGroups("both groups have zero variance");
    TTestResult out;
    out.t = (mean(a) - mean(b)) / std::sqrt(se2);
    out.df = se2 * se2 /
             (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    out.p = t_two_sided_p(out.t, out.df);
    return out;
}

struct MannWhitneyResult {
    double u{0.0}; ///< U statistic of the first sample
    double z{0.0};
    double p{1.0};
};

/// Mann-Whitney U with tie-corrected normal approximation and continuity
/// correction, two-sided.
inline MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || b.empty()) throw DegenerateGroups("mann-whitney needs two non-empty groups");
    struct Item {
        double v;
        bool first;
    };
    std::vector<Item> all;
    all.reserve(a.size() + b.size());
    for (double v : a) all.push_back({v, true});
    for (double v : b) all.push_back({v, false});
    std::sort(all.begin(), all.end(), [](const Item& l, const Item& r) { return l.v < r.v; });

    const auto n = static_cast<double>(all.size());
    double rank_sum_a = 0.0;
    double tie_term = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].v == all[i].v) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        const auto t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].first) rank_sum_a += avg_rank;
        }
        i = j;
    }
    const auto n1 = static_cast<double>(a.size());
    const auto n2 = static_cast<double>(b.size());
    MannWhitneyResult out;
    out.u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    const double mu = n1 * n2 / 2.0;
    const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (!(var > 0.0)) return out;
    const double diff = out.u - mu;
    const double corrected = std::max(0.0, std::abs(diff) - 0.5);
    out.z = std::copysign(corrected / std::sqrt(var), diff);
    const boost::math::normal_distribution<double> norm;
    out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(norm, std::abs(out.z))));
    return out;
}

struct BonferroniResult {
    double alpha_corrected{0.05};
    std::vector<bool> significant;
};

/// alpha / k with flag_i = p_i < alpha / k.
inline BonferroniResult bonferroni(std::span<const double> p_values, double family_alpha = 0.05)
{
    if (p_values.empty()) throw EmptyList("bonferroni over an empty family");
    BonferroniResult out;
    out.alpha_corrected = family_alpha / static_cast<double>(p_values.size());
    for (double p : p_values) out.significant.push_back(p < out.alpha_corrected);
    return out;
}

struct GroupComparison {
    double p{1.0}; ///< Welch two-sided
    double d{0.0}; ///< Cohen's d, high minus low
    double t{0.0};
    double df{0.0};
    double mann_whitney_p{1.0};
};

inline GroupComparison group_comparison(std::span<const double> high, std::span<const double> low)
{
    const auto welch = welch_t_test(high, low);
    GroupComparison out;
    out.p = welch.p;
    out.t = welch.t;
    out.df = welch.df;
    out.d = cohens_d(high, low);
    out.mann_whitney_p = mann_whitney_u(high, low).p;
    return out;
}

} // namespace probeforge::stats

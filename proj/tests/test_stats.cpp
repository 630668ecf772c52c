#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace probeforge;
using namespace testing_support;
using namespace probeforge::stats;

namespace {

struct Fixed20 {
    std::vector<double> x;
    std::vector<double> y;
};

Fixed20 fixed20()
{
    std::mt19937 gen(2024);
    std::normal_distribution<double> normal;
    Fixed20 d;
    for (int i = 0; i < 20; ++i) {
        d.x.push_back(normal(gen));
        d.y.push_back(0.4 * d.x.back() + normal(gen));
    }
    return d;
}

} // namespace

TEST(Pearson, PerfectCorrelations)
{
    const std::vector<double> x = {1, 2, 3, 4, 5, 6};
    std::vector<double> neg;
    for (double v : x) neg.push_back(-v);
    EXPECT_DOUBLE_EQ(pearson(x, x).r, 1.0);
    EXPECT_DOUBLE_EQ(pearson(x, neg).r, -1.0);
    EXPECT_EQ(pearson(x, x).p, 0.0);
}

TEST(Pearson, MatchesDirectSummationOracle)
{
    const auto d = fixed20();
    const auto r = pearson(d.x, d.y);
    const double r_oracle = raw_sum_r(d.x, d.y);
    EXPECT_NEAR(r.r, r_oracle, 1e-10);
    const double t = r_oracle * std::sqrt(18.0 / (1.0 - r_oracle * r_oracle));
    EXPECT_NEAR(r.p, t_tail_oracle(t, 18.0), 1e-10);
    EXPECT_EQ(r.n, 20U);
}

TEST(Pearson, PermutationOracleAgrees)
{
    const auto d = fixed20();
    const auto r = pearson(d.x, d.y);
    EXPECT_NEAR(r.p, permutation_p(d.x, d.y, 100000), 0.01);
}

TEST(Pearson, FisherInterval)
{
    const auto d = fixed20();
    const auto r = pearson(d.x, d.y);
    const double z = 0.5 * std::log((1 + r.r) / (1 - r.r));
    EXPECT_NEAR(r.ci_low, std::tanh(z - 1.959964 / std::sqrt(17.0)), 1e-12);
    EXPECT_NEAR(r.ci_high, std::tanh(z + 1.959964 / std::sqrt(17.0)), 1e-12);
    EXPECT_LT(r.ci_low, r.r);
    EXPECT_GT(r.ci_high, r.r);
}

TEST(Pearson, DegenerateInputs)
{
    const std::vector<double> x = {1, 2, 3};
    EXPECT_THROW(pearson(x, x), EmptyData);
    const std::vector<double> c = {1, 1, 1, 1, 1};
    const std::vector<double> v = {1, 2, 3, 4, 5};
    EXPECT_THROW(pearson(c, v), ZeroVariance);
    EXPECT_THROW(pearson(v, x), DimensionMismatch);
}

TEST(CohensD, IdenticalGroupsZero)
{
    const std::vector<double> a = {1, 2, 3, 5};
    EXPECT_EQ(cohens_d(a, a), 0.0);
}

TEST(CohensD, UnitPooledCase)
{
    const std::vector<double> high = {0, 1, 2};
    const std::vector<double> low = {-1, 0, 1};
    EXPECT_DOUBLE_EQ(cohens_d(high, low), 1.0);
}

TEST(CohensD, HandComputedGroups)
{
    const std::vector<double> high = {2, 4, 6, 9};
    const std::vector<double> low = {1, 3, 4};
    // means 5.25 and 8/3; sums of squares 26.75 and 14/3; pooled over 5 df
    const double pooled = (26.75 + 14.0 / 3.0) / 5.0;
    EXPECT_NEAR(cohens_d(high, low), (5.25 - 8.0 / 3.0) / std::sqrt(pooled), 1e-12);
}

TEST(Welch, HandComputedStatistic)
{
    const std::vector<double> a = {2, 4, 6, 9};
    const std::vector<double> b = {1, 3, 4};
    const double va = 26.75 / 3.0 / 4.0;
    const double vb = 14.0 / 3.0 / 2.0 / 3.0;
    const double t = (5.25 - 8.0 / 3.0) / std::sqrt(va + vb);
    const double df = (va + vb) * (va + vb) / (va * va / 3.0 + vb * vb / 2.0);
    const auto r = welch_t_test(a, b);
    EXPECT_NEAR(r.t, t, 1e-12);
    EXPECT_NEAR(r.df, df, 1e-12);
    EXPECT_NEAR(r.p, t_tail_oracle(t, df), 1e-9);
}

TEST(Bonferroni, TableFamily)
{
    const std::vector<double> p = {0.004, 0.0009, 0.014};
    const auto r = bonferroni(p, 0.05);
    EXPECT_DOUBLE_EQ(r.alpha_corrected, 0.05 / 3.0);
    EXPECT_NEAR(r.alpha_corrected, 0.0167, 5e-5);
    EXPECT_EQ(r.significant, (std::vector<bool>{true, true, true}));
}

TEST(Bonferroni, SingleTestKeepsAlpha)
{
    const std::vector<double> p = {0.03};
    EXPECT_EQ(bonferroni(p, 0.05).alpha_corrected, 0.05);
    EXPECT_THROW(bonferroni(std::vector<double>{}, 0.05), EmptyList);
}

TEST(GroupComparison, IdenticalGroups)
{
    const std::vector<double> a = {0.1, 0.5, 0.9, 0.3};
    const auto g = group_comparison(a, a);
    EXPECT_NEAR(g.p, 1.0, 1e-12);
    EXPECT_EQ(g.d, 0.0);
}

TEST(GroupComparison, SeparatedGroups)
{
    std::mt19937 gen(5);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<double> high;
    std::vector<double> low;
    for (int i = 0; i < 30; ++i) {
        high.push_back(1.0 + noise(gen));
        low.push_back(noise(gen));
    }
    const auto g = group_comparison(high, low);
    EXPECT_LT(g.p, 1e-10);
    EXPECT_GT(g.d, 5.0);
    const auto swapped = group_comparison(low, high);
    EXPECT_DOUBLE_EQ(swapped.p, g.p);
    EXPECT_DOUBLE_EQ(swapped.d, -g.d);
}

TEST(MannWhitney, NormalApproximationHandCase)
{
    const std::vector<double> a = {1, 2, 3};
    const std::vector<double> b = {4, 5, 6};
    const auto r = mann_whitney_u(a, b);
    EXPECT_EQ(r.u, 0.0);
    const double z = (4.5 - 0.5) / std::sqrt(9.0 * 7.0 / 12.0);
    EXPECT_NEAR(r.p, std::erfc(z / std::sqrt(2.0)), 1e-12);
}

TEST(MannWhitney, TieCorrection)
{
    const std::vector<double> a = {1, 2, 2, 3};
    const std::vector<double> b = {2, 3, 3, 4};
    const auto r = mann_whitney_u(a, b);
    // ranks: 1 | 2,2,2 -> 3 | 3,3,3 -> 6 | 4 -> 8
    EXPECT_DOUBLE_EQ(r.u, (1.0 + 3.0 + 3.0 + 6.0) - 10.0);
    const double ties = (27.0 - 3.0) * 2.0;
    const double var = 16.0 / 12.0 * (9.0 - ties / 56.0);
    const double z = (std::abs(3.0 - 8.0) - 0.5) / std::sqrt(var);
    EXPECT_NEAR(r.p, std::erfc(z / std::sqrt(2.0)), 1e-12);
}

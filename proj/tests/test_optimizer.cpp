#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace probeforge;
using namespace testing_support;
using testing_support::make_problem;
using testing_support::naive_logistic;
using testing_support::Problem;

namespace {

Objective quadratic(const Vector& v)
{
    return [v](const Vector& t, Vector& g) {
        g = 2.0 * (t - v);
        return (t - v).squaredNorm();
    };
}

double rosenbrock(const Vector& t, Vector& g)
{
    const double a = 1.0 - t[0];
    const double b = t[1] - t[0] * t[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * t[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
}

} // namespace

TEST(Minimize, QuadraticReachesCenter)
{
    Vector v(4);
    v << 1.0, -2.0, 0.5, 3.0;
    const auto r = minimize(quadratic(v), Vector::Zero(4), {});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.status, OptimStatus::converged);
    EXPECT_LT((r.theta - v).lpNorm<Eigen::Infinity>(), 1e-6);
    EXPECT_LT(r.grad_norm, 1e-5);
}

TEST(Minimize, RosenbrockFromClassicStart)
{
    OptimizerConfig cfg;
    cfg.grad_tol = 1e-10;
    Vector x0(2);
    x0 << -1.2, 1.0;
    const auto r = minimize(rosenbrock, x0, cfg);
    EXPECT_NEAR(r.theta[0], 1.0, 1e-6);
    EXPECT_NEAR(r.theta[1], 1.0, 1e-6);
}

TEST(Minimize, LogisticMatchesGradientDescentOracle)
{
    const auto p = make_problem(50, 5, 11);
    const double C = 0.01;
    const double oracle = gradient_descent_oracle(p, C);
    const auto r = minimize(library_objective(p, C), Vector::Zero(6), {});
    EXPECT_TRUE(r.converged);
    EXPECT_LT(std::abs(r.loss - oracle) / std::abs(oracle), 1e-6);
}

TEST(Minimize, LossNeverIncreasesAcrossIterations)
{
    Vector x0(2);
    x0 << -1.2, 1.0;
    std::vector<IterationInfo> trace;
    minimize(rosenbrock, x0, {}, [&](const IterationInfo& it) { trace.push_back(it); });
    ASSERT_FALSE(trace.empty());
    for (const auto& it : trace) {
        EXPECT_LE(it.loss, it.loss_before);
        EXPECT_LT(it.directional_derivative, 0.0);
    }
}

TEST(Minimize, IterationCapReportsNotConverged)
{
    OptimizerConfig cfg;
    cfg.max_iter = 3;
    Vector x0(2);
    x0 << -1.2, 1.0;
    const auto r = minimize(rosenbrock, x0, cfg);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.status, OptimStatus::max_iterations);
    EXPECT_EQ(r.iterations, 3);
}

TEST(Minimize, WrongGradientFailsLineSearchAndKeepsBest)
{
    const Objective lying = [](const Vector& t, Vector& g) {
        g = -2.0 * t; // points uphill
        return t.squaredNorm();
    };
    Vector x0(2);
    x0 << 1.0, 1.0;
    const auto r = minimize(lying, x0, {});
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.status, OptimStatus::line_search_failure);
    EXPECT_LE(r.loss, 2.0);
}

TEST(Minimize, NonFiniteStartThrows)
{
    const Objective bad = [](const Vector& t, Vector& g) {
        g = Vector::Zero(t.size());
        return std::nan("");
    };
    EXPECT_THROW(minimize(bad, Vector::Zero(2), {}), NonFiniteLoss);
}

TEST(Minimize, Deterministic)
{
    const auto p = make_problem(80, 6, 3);
    const auto a = minimize(library_objective(p, 0.1), Vector::Zero(7), {});
    const auto b = minimize(library_objective(p, 0.1), Vector::Zero(7), {});
    EXPECT_EQ(a.iterations, b.iterations);
    for (Eigen::Index i = 0; i < 7; ++i) EXPECT_EQ(a.theta[i], b.theta[i]);
}

TEST(Minimize, RejectsBadConfig)
{
    OptimizerConfig cfg;
    cfg.wolfe_c1 = 0.95;
    EXPECT_THROW(minimize(quadratic(Vector::Zero(1)), Vector::Ones(1), cfg), ConfigError);
}

TEST(CheckGradient, QuadraticIsExact)
{
    Vector v(3);
    v << 0.3, -1.0, 2.0;
    Vector t(3);
    t << 5.0, -4.0, 1.5;
    EXPECT_LT(check_gradient(quadratic(v), t, 1e-5), 1e-8);
}

TEST(CheckGradient, StationaryPointUsesAbsoluteFallback)
{
    Vector v(3);
    v << 0.3, -1.0, 2.0;
    EXPECT_LT(check_gradient(quadratic(v), v, 1e-5), 1e-8);
}

TEST(CheckGradient, LogisticAtRandomPoints)
{
    const auto p = make_problem(60, 5, 21);
    const auto obj = library_objective(p, 1.0);
    std::mt19937 gen(4);
    std::normal_distribution<double> normal;
    for (int k = 0; k < 20; ++k) {
        Vector t(6);
        for (auto& v : t) v = normal(gen);
        EXPECT_LT(check_gradient(obj, t, 1e-5), 1e-4);
    }
}

TEST(CheckGradient, DetectsWrongGradient)
{
    const Objective off = [](const Vector& t, Vector& g) {
        g = 2.0 * t;
        g[0] += 0.5;
        return t.squaredNorm();
    };
    EXPECT_GT(check_gradient(off, Vector::Ones(2), 1e-5), 0.1);
}

TEST(Objective, LibraryMatchesNaiveLossAndGradient)
{
    const auto p = make_problem(40, 4, 8);
    const auto obj = library_objective(p, 0.3);
    const auto s = balanced(p);
    std::mt19937 gen(9);
    std::normal_distribution<double> normal;
    for (int k = 0; k < 5; ++k) {
        std::vector<double> theta(5);
        for (auto& v : theta) v = normal(gen);
        std::vector<double> g_naive;
        const double f_naive = naive_logistic(p, s, 0.3, theta, &g_naive);
        Vector g;
        const double f = obj(Eigen::Map<Vector>(theta.data(), 5), g);
        EXPECT_NEAR(f, f_naive, 1e-12 * std::max(1.0, std::abs(f_naive)));
        for (int j = 0; j < 5; ++j) EXPECT_NEAR(g[j], g_naive[static_cast<std::size_t>(j)], 1e-12);
    }
}

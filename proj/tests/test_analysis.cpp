#include "test_support.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace probeforge;

namespace {

SynthConfig planted(std::vector<std::vector<double>> cosines, std::uint64_t seed, int n_train = 2000,
                    int n_test = 2000)
{
    SynthConfig sc;
    sc.d = 32;
    sc.n_per_framework = n_train;
    sc.n_test = n_test;
    sc.cosines = std::move(cosines);
    sc.seed = seed;
    return sc;
}

std::vector<std::vector<double>> constant_cosines(double off)
{
    std::vector<std::vector<double>> m(5, std::vector<double>(5, off));
    for (int i = 0; i < 5; ++i) m[i][i] = 1.0;
    return m;
}

TransferMatrix matrix_for(const SynthDataset& data, int jobs = 1)
{
    std::vector<ActivationSet> train;
    std::vector<ActivationSet> test;
    for (auto f : kFrameworks) {
        train.push_back(data.get(f, Split::train, 0));
        test.push_back(data.get(f, Split::test, 0));
    }
    return transfer_matrix(train, test, {}, 10, jobs);
}

std::vector<ConflictRecord> records_with_scores(const std::vector<double>& scores)
{
    std::vector<ConflictRecord> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        ConflictRecord r;
        r.scenario_id = "s" + std::to_string(i);
        r.score = scores[i];
        out.push_back(r);
    }
    return out;
}

} // namespace

TEST(DepthToLayer, PublishedAnchors)
{
    EXPECT_EQ(depth_to_layer(80, 0.65, DepthMode::floor), 52);
    EXPECT_EQ(depth_to_layer(80, 0.90, DepthMode::round), 72);
    EXPECT_EQ(depth_to_layer(32, 0.90, DepthMode::round), 29);
}

TEST(DepthToLayer, FloorAbsorbsRepresentationError)
{
    EXPECT_EQ(depth_to_layer(100, 0.29, DepthMode::floor), 29);
    EXPECT_EQ(depth_to_layer(32, 0.65, DepthMode::floor), 20);
    EXPECT_THROW(depth_to_layer(32, 0.0, DepthMode::floor), ConfigError);
    EXPECT_THROW(depth_to_layer(0, 0.5, DepthMode::floor), ConfigError);
}

TEST(LayerSweep, SignalOnsetIsVisible)
{
    SynthConfig sc;
    sc.d = 16;
    sc.n_per_framework = 1000;
    sc.n_test = 2000;
    sc.n_layers = 8;
    sc.signal_strength = 2.0;
    sc.layer_onset = {0, 0, 0, 0, 0, 1, 1, 1};
    sc.seed = 4;
    const auto data = generate_activations(sc);
    std::vector<ActivationSet> train;
    std::vector<ActivationSet> test;
    for (int l = 0; l < 8; ++l) {
        train.push_back(data.get(Framework::justice, Split::train, l));
        test.push_back(data.get(Framework::justice, Split::test, l));
    }
    const auto sweep = layer_sweep(train, test, {}, 10, 2);
    ASSERT_EQ(sweep.layers.size(), 8U);
    for (const auto& e : sweep.layers) {
        if (e.layer < 5) {
            EXPECT_NEAR(e.report.accuracy, 0.5, 0.05) << "layer " << e.layer;
        } else {
            EXPECT_GT(e.report.accuracy, 0.9) << "layer " << e.layer;
        }
    }
}

TEST(LayerSweep, IdenticalLayersGiveIdenticalAccuracy)
{
    const auto base_train = testing_support::to_set(testing_support::make_problem(300, 8, 1));
    const auto base_test = testing_support::to_set(testing_support::make_problem(300, 8, 2));
    std::vector<ActivationSet> train;
    std::vector<ActivationSet> test;
    for (int l = 0; l < 4; ++l) {
        train.push_back(base_train);
        train.back().layer = l;
        test.push_back(base_test);
        test.back().layer = l;
    }
    const auto sweep = layer_sweep(train, test, {}, 10, 3);
    for (const auto& e : sweep.layers) {
        EXPECT_NEAR(e.report.accuracy, sweep.layers[0].report.accuracy, 1e-9);
    }
}

TEST(LayerSweep, ShuffledLabelsStayAtChance)
{
    SynthConfig sc;
    sc.d = 16;
    sc.n_per_framework = 1000;
    sc.n_test = 2000;
    sc.n_layers = 4;
    sc.signal_strength = 2.0;
    sc.seed = 8;
    const auto data = generate_activations(sc);
    Rng rng(99);
    auto train_labels = data.get(Framework::virtue, Split::train, 0).labels;
    auto test_labels = data.get(Framework::virtue, Split::test, 0).labels;
    rng.shuffle(train_labels);
    rng.shuffle(test_labels);
    std::vector<ActivationSet> train;
    std::vector<ActivationSet> test;
    for (int l = 0; l < 4; ++l) {
        train.push_back(data.get(Framework::virtue, Split::train, l));
        train.back().labels = train_labels;
        test.push_back(data.get(Framework::virtue, Split::test, l));
        test.back().labels = test_labels;
    }
    for (const auto& e : layer_sweep(train, test, {}).layers) {
        EXPECT_GE(e.report.accuracy, 0.45);
        EXPECT_LE(e.report.accuracy, 0.55);
    }
}

TEST(LayerSweep, RejectsMixedInputs)
{
    const auto a = testing_support::to_set(testing_support::make_problem(50, 3, 1));
    auto b = a;
    b.framework = Framework::virtue;
    b.layer = 1;
    const std::vector<ActivationSet> train = {a, b};
    EXPECT_THROW(layer_sweep(train, train, {}), DimensionMismatch);
}

TEST(Transfer, OverlapDrivesTransferAccuracy)
{
    // deontology~utilitarianism cos 0.9, deontology~virtue cos 0.0
    double gap = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto cos = constant_cosines(0.0);
        cos[0][1] = cos[1][0] = 0.9;
        const auto m = matrix_for(generate_activations(planted(cos, seed)));
        gap += m.value(0, 1, TransferMetric::accuracy) - m.value(0, 2, TransferMetric::accuracy);
    }
    EXPECT_GE(gap / 5.0, 0.15);
}

TEST(Transfer, IdenticalDistributionsTransferFully)
{
    const auto m = matrix_for(generate_activations(planted(constant_cosines(1.0), 3, 2000, 4000)), 2);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_NEAR(m.value(i, j, TransferMetric::accuracy), m.value(j, j, TransferMetric::accuracy), 0.03);
        }
    }
}

TEST(Transfer, OrthogonalDirectionsTransferAtChance)
{
    const auto m = matrix_for(generate_activations(planted(constant_cosines(0.0), 5)));
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            const double acc = m.value(i, j, TransferMetric::accuracy);
            if (i == j) {
                EXPECT_GT(acc, 0.8);
            } else {
                EXPECT_GE(acc, 0.45);
                EXPECT_LE(acc, 0.58);
            }
        }
    }
}

TEST(Transfer, CsvReparsesToJsonValues)
{
    const auto m = matrix_for(generate_activations(planted(constant_cosines(0.3), 1, 300, 300)));
    const auto j = to_json(m);
    for (auto metric : {TransferMetric::accuracy, TransferMetric::confidence, TransferMetric::ece}) {
        std::istringstream csv(transfer_csv(m, metric));
        std::string line;
        std::getline(csv, line);
        EXPECT_EQ(line, "train\\test,deontology,utilitarianism,virtue,justice,commonsense");
        for (std::size_t i = 0; i < 5; ++i) {
            ASSERT_TRUE(std::getline(csv, line));
            std::istringstream row(line);
            std::string cell;
            std::getline(row, cell, ',');
            EXPECT_EQ(cell, to_string(kFrameworks[i]));
            for (std::size_t k = 0; k < 5; ++k) {
                std::getline(row, cell, ',');
                const double from_json = j.at(std::string(to_string(metric))).at(i).at(k).get<double>();
                EXPECT_NEAR(std::stod(cell), from_json, 1e-12);
            }
        }
    }
}

TEST(Transfer, EmptyTestSplitIsDataError)
{
    auto train = testing_support::to_set(testing_support::make_problem(40, 3, 1));
    auto test = train;
    test.n = 0;
    test.matrix.clear();
    test.labels.clear();
    test.scenario_ids.clear();
    const std::vector<ActivationSet> tr = {train};
    const std::vector<ActivationSet> te = {test};
    EXPECT_THROW(transfer_matrix(tr, te, {}), EmptyData);
}

TEST(ConflictScore, WorkedValues)
{
    EXPECT_EQ(conflict_score(0.9, 0.9), 0.0);
    EXPECT_EQ(conflict_score(1.0, 0.0), 1.0);
    EXPECT_NEAR(conflict_score(0.9, 0.2), 0.42, 1e-12);
}

TEST(ConflictScore, SymmetricAndBoundedOnGrid)
{
    for (int a = 0; a <= 100; ++a) {
        for (int b = 0; b <= 100; ++b) {
            const double p = a / 100.0;
            const double q = b / 100.0;
            const double c = conflict_score(p, q);
            ASSERT_GE(c, 0.0);
            ASSERT_LE(c, 1.0);
            ASSERT_EQ(c, conflict_score(q, p));
            if (a == b || a == 50 || b == 50) { ASSERT_EQ(c, 0.0); }
        }
    }
}

TEST(ConflictScore, IncreasesWithDisagreementAtFixedConfidence)
{
    // p_d fixed at 0.9 (confidence 0.8); p_u below 0.1 keeps min confidence at 0.8.
    double prev = -1.0;
    for (double pu = 0.1; pu >= 0.0; pu -= 0.01) {
        const double c = conflict_score(0.9, pu);
        EXPECT_GT(c, prev);
        prev = c;
    }
}

TEST(Percentile, MatchesSortAndIndexOracle)
{
    std::vector<double> v;
    for (int i = 100; i >= 1; --i) v.push_back(i);
    EXPECT_DOUBLE_EQ(percentile(v, 75), 75.25);
    EXPECT_DOUBLE_EQ(percentile(v, 25), 25.75);
    EXPECT_DOUBLE_EQ(percentile(v, 0), 1.0);
    EXPECT_DOUBLE_EQ(percentile(v, 100), 100.0);
    std::mt19937 gen(2);
    std::uniform_real_distribution<double> u;
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x(3 + t);
        for (auto& e : x) e = u(gen);
        const double q = u(gen) * 100.0;
        auto s = x;
        std::sort(s.begin(), s.end());
        const double pos = q / 100.0 * double(s.size() - 1);
        const auto k = static_cast<std::size_t>(pos);
        const double expect = k + 1 < s.size() ? s[k] + (pos - double(k)) * (s[k + 1] - s[k]) : s[k];
        EXPECT_NEAR(percentile(x, q), expect, 1e-15);
    }
}

TEST(ConflictGroups, ScoresOneToHundred)
{
    std::vector<double> scores;
    for (int i = 1; i <= 100; ++i) scores.push_back(i);
    const auto sel = select_conflict_groups(records_with_scores(scores), 75, 25, 10, 1);
    EXPECT_DOUBLE_EQ(sel.hi_threshold, 75.25);
    std::size_t high = 0;
    for (const auto& r : sel.records) {
        if (r.group == ConflictGroup::high) {
            ++high;
            EXPECT_GE(r.score, 76.0);
        }
        if (r.score == 75.0) { EXPECT_EQ(r.group, ConflictGroup::mid); }
        if (r.score == 26.0) { EXPECT_EQ(r.group, ConflictGroup::mid); }
        if (r.score == 25.0) { EXPECT_EQ(r.group, ConflictGroup::low); }
    }
    EXPECT_EQ(high, 25U);
}

TEST(ConflictGroups, AllEqualScoresStillSampleDistinct)
{
    const auto sel = select_conflict_groups(records_with_scores(std::vector<double>(500, 0.3)), 75, 25, 100, 2);
    for (const auto& r : sel.records) EXPECT_EQ(r.group, ConflictGroup::high);
    EXPECT_EQ(sel.sampled_high.size(), 100U);
    EXPECT_EQ(sel.sampled_low.size(), 100U);
    std::set<std::size_t> all(sel.sampled_high.begin(), sel.sampled_high.end());
    all.insert(sel.sampled_low.begin(), sel.sampled_low.end());
    EXPECT_EQ(all.size(), 200U);
}

TEST(ConflictGroups, SamplesExactlyNUniquePerGroup)
{
    std::vector<double> scores;
    for (int i = 0; i < 1200; ++i) scores.push_back(i / 1200.0);
    const auto sel = select_conflict_groups(records_with_scores(scores), 75, 25, 100, 3);
    for (const auto* idx : {&sel.sampled_high, &sel.sampled_low}) {
        std::set<std::string> ids;
        for (auto i : *idx) ids.insert(sel.records[i].scenario_id);
        EXPECT_EQ(ids.size(), 100U);
    }
    for (auto i : sel.sampled_high) EXPECT_EQ(sel.records[i].group, ConflictGroup::high);
    for (auto i : sel.sampled_low) EXPECT_EQ(sel.records[i].group, ConflictGroup::low);
}

TEST(ConflictGroups, SeededSampling)
{
    std::vector<double> scores;
    for (int i = 0; i < 1200; ++i) scores.push_back(i);
    const auto a = select_conflict_groups(records_with_scores(scores), 75, 25, 50, 3);
    const auto b = select_conflict_groups(records_with_scores(scores), 75, 25, 50, 3);
    const auto c = select_conflict_groups(records_with_scores(scores), 75, 25, 50, 4);
    EXPECT_EQ(a.sampled_high, b.sampled_high);
    EXPECT_EQ(a.sampled_low, b.sampled_low);
    EXPECT_NE(a.sampled_high, c.sampled_high);
}

TEST(ConflictRecordJson, RoundTrip)
{
    auto r = make_conflict_record("x1", 0.9, 0.2);
    r.group = ConflictGroup::low;
    const auto back = conflict_from_json(to_json(r));
    EXPECT_EQ(back.scenario_id, "x1");
    EXPECT_EQ(back.score, r.score);
    EXPECT_EQ(back.group, ConflictGroup::low);
    EXPECT_EQ(back.c_u, r.c_u);
}

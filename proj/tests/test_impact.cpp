#include <cmath>

#include <gtest/gtest.h>

#include <cascadefit/impact.hpp>

using namespace cascadefit;

namespace {
double mean_size(TreeParams t, int n, double* sd) {
    Rng rng(99);
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        double x = double(generate_tree(t, rng));
        s += x;
        s2 += x * x;
    }
    double m = s / n;
    *sd = std::sqrt(s2 / n - m * m);
    return m;
}
} // namespace

TEST(GenerateTree, IntegerParamsDeterministic) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(generate_tree({2, 2}, seed), 7u);
    EXPECT_EQ(generate_tree({3, 0}, 5), 1u);
}

TEST(GenerateTree, FractionalBreadth) {
    double sd = 0;
    double m = mean_size({1.5, 1}, 20000, &sd);
    EXPECT_LT(std::abs(m - 2.5), 3 * sd / std::sqrt(20000.0));
}

TEST(GenerateTree, FractionalDepthBracketed) {
    double sd = 0;
    double m = mean_size({2, 1.5}, 20000, &sd);
    EXPECT_GT(m, 3.0);
    EXPECT_LT(m, 7.0);
    // depth 1 or 2 with equal odds
    EXPECT_NEAR(m, 5.0, 4 * sd / std::sqrt(20000.0));
}

TEST(GenerateTree, NodeCap) { EXPECT_THROW(generate_tree({50, 6}, 1), NumericalError); }

TEST(Reach, UnitSizesGiveNodeCount) {
    ImpactConfig cfg;
    cfg.replicates = 100;
    cfg.strata = {{"x", {2, 2}, {1.0}}};
    auto d = estimate_reach(cfg);
    for (double r : d[0].samples) EXPECT_DOUBLE_EQ(r, 7.0);
    EXPECT_DOUBLE_EQ(d[0].mean, 7.0);
}

TEST(Reach, ConstantSizesScaleExpectedNodes) {
    ImpactConfig cfg;
    cfg.replicates = 20000;
    cfg.strata = {{"x", {1.5, 2}, {40.0}}};
    auto d = estimate_reach(cfg);
    // E[nodes] = 1 + 1.5 + 2.25
    double s2 = 0;
    for (double r : d[0].samples) s2 += (r - d[0].mean) * (r - d[0].mean);
    double sd = std::sqrt(s2 / cfg.replicates);
    EXPECT_NEAR(d[0].mean, 40.0 * 4.75, 3 * sd / std::sqrt(double(cfg.replicates)));
}

TEST(Reach, StratumOrderInvariant) {
    ImpactConfig a;
    a.replicates = 500;
    a.strata = {{"hateful", {3, 4}, {5, 50, 500}}, {"viral_normal", {2, 3}, {1, 2, 3}}};
    ImpactConfig b = a;
    std::swap(b.strata[0], b.strata[1]);
    auto da = estimate_reach(a), db = estimate_reach(b);
    EXPECT_EQ(da[0].samples, db[1].samples);
    EXPECT_EQ(da[1].samples, db[0].samples);
}

TEST(Reach, MonotoneInParametersUnderCommonStreams) {
    ImpactConfig lo, hi;
    lo.replicates = hi.replicates = 300;
    lo.strata = {{"k", {2.2, 3.3}, {10}}};
    hi.strata = {{"k", {2.6, 3.3}, {10}}};
    auto a = estimate_reach(lo), b = estimate_reach(hi);
    EXPECT_LT(a[0].mean, b[0].mean);
    ImpactConfig deeper = lo;
    deeper.strata[0].params = {2.2, 4.1};
    EXPECT_LT(a[0].mean, estimate_reach(deeper)[0].mean);
}

TEST(Reach, Errors) {
    ImpactConfig cfg;
    cfg.strata = {{"x", {2, 2}, {}}};
    EXPECT_THROW(estimate_reach(cfg), InputError);
    cfg.strata[0].sizes = {1};
    cfg.replicates = 0;
    EXPECT_THROW(estimate_reach(cfg), InputError);
}

TEST(Reach, HistogramCountsEverySample) {
    ImpactConfig cfg;
    cfg.replicates = 1000;
    cfg.strata = {{"x", {2.5, 3.5}, {1, 10, 100}}};
    auto d = estimate_reach(cfg);
    std::size_t total = 0;
    for (auto& b : d[0].histogram) total += b.count;
    EXPECT_EQ(total, 1000u);
    EXPECT_EQ(d[0].histogram.size(), 40u);
}

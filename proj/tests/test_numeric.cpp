#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mstest/numeric.hpp"
#include "mstest/random.hpp"

using namespace mstest;

TEST(Numeric, CompensatedSumRecoversSmallTerms) {
    CompensatedSum s;
    s.add(1e16);
    for (int i = 0; i < 1000; ++i) s.add(1.0);
    s.add(-1e16);
    EXPECT_DOUBLE_EQ(s.value(), 1000.0);
}

TEST(Numeric, NormalQuantiles) {
    EXPECT_NEAR(norm_upper_quantile(0.05), 1.6448536269514722, 1e-12);
    EXPECT_NEAR(norm_upper_quantile(5e-5), 3.890591886413, 1e-9);
    EXPECT_NEAR(norm_sf(norm_upper_quantile(1e-12)), 1e-12, 1e-20);
    EXPECT_THROW(norm_upper_quantile(0.0), std::domain_error);
}

TEST(Numeric, BernoulliDivergence) {
    EXPECT_DOUBLE_EQ(ber_kl(0.3, 0.3), 0.0);
    EXPECT_NEAR(ber_kl(1.0, 0.25), std::log(4.0), 1e-15);
    EXPECT_NEAR(ber_kl(0.5, 0.25), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
    EXPECT_EQ(ber_kl(1.0, 0.0), kInf);
}

TEST(Numeric, GaussLegendreIntegratesPolynomialsAndGaussian) {
    auto rule = gauss_legendre(128);
    double wsum = 0;
    for (double w : rule.weights) wsum += w;
    EXPECT_NEAR(wsum, 2.0, 1e-13);
    EXPECT_NEAR(integrate(rule, [](double x) { return std::pow(x, 10); }, -1, 1), 2.0 / 11.0, 1e-14);
    EXPECT_NEAR(integrate(rule, norm_pdf, -9, 1.3), norm_cdf(1.3), 1e-13);
}

TEST(Numeric, GoldenAndBisect) {
    EXPECT_NEAR(golden_max([](double x) { return -(x - 0.3) * (x - 0.3); }, -2, 5), 0.3, 1e-8);
    EXPECT_NEAR(bisect([](double x) { return x * x - 2; }, 0, 2), std::sqrt(2.0), 1e-11);
}

TEST(Numeric, LogUniformGridIsInteriorAndIncreasing) {
    auto g = log_uniform_grid(1e-4, 200);
    ASSERT_EQ(g.size(), 200u);
    EXPECT_GT(g.front(), 1e-4);
    EXPECT_LT(g.back(), 1.0);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1], g[i]);
}

TEST(Random, DerivedSeedsDifferByTagAndIndex) {
    EXPECT_NE(derive_seed(7, Stream::Plain, {1}), derive_seed(7, Stream::Plain, {2}));
    EXPECT_NE(derive_seed(7, Stream::Plain, {1}), derive_seed(7, Stream::Tilted, {1}));
    EXPECT_EQ(derive_seed(7, Stream::Plain, {1, 2}), derive_seed(7, Stream::Plain, {1, 2}));
}

TEST(Random, ParallelForIsThreadCountInvariant) {
    auto run = [](unsigned threads) {
        set_threads(threads);
        std::vector<double> out(1000);
        parallel_for(out.size(), [&](std::size_t i) {
            RandomSource src(derive_seed(3, Stream::Test, {i}));
            out[i] = src.normal();
        });
        set_threads(1);
        return out;
    };
    EXPECT_EQ(run(1), run(4));
}

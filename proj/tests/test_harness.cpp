#include <gtest/gtest.h>

#include <boost/math/special_functions/owens_t.hpp>
#include <cmath>
#include <random>
#include <sstream>

#include "mstest/harness.hpp"

using namespace mstest;

namespace {

// P(Z1 <= h, Z2 <= k) for standard normals with correlation rho, via Owen's T. Needs h, k != 0.
double bvn_cdf(double h, double k, double rho) {
    using boost::math::owens_t;
    const double s = std::sqrt(1 - rho * rho);
    const double corr = (h * k < 0) ? 0.5 : 0.0;
    return 0.5 * (norm_cdf(h) + norm_cdf(k)) - owens_t(h, (k - rho * h) / (h * s)) - owens_t(k, (h - rho * k) / (k * s)) -
           corr;
}

// ESS of the 3-stage test from the bivariate normal law of the partial sums; eta = 0.5 so T_n is the sample mean.
double oracle_ess(const ThreeStageDesign& d, double mu) {
    auto z = [&](long n, double kappa) { return (kappa - mu) * std::sqrt(double(n)); };
    const long a = std::min(d.n0, d.n1), b = std::max(d.n0, d.n1);
    const double rho = std::sqrt(double(a) / double(b));
    const double h0 = z(d.n0, d.kappa0), h1 = z(d.n1, d.kappa1);
    if (d.n0 < d.n1) {
        // P(T_n0 > k0, T_n1 <= k1) = P(T_n1 <= k1) - P(T_n0 <= k0, T_n1 <= k1)
        const double cont = norm_cdf(h1) - bvn_cdf(h0, h1, rho);
        return d.n0 + (d.n1 - d.n0) * norm_sf(h0) + (d.N - d.n1) * cont;
    }
    const double cont = norm_cdf(h1) - bvn_cdf(h1, h0, rho);
    return d.n1 + (d.n0 - d.n1) * norm_cdf(h1) + (d.N - d.n0) * cont;
}

// P(T_n > kappa) for eta = 0.5 under mean mu.
double gauss_tail(double mu, long n, double kappa) { return norm_sf((kappa - mu) * std::sqrt(double(n))); }

ThreeStageDesign three(long n0, long n1, long N, double k0, double k1) {
    ThreeStageDesign d;
    d.n0 = n0, d.n1 = n1, d.N = N, d.kappa0 = k0, d.kappa1 = k1;
    return d;
}

}  // namespace

TEST(ExactEss, MatchesBivariateNormalOracle) {
    const auto m = ModelSpec::gaussian(0.5);
    for (double mu : {-0.5, -0.13, 0.0, 0.21, 0.5}) {
        for (auto d : {three(10, 25, 40, -0.11, 0.17), three(30, 12, 50, -0.07, 0.23), three(5, 6, 9, 0.31, 0.4)}) {
            EXPECT_NEAR(gaussian_exact_ess(m, d, mu), oracle_ess(d, mu), 1e-8 * double(d.N)) << mu << " " << d.n0;
        }
    }
}

TEST(ExactEss, SharedStageIsCdfDifference) {
    const auto m = ModelSpec::gaussian(0.5);
    auto d = three(16, 16, 40, -0.2, 0.1);
    const double mu = 0.05;
    const double p = norm_cdf((0.1 - mu) * 4) - norm_cdf((-0.2 - mu) * 4);
    EXPECT_NEAR(gaussian_exact_ess(m, d, mu), 16 + 24 * p, 1e-12);
}

TEST(ExactEss, SampleMeanStatisticUsesSameLaw) {
    // With eta = 0.5 the llr average equals the sample mean.
    auto d = three(10, 25, 40, -0.11, 0.17);
    EXPECT_NEAR(gaussian_exact_ess(ModelSpec::gaussian(0.5, Statistic::SampleMean), d, 0.1),
                gaussian_exact_ess(ModelSpec::gaussian(0.5), d, 0.1), 1e-12);
    // eta = 1: T = 2 xbar under llr, so the llr thresholds are twice the mean thresholds.
    auto e = three(10, 25, 40, -0.22, 0.34);
    EXPECT_NEAR(gaussian_exact_ess(ModelSpec::gaussian(1.0), e, 0.1),
                gaussian_exact_ess(ModelSpec::gaussian(1.0, Statistic::SampleMean), d, 0.1), 1e-12);
}

TEST(ExactEss, RejectsOtherModels) {
    EXPECT_THROW(gaussian_exact_ess(ModelSpec::ar1(-0.5, 0.5), three(1, 2, 3, 0, 0), 0.0), std::invalid_argument);
}

TEST(ExactEss, AgreesWithMonteCarloOnRandomDesigns) {
    const auto m = ModelSpec::gaussian(0.5);
    FssSolver s(m, {});
    std::mt19937_64 g(2024);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 5; ++i) {
        const double a = std::pow(10.0, -1 - 4 * u(g)), b = std::pow(10.0, -1 - 4 * u(g));
        const double mu = -0.75 + 1.5 * u(g);
        auto d = design_three_stage(s, a, b);
        auto e = evaluate(d, m, mu, 10000, 700 + i);
        EXPECT_NEAR(e.ess, gaussian_exact_ess(m, d, mu), 3 * e.ess_se) << a << " " << b << " " << mu;
    }
}

TEST(ExactEss, WithinBoundsAtNull) {
    const auto m = ModelSpec::gaussian(0.5);
    auto d = design_three_stage(m, 1e-4, 1e-4);
    const double x = gaussian_exact_ess(m, d, m.mu0());
    auto b = ess_bounds(d, Which::Null);
    EXPECT_LE(x, b.upper);
    // The lower bound takes P0(T_n0 > kappa0) = gamma; the design only guarantees <= gamma.
    const double p0 = gauss_tail(-0.5, d.n0, d.kappa0);
    const double p1 = gauss_tail(-0.5, d.n1, d.kappa1);
    EXPECT_LE(p0, d.gamma);
    const double rigorous = d.n0 * (1 - p1) + (d.N - d.n0) * std::max(0.0, p0 - p1);
    EXPECT_GE(x, rigorous);
    EXPECT_GE(x, b.lower - (d.N - d.n0) * (d.gamma - p0));
}

TEST(Evaluate, FixedSampleAtDesignPoint) {
    const auto m = ModelSpec::gaussian(0.5);
    auto d = design_fss(m, 0.05, 0.05);
    auto e = evaluate(d, m, m.mu0(), 10000, 9);
    EXPECT_LE(e.reject_rate, 0.05 + 3 * e.reject_se);
    EXPECT_DOUBLE_EQ(e.ess, double(d.n_star));
    EXPECT_EQ(e.test, "fss");
}

TEST(Evaluate, StageFrequenciesAndRange) {
    const auto m = ModelSpec::gaussian(0.5);
    auto d = design_four_stage_hat(m, 1e-3, 1e-3);
    auto e = evaluate(d, m, 0.1, 2000, 10);
    double sum = 0;
    for (double f : e.stage_freq) sum += f;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_GE(e.ess, double(std::min(d.n0, d.n1)));
    EXPECT_LE(e.ess, double(d.N));
    EXPECT_TRUE(std::isnan(e.bounds.lower));
    EXPECT_THROW(evaluate(d, m, 0.0, 50, 1), std::invalid_argument);
}

TEST(Evaluate, SameSeedSameReport) {
    const auto m = ModelSpec::markov(0.5, 0.25, 0.75);
    auto d = design_sprt(1e-3, 1e-3);
    auto a = evaluate(d, m, 0.5, 500, 77);
    auto b = evaluate(d, m, 0.5, 500, 77);
    auto c = evaluate(d, m, 0.5, 500, 78);
    std::ostringstream sa, sb, sc;
    write_reports_csv(sa, {a});
    write_reports_csv(sb, {b});
    write_reports_csv(sc, {c});
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_NE(sa.str(), sc.str());
}

TEST(Regimes, AlphaFromBeta) {
    EXPECT_DOUBLE_EQ(regime_alpha(Regime::Equal, 1e-3), 1e-3);
    EXPECT_NEAR(regime_alpha(Regime::Power4, 1e-2), 1e-8, 1e-20);
    EXPECT_NEAR(std::log(regime_alpha(Regime::LogPower, 1e-2)), -std::pow(std::log(100.0), 1.5), 1e-9);
    EXPECT_NEAR(std::log(regime_alpha(Regime::LogOverBeta, 1e-4)), -std::log(1e4) * std::pow(1e4, 0.08), 1e-9);
    for (auto r : {Regime::Equal, Regime::Power4, Regime::LogPower, Regime::LogOverBeta}) {
        EXPECT_EQ(parse_regime(to_string(r)), r);
        for (double b : RegimeSpec{}.betas) {
            const double a = regime_alpha(r, b);
            EXPECT_GT(a, 0.0);
            EXPECT_LT(a, 1.0);
        }
    }
    EXPECT_THROW(parse_regime("cubic"), std::invalid_argument);
}

TEST(Sweep, RatioColumnsAndTrend) {
    const auto m = ModelSpec::gaussian(0.5);
    // The downward trend shows once the SPRT boundaries are large; at beta = 0.1 its overshoot dominates.
    RegimeSpec spec{Regime::Equal, {1e-5, 1e-10}};
    auto rows = sweep(spec, m, 10000, 5);
    ASSERT_EQ(rows.size(), 8u);
    EXPECT_EQ(rows[0].report.test, "sprt");
    EXPECT_DOUBLE_EQ(rows[0].ratio, 1.0);
    for (std::size_t k = 1; k < 4; ++k) {
        EXPECT_GT(rows[k].ratio_se, 0.0);
        EXPECT_LT(rows[4 + k].ratio, rows[k].ratio + 3 * std::hypot(rows[k].ratio_se, rows[4 + k].ratio_se))
            << rows[k].report.test;
    }
    EXPECT_LT(rows[5].ratio, rows[1].ratio);
    std::ostringstream os;
    write_sweep_csv(os, rows);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, std::string(kReportHeader) + ",regime,ratio,ratio_se");
}

TEST(Sweep, DeltaMethodSe) {
    EXPECT_NEAR(ratio_se(2.0, 0.1, 4.0, 0.2), 0.5 * std::sqrt(0.0025 + 0.0025), 1e-15);
}

TEST(Robustness, SprtInflatesInTheMiddle) {
    const auto m = ModelSpec::gaussian(0.5);
    auto rs = robustness(m, 1e-4, 1e-4, {-0.7, 0.0}, 4000, 6);
    ASSERT_EQ(rs.size(), 8u);
    const auto& sprt_far = rs[3];
    const auto& sprt_mid = rs[7];
    ASSERT_EQ(sprt_mid.test, "sprt");
    for (int k = 0; k < 3; ++k) {
        EXPECT_GE(sprt_mid.ess, 1.25 * rs[4 + k].ess) << rs[4 + k].test;
        EXPECT_LT(sprt_far.ess, rs[k].ess + 3 * std::hypot(sprt_far.ess_se, rs[k].ess_se)) << rs[k].test;
        EXPECT_LE(rs[4 + k].ess, 64.0);
    }
}

TEST(Robustness, GridStaysInParameterSpace) {
    auto g = robustness_grid(ModelSpec::ar1(-0.8, 0.8));
    for (double x : g) {
        EXPECT_GT(x, -1.0);
        EXPECT_LT(x, 1.0);
    }
    EXPECT_LT(g.size(), 21u);
    EXPECT_EQ(robustness_grid(ModelSpec::gaussian(0.5)).size(), 21u);
}

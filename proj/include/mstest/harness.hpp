#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "fss.hpp"
#include "models.hpp"
#include "multistage.hpp"
#include "numeric.hpp"
#include "random.hpp"

namespace mstest {

using AnyDesign = std::variant<FssDesign, ThreeStageDesign, FourStageHatDesign, FourStageCheckDesign, SprtDesign>;

inline std::string test_id(const AnyDesign& d) {
    static const char* names[] = {"fss", "three", "four-hat", "four-check", "sprt"};
    return names[d.index()];
}

inline double design_alpha(const AnyDesign& d) {
    return std::visit(
        [](const auto& x) -> double {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, SprtDesign>) return std::exp(-x.B);
            else return x.alpha;
        },
        d);
}

inline double design_beta(const AnyDesign& d) {
    return std::visit(
        [](const auto& x) -> double {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, SprtDesign>) return std::exp(-x.A);
            else return x.beta;
        },
        d);
}

/// Largest sample size the test can use, or nullopt for the SPRT.
inline std::optional<long> max_sample_size(const AnyDesign& d) {
    return std::visit(
        [](const auto& x) -> std::optional<long> {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, SprtDesign>) return std::nullopt;
            else if constexpr (std::is_same_v<T, FssDesign>) return x.n_star;
            else return x.N;
        },
        d);
}

template <class Feed>
RunOutcome run_design(const AnyDesign& d, Feed& feed) {
    return std::visit(
        [&](const auto& x) -> RunOutcome {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, FssDesign>) {
                const double t = feed.statistic_at(x.n_star);
                return {t > x.kappa_star ? Decision::Reject : Decision::Accept, x.n_star, 1, false};
            } else if constexpr (std::is_same_v<T, ThreeStageDesign>) {
                return run_three_stage(x, feed);
            } else if constexpr (std::is_same_v<T, FourStageHatDesign>) {
                return run_four_stage_hat(x, feed);
            } else if constexpr (std::is_same_v<T, FourStageCheckDesign>) {
                return run_four_stage_check(x, feed);
            } else {
                return run_sprt(x, feed);
            }
        },
        d);
}

/// Closed-form ESS bounds when the true parameter is one of the hypotheses; NaN otherwise.
inline EssBounds bounds_at(const AnyDesign& d, const ModelSpec& m, double true_param) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    std::optional<Which> w;
    if (true_param == m.mu0()) w = Which::Null;
    else if (true_param == m.mu1()) w = Which::Alternative;
    if (!w) return {nan, nan};
    return std::visit(
        [&](const auto& x) -> EssBounds {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, SprtDesign>) return {nan, nan};
            else if constexpr (std::is_same_v<T, FssDesign>) return {double(x.n_star), double(x.n_star)};
            else return ess_bounds(x, *w);
        },
        d);
}

struct EvalReport {
    std::string test;
    ModelSpec model = ModelSpec::gaussian(0.5);
    double alpha = 0.0;
    double beta = 0.0;
    double true_param = 0.0;
    std::size_t reps = 0;
    double ess = 0.0;
    double ess_se = 0.0;
    double reject_rate = 0.0;
    double reject_se = 0.0;
    EssBounds bounds;
    std::vector<double> stage_freq;  // index k = stopped at stage k+1
    std::size_t capped = 0;
    std::uint64_t seed = 0;
};

/// Runs the design on reps simulated paths under true_param. Path r uses substream (seed, Evaluate, r).
inline EvalReport evaluate(const AnyDesign& d, const ModelSpec& m, double true_param, std::size_t reps,
                           std::uint64_t seed) {
    if (reps < 100) throw std::invalid_argument("evaluate: reps must be >= 100");
    check_param(m, true_param);
    std::vector<RunOutcome> out(reps);
    parallel_for(reps, [&](std::size_t r) {
        SimulatedFeed feed(m, true_param, derive_seed(seed, Stream::Evaluate, {r}));
        out[r] = run_design(d, feed);
    });
    EvalReport e;
    e.test = test_id(d);
    e.model = m;
    e.alpha = design_alpha(d);
    e.beta = design_beta(d);
    e.true_param = true_param;
    e.reps = reps;
    e.seed = seed;
    e.bounds = bounds_at(d, m, true_param);
    CompensatedSum s1, s2, rej;
    int max_stage = 1;
    for (const auto& o : out) max_stage = std::max(max_stage, o.stage_reached);
    std::vector<std::size_t> counts(std::size_t(max_stage), 0);
    for (const auto& o : out) {
        s1.add(double(o.sample_size));
        s2.add(double(o.sample_size) * double(o.sample_size));
        rej.add(o.decision == Decision::Reject ? 1.0 : 0.0);
        counts[std::size_t(o.stage_reached - 1)] += 1;
        e.capped += o.capped ? 1 : 0;
    }
    const double r = double(reps);
    e.ess = s1.value() / r;
    const double var = std::max(0.0, (s2.value() - r * e.ess * e.ess) / (r - 1));
    e.ess_se = std::sqrt(var / r);
    e.reject_rate = rej.value() / r;
    e.reject_se = std::sqrt(e.reject_rate * (1 - e.reject_rate) / (r - 1));
    for (auto c : counts) e.stage_freq.push_back(double(c) / r);
    return e;
}

/// Exact ESS of a 3-stage test on the Gaussian model with unit-variance observations.
inline double gaussian_exact_ess(const ModelSpec& m, const ThreeStageDesign& d, double true_mu) {
    if (m.kind() != ModelKind::GaussianMean || m.statistic() == Statistic::Binarized)
        throw std::invalid_argument("gaussian_exact_ess: needs the gaussian model with llr or mean statistic");
    // T_n > kappa  <=>  S_n > a(n, kappa), S_n the partial sum.
    auto sum_level = [&](long n, double kappa) {
        return m.statistic() == Statistic::AvgLlr ? double(n) * kappa / (2 * m.eta()) : double(n) * kappa;
    };
    const double mu = true_mu;
    auto p_above = [&](long n, double a) { return norm_sf((a - double(n) * mu) / std::sqrt(double(n))); };
    static const QuadratureRule rule = gauss_legendre(128);
    // P(S_a > x, S_b <= y) for a < b.
    auto above_then_below = [&](long a, double x, long b, double y) {
        const double sa = std::sqrt(double(a)), sw = std::sqrt(double(b - a));
        const double z0 = (x - double(a) * mu) / sa;
        auto f = [&](double z) { return norm_pdf(z) * norm_cdf((y - double(b) * mu - sa * z) / sw); };
        return integrate(rule, f, std::max(z0, -9.0), std::max(z0, 0.0) + 9.0);
    };
    // P(S_a <= y, S_b > x) for a < b.
    auto below_then_above = [&](long a, double y, long b, double x) {
        const double sa = std::sqrt(double(a)), sw = std::sqrt(double(b - a));
        const double z1 = (y - double(a) * mu) / sa;
        auto f = [&](double z) { return norm_pdf(z) * norm_sf((x - double(b) * mu - sa * z) / sw); };
        return integrate(rule, f, std::min(z1, 0.0) - 9.0, std::min(z1, 9.0));
    };
    const double n0 = double(d.n0), n1 = double(d.n1), N = double(d.N);
    const double a0 = sum_level(d.n0, d.kappa0), a1 = sum_level(d.n1, d.kappa1);
    if (d.n0 == d.n1) return n0 + (N - n0) * std::max(0.0, p_above(d.n0, a0) - p_above(d.n0, a1));
    if (d.n0 < d.n1)
        return n0 + (n1 - n0) * p_above(d.n0, a0) + (N - n1) * above_then_below(d.n0, a0, d.n1, a1);
    return n1 + (n0 - n1) * (1 - p_above(d.n1, a1)) + (N - n0) * below_then_above(d.n1, a1, d.n0, a0);
}

enum class Regime { Equal, Power4, LogPower, LogOverBeta };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::Equal: return "equal";
        case Regime::Power4: return "power4";
        case Regime::LogPower: return "logpower";
        case Regime::LogOverBeta: return "logoverbeta";
    }
    return "?";
}

inline Regime parse_regime(const std::string& s) {
    for (auto r : {Regime::Equal, Regime::Power4, Regime::LogPower, Regime::LogOverBeta})
        if (to_string(r) == s) return r;
    throw std::invalid_argument("unknown regime '" + s + "' (equal, power4, logpower, logoverbeta)");
}

inline double regime_alpha(Regime r, double beta) {
    const double lb = std::abs(std::log(beta));
    switch (r) {
        case Regime::Equal: return beta;
        case Regime::Power4: return std::pow(beta, 4);
        case Regime::LogPower: return std::exp(-std::pow(lb, 1.5));
        case Regime::LogOverBeta: return std::exp(-lb / std::pow(beta, 0.08));
    }
    return beta;
}

struct RegimeSpec {
    Regime regime = Regime::Equal;
    std::vector<double> betas{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
};

struct SweepRow {
    Regime regime = Regime::Equal;
    EvalReport report;
    double ratio = 0.0;  // ESS over the SPRT ESS at the same point
    double ratio_se = 0.0;
};

/// Delta-method SE of x/y for independent estimates.
inline double ratio_se(double x, double sx, double y, double sy) {
    const double q = x / y;
    return std::abs(q) * std::sqrt(std::pow(sx / x, 2) + std::pow(sy / y, 2));
}

/// Null-hypothesis ESS of the 3-stage, hat and check tests against the SPRT across the regime's beta grid.
inline std::vector<SweepRow> sweep(const RegimeSpec& spec, const ModelSpec& m, std::size_t reps, std::uint64_t seed,
                                   const SimBudget& budget = {}) {
    FssSolver solver(m, budget);
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < spec.betas.size(); ++i) {
        const double b = spec.betas[i];
        const double a = regime_alpha(spec.regime, b);
        if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("regime gives alpha outside (0,1)");
        std::vector<AnyDesign> ds{design_sprt(a, b), design_three_stage(solver, a, b), design_four_stage_hat(solver, a, b),
                                  design_four_stage_check(solver, a, b)};
        std::vector<EvalReport> reps_out;
        for (std::size_t k = 0; k < ds.size(); ++k)
            reps_out.push_back(evaluate(ds[k], m, m.mu0(), reps, derive_seed(seed, Stream::Sweep, {i, k})));
        const auto& sp = reps_out[0];
        for (const auto& e : reps_out)
            rows.push_back({spec.regime, e, e.ess / sp.ess, &e == &sp ? 0.0 : ratio_se(e.ess, e.ess_se, sp.ess, sp.ess_se)});
    }
    return rows;
}

/// Evenly spaced true parameters from mu0 - pad*(mu1-mu0) to mu1 + pad*(mu1-mu0), kept inside the parameter space.
inline std::vector<double> robustness_grid(const ModelSpec& m, int points = 21, double pad = 0.5) {
    const double w = m.mu1() - m.mu0();
    const double lo = m.mu0() - pad * w, hi = m.mu1() + pad * w;
    std::vector<double> g;
    for (int k = 0; k < points; ++k) {
        const double x = points == 1 ? m.mu0() : lo + (hi - lo) * k / (points - 1);
        if (m.in_param_space(x)) g.push_back(x);
    }
    return g;
}

/// ESS of the 3-stage, hat, check and SPRT tests at each true parameter.
inline std::vector<EvalReport> robustness(const ModelSpec& m, double alpha, double beta,
                                          const std::vector<double>& params, std::size_t reps, std::uint64_t seed,
                                          const SimBudget& budget = {}) {
    FssSolver solver(m, budget);
    std::vector<AnyDesign> ds{design_three_stage(solver, alpha, beta), design_four_stage_hat(solver, alpha, beta),
                              design_four_stage_check(solver, alpha, beta), design_sprt(alpha, beta)};
    std::vector<EvalReport> out;
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t k = 0; k < ds.size(); ++k)
            out.push_back(evaluate(ds[k], m, params[i], reps, derive_seed(seed, Stream::Robustness, {i, k})));
    return out;
}

inline constexpr const char* kReportHeader =
    "test,model,statistic,alpha,beta,true_param,reps,ess,ess_se,reject_rate,reject_se,bound_lower,bound_upper,seed";

namespace detail {
inline std::string num(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}
}  // namespace detail

inline void write_report_row(std::ostream& os, const EvalReport& e) {
    using detail::num;
    os << e.test << ',' << to_string(e.model.kind()) << ',' << to_string(e.model.statistic()) << ',' << num(e.alpha)
       << ',' << num(e.beta) << ',' << num(e.true_param) << ',' << e.reps << ',' << num(e.ess) << ',' << num(e.ess_se)
       << ',' << num(e.reject_rate) << ',' << num(e.reject_se) << ',' << num(e.bounds.lower) << ','
       << num(e.bounds.upper) << ',' << e.seed;
}

inline void write_reports_csv(std::ostream& os, const std::vector<EvalReport>& rs) {
    os << kReportHeader << '\n';
    for (const auto& e : rs) {
        write_report_row(os, e);
        os << '\n';
    }
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << kReportHeader << ",regime,ratio,ratio_se\n";
    for (const auto& r : rows) {
        write_report_row(os, r.report);
        os << ',' << to_string(r.regime) << ',' << detail::num(r.ratio) << ',' << detail::num(r.ratio_se) << '\n';
    }
}

}  // namespace mstest

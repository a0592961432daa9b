#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fss.hpp"
#include "models.hpp"
#include "numeric.hpp"
#include "random.hpp"

namespace mstest {

struct ThreeStageDesign {
    double alpha = 0.0;
    double beta = 0.0;
    long n0 = 0;
    long n1 = 0;
    long N = 0;
    double kappa0 = 0.0;
    double kappa1 = 0.0;
    double K = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    bool collision_repaired = false;
    FssDesign fss_n0, fss_n1, fss_N;
};

struct FourStageHatDesign : ThreeStageDesign {
    long N0 = 0;
    double K0 = 0.0;
    double gamma_prime = 0.0;
    FssDesign fss_N0;
};

struct FourStageCheckDesign : ThreeStageDesign {
    long N1 = 0;
    double K1 = 0.0;
    double delta_prime = 0.0;
    FssDesign fss_N1;
};

struct SprtDesign {
    double A = 0.0;
    double B = 0.0;
};

enum class Decision { Accept, Reject };

inline std::string to_string(Decision d) { return d == Decision::Accept ? "accept" : "reject"; }

struct RunOutcome {
    Decision decision = Decision::Accept;
    long sample_size = 0;
    int stage_reached = 0;
    bool capped = false;  // SPRT safety cap hit
};

/// The feed ended before the test could stop.
class TruncatedFeed : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Path feed over a simulated path; observations are generated on demand.
class SimulatedFeed {
public:
    SimulatedFeed(ModelSpec model, double param, std::uint64_t seed) : m_(std::move(model)), param_(param), src_(seed) {
        check_param(m_, param_);
    }
    double statistic_at(long n) {
        advance(n);
        return s_.statistic_value;
    }
    double llr_at(long n) {
        advance(n);
        return s_.llr_value;
    }

private:
    void advance(long n) {
        if (n < s_.n) throw std::logic_error("SimulatedFeed queried backwards");
        while (s_.n < n) push_observation(m_, s_, draw_observation(m_, param_, s_, src_));
    }
    ModelSpec m_;
    double param_;
    RandomSource src_;
    PathState s_;
};

/// Path feed over recorded values T_1..T_m (and optionally Lambda_1..Lambda_m).
class RecordedFeed {
public:
    explicit RecordedFeed(std::vector<double> stats, std::vector<double> llrs = {})
        : t_(std::move(stats)), l_(std::move(llrs)) {}
    double statistic_at(long n) const { return at(t_, n); }
    double llr_at(long n) const { return at(l_, n); }

private:
    static double at(const std::vector<double>& v, long n) {
        if (n < 1 || std::size_t(n) > v.size())
            throw TruncatedFeed("feed has " + std::to_string(v.size()) + " values, needed n=" + std::to_string(n));
        return v[std::size_t(n - 1)];
    }
    std::vector<double> t_, l_;
};

namespace detail {

struct Checkpoint {
    long n;
    bool accept;  // accept if T <= threshold, else reject if T > threshold
    double threshold;
};

/// Early checks in sample-size order (accept before reject at equal n), then reject at N iff T_N > K.
template <class Feed>
RunOutcome run_checks(std::vector<Checkpoint> checks, long N, double K, Feed& feed) {
    std::stable_sort(checks.begin(), checks.end(), [](const auto& a, const auto& b) {
        return a.n != b.n ? a.n < b.n : (a.accept && !b.accept);
    });
    std::vector<long> sizes;
    for (const auto& c : checks) sizes.push_back(c.n);
    sizes.push_back(N);
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    auto stage_of = [&](long n) { return int(std::lower_bound(sizes.begin(), sizes.end(), n) - sizes.begin()) + 1; };
    for (const auto& c : checks) {
        const double t = feed.statistic_at(c.n);
        if (c.accept && t <= c.threshold) return {Decision::Accept, c.n, stage_of(c.n), false};
        if (!c.accept && t > c.threshold) return {Decision::Reject, c.n, stage_of(c.n), false};
    }
    const double t = feed.statistic_at(N);
    return {t > K ? Decision::Reject : Decision::Accept, N, stage_of(N), false};
}

}  // namespace detail

template <class Feed>
RunOutcome run_three_stage(const ThreeStageDesign& d, Feed& feed) {
    return detail::run_checks({{d.n0, true, d.kappa0}, {d.n1, false, d.kappa1}}, d.N, d.K, feed);
}

template <class Feed>
RunOutcome run_four_stage_hat(const FourStageHatDesign& d, Feed& feed) {
    return detail::run_checks({{d.n0, true, d.kappa0}, {d.n1, false, d.kappa1}, {d.N0, true, d.K0}}, d.N, d.K, feed);
}

template <class Feed>
RunOutcome run_four_stage_check(const FourStageCheckDesign& d, Feed& feed) {
    return detail::run_checks({{d.n0, true, d.kappa0}, {d.n1, false, d.kappa1}, {d.N1, false, d.K1}}, d.N, d.K, feed);
}

inline constexpr long kSprtCap = 10'000'000;

template <class Feed>
RunOutcome run_sprt(const SprtDesign& d, Feed& feed, long cap = kSprtCap) {
    for (long n = 1; n <= cap; ++n) {
        const double l = feed.llr_at(n);
        if (l >= d.B) return {Decision::Reject, n, 1, false};
        if (l <= -d.A) return {Decision::Accept, n, 1, false};
    }
    return {feed.llr_at(cap) > 0 ? Decision::Reject : Decision::Accept, cap, 1, true};
}

inline SprtDesign design_sprt(double alpha, double beta) {
    check_levels(alpha, beta);
    return {std::abs(std::log(beta)), std::abs(std::log(alpha))};
}

inline constexpr int kGrid1d = 200;
inline constexpr int kGrid2d = 80;

namespace detail {

struct Pick1 {
    double level = 0.0;
    FssDesign d;
    double bound = kInf;
};

/// Minimizes n + (N - n) * level over the grid subject to n < N; falls back to the unconstrained minimizer.
template <class Make>
Pick1 pick_one(double lower, long N, Make&& make, bool& collided) {
    Pick1 best, any;
    for (double g : log_uniform_grid(lower, kGrid1d)) {
        FssDesign d = make(g);
        const double u = double(d.n_star) + double(N - d.n_star) * g;
        if (d.n_star < N && u < best.bound) best = {g, d, u};
        if (u < any.bound) any = {g, d, u};
    }
    if (std::isfinite(best.bound)) return best;
    collided = true;
    return any;
}

struct Pick2 {
    double outer = 0.0;  // larger level (gamma or delta)
    double inner = 0.0;  // smaller level (gamma' or delta')
    FssDesign first, second;
    double bound = kInf;
};

/// Minimizes n + (M - n) * outer + (N - M) * inner over lower < inner < outer < 1 with n < M < N.
template <class Make>
Pick2 pick_two(double lower, long N, Make&& make, bool& collided) {
    const auto grid = log_uniform_grid(lower, kGrid2d);
    std::vector<FssDesign> ds;
    ds.reserve(grid.size());
    for (double g : grid) ds.push_back(make(g));
    Pick2 best, any;
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const long n = ds[i].n_star;
            const long m = ds[j].n_star;
            const double u = double(n) + double(m - n) * grid[i] + double(N - m) * grid[j];
            if (n < m && m < N && u < best.bound) best = {grid[i], grid[j], ds[i], ds[j], u};
            if (u < any.bound) any = {grid[i], grid[j], ds[i], ds[j], u};
        }
    if (std::isfinite(best.bound)) return best;
    collided = true;
    return any;
}

}  // namespace detail

inline ThreeStageDesign design_three_stage(FssSolver& solver, double alpha, double beta) {
    check_levels(alpha, beta);
    ThreeStageDesign d;
    d.alpha = alpha;
    d.beta = beta;
    d.fss_N = solver.design(alpha / 2, beta / 2);
    const long N = d.fss_N.n_star;
    auto g = detail::pick_one(alpha / 2, N, [&](double x) { return solver.design(x, beta / 2); }, d.collision_repaired);
    auto h = detail::pick_one(beta / 2, N, [&](double x) { return solver.design(alpha / 2, x); }, d.collision_repaired);
    d.gamma = g.level;
    d.delta = h.level;
    d.fss_n0 = g.d;
    d.fss_n1 = h.d;
    d.n0 = g.d.n_star;
    d.n1 = h.d.n_star;
    d.N = std::max({N, d.n0 + 1, d.n1 + 1});
    d.K = d.fss_N.kappa_star;
    d.kappa1 = d.fss_n1.kappa_star;
    d.kappa0 = std::min(d.fss_n0.kappa_star, d.kappa1);
    return d;
}

inline FourStageHatDesign design_four_stage_hat(FssSolver& solver, double alpha, double beta) {
    check_levels(alpha, beta);
    FourStageHatDesign d;
    d.alpha = alpha;
    d.beta = beta;
    d.fss_N = solver.design(alpha / 2, beta / 3);
    const long N = d.fss_N.n_star;
    auto g = detail::pick_two(alpha / 2, N, [&](double x) { return solver.design(x, beta / 3); }, d.collision_repaired);
    auto h = detail::pick_one(beta / 3, N, [&](double x) { return solver.design(alpha / 2, x); }, d.collision_repaired);
    d.gamma = g.outer;
    d.gamma_prime = g.inner;
    d.delta = h.level;
    d.fss_n0 = g.first;
    d.fss_N0 = g.second;
    d.fss_n1 = h.d;
    d.n0 = d.fss_n0.n_star;
    d.N0 = std::max(d.fss_N0.n_star, d.n0 + 1);
    d.n1 = d.fss_n1.n_star;
    d.N = std::max({N, d.N0 + 1, d.n1 + 1});
    d.K = d.fss_N.kappa_star;
    d.kappa1 = d.fss_n1.kappa_star;
    d.kappa0 = std::min(d.fss_n0.kappa_star, d.kappa1);
    d.K0 = std::min(d.fss_N0.kappa_star, d.kappa1);
    return d;
}

inline FourStageCheckDesign design_four_stage_check(FssSolver& solver, double alpha, double beta) {
    check_levels(alpha, beta);
    FourStageCheckDesign d;
    d.alpha = alpha;
    d.beta = beta;
    d.fss_N = solver.design(alpha / 3, beta / 2);
    const long N = d.fss_N.n_star;
    auto g = detail::pick_one(alpha / 3, N, [&](double x) { return solver.design(x, beta / 2); }, d.collision_repaired);
    auto h = detail::pick_two(beta / 2, N, [&](double x) { return solver.design(alpha / 3, x); }, d.collision_repaired);
    d.gamma = g.level;
    d.delta = h.outer;
    d.delta_prime = h.inner;
    d.fss_n0 = g.d;
    d.fss_n1 = h.first;
    d.fss_N1 = h.second;
    d.n0 = d.fss_n0.n_star;
    d.n1 = d.fss_n1.n_star;
    d.N1 = std::max(d.fss_N1.n_star, d.n1 + 1);
    d.N = std::max({N, d.N1 + 1, d.n0 + 1});
    d.K = d.fss_N.kappa_star;
    d.kappa1 = d.fss_n1.kappa_star;
    d.kappa0 = std::min(d.fss_n0.kappa_star, d.kappa1);
    d.K1 = std::max(d.fss_N1.kappa_star, d.kappa0);
    return d;
}

/// Hat design from given free parameters; stage collisions bump the later stage and keep its threshold.
inline FourStageHatDesign build_four_stage_hat(FssSolver& solver, double alpha, double beta, double gamma,
                                               double gamma_prime, double delta) {
    FourStageHatDesign d;
    d.alpha = alpha;
    d.beta = beta;
    d.gamma = gamma;
    d.gamma_prime = gamma_prime;
    d.delta = delta;
    d.fss_N = solver.design(alpha / 2, beta / 3);
    d.fss_n0 = solver.design(gamma, beta / 3);
    d.fss_N0 = solver.design(gamma_prime, beta / 3);
    d.fss_n1 = solver.design(alpha / 2, delta);
    d.n0 = d.fss_n0.n_star;
    d.n1 = d.fss_n1.n_star;
    d.N0 = std::max(d.fss_N0.n_star, d.n0 + 1);
    d.N = std::max({d.fss_N.n_star, d.N0 + 1, d.n1 + 1});
    d.collision_repaired = d.N0 != d.fss_N0.n_star || d.N != d.fss_N.n_star;
    d.K = d.fss_N.kappa_star;
    d.kappa1 = d.fss_n1.kappa_star;
    d.kappa0 = std::min(d.fss_n0.kappa_star, d.kappa1);
    d.K0 = std::min(d.fss_N0.kappa_star, d.kappa1);
    return d;
}

struct EssBounds {
    double lower = 0.0;
    double upper = 0.0;
};

enum class Which { Null, Alternative };

namespace detail {
inline double pos(double x) { return std::max(0.0, x); }
}  // namespace detail

inline EssBounds ess_bounds(const ThreeStageDesign& d, Which w) {
    const double n0 = double(d.n0), n1 = double(d.n1), N = double(d.N);
    if (w == Which::Null)
        return {n0 * (1 - d.alpha / 2) + (N - n0) * (d.gamma - d.alpha / 2), n0 + (N - n0) * d.gamma};
    return {n1 * (1 - d.beta / 2) + (N - n1) * (d.delta - d.beta / 2), n1 + (N - n1) * d.delta};
}

inline EssBounds ess_bounds(const FourStageHatDesign& d, Which w) {
    const double n0 = double(d.n0), n1 = double(d.n1), N = double(d.N), N0 = double(d.N0);
    const double a = d.alpha, b = d.beta, g = d.gamma, gp = d.gamma_prime;
    if (w == Which::Null)
        return {n0 * (1 - a / 2) + (N0 - n0) * (g - a / 2) + (N - N0) * detail::pos(g + gp - 1 - a / 2),
                n0 + (N0 - n0) * g + (N - N0) * gp};
    return {n1 * (1 - 2 * b / 3) + (N - n1) * (d.delta - 2 * b / 3), n1 + (N - n1) * d.delta};
}

inline EssBounds ess_bounds(const FourStageCheckDesign& d, Which w) {
    const double n0 = double(d.n0), n1 = double(d.n1), N = double(d.N), N1 = double(d.N1);
    const double a = d.alpha, b = d.beta, dl = d.delta, dp = d.delta_prime;
    if (w == Which::Null) return {n0 * (1 - 2 * a / 3) + (N - n0) * (d.gamma - 2 * a / 3), n0 + (N - n0) * d.gamma};
    return {n1 * (1 - b / 2) + (N1 - n1) * (dl - b / 2) + (N - N1) * detail::pos(dl + dp - 1 - b / 2),
            n1 + (N1 - n1) * dl + (N - N1) * dp};
}

inline ThreeStageDesign design_three_stage(const ModelSpec& m, double alpha, double beta, const SimBudget& b = {}) {
    FssSolver s(m, b);
    return design_three_stage(s, alpha, beta);
}

inline FourStageHatDesign design_four_stage_hat(const ModelSpec& m, double alpha, double beta,
                                                const SimBudget& b = {}) {
    FssSolver s(m, b);
    return design_four_stage_hat(s, alpha, beta);
}

inline FourStageCheckDesign design_four_stage_check(const ModelSpec& m, double alpha, double beta,
                                                    const SimBudget& b = {}) {
    FssSolver s(m, b);
    return design_four_stage_check(s, alpha, beta);
}

}  // namespace mstest

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "models.hpp"
#include "numeric.hpp"
#include "random.hpp"

namespace mstest {

/// Simulation distribution Q = model at tilt_param, whose statistic limit equals level.
struct TiltSpec {
    ModelSpec model;
    double level = 0.0;
    double tilt_param = 0.0;
    Hypothesis base = Hypothesis::P0;
};

/// Tilt matching the a.s. limit to kappa; kappa must lie strictly between J0 and J1.
inline TiltSpec tilt_for_level(const ModelSpec& m, double kappa, Hypothesis base = Hypothesis::P0) {
    auto [j0, j1] = limit_endpoints(m);
    if (!(kappa > j0 && kappa < j1))
        throw std::range_error("tilt level " + std::to_string(kappa) + " outside (J0, J1) = (" + std::to_string(j0) +
                               ", " + std::to_string(j1) + ")");
    return {m, kappa, param_for_limit(m, kappa), base};
}

struct Event {
    enum class Side { Above, AtOrBelow };
    Side side = Side::Above;
    double kappa = 0.0;

    static Event above(double k) { return {Side::Above, k}; }
    static Event at_or_below(double k) { return {Side::AtOrBelow, k}; }
    [[nodiscard]] bool contains(double t) const { return side == Side::Above ? t > kappa : t <= kappa; }
};

struct TailEstimate {
    double estimate = 0.0;
    double se = 0.0;
    double log_efficiency_diag = -kInf;  // (1/n) log of the second moment
    std::size_t hits = 0;
    bool reliable = false;
};

/// Hits needed before an estimate counts as reliable.
inline constexpr std::size_t kMinHits = 20;

/// One simulated path summarized at time n: T_n and log dP_i/dQ for both hypotheses.
struct TerminalDraw {
    double t = 0.0;
    double lw0 = 0.0;
    double lw1 = 0.0;
};

/// Simulates reps paths of length n under param. Replication r uses substream (seed, r).
inline std::vector<TerminalDraw> simulate_terminal(const ModelSpec& m, double param, long n, std::size_t reps,
                                                   std::uint64_t seed) {
    check_param(m, param);
    std::vector<TerminalDraw> out(reps);
    parallel_for(reps, [&](std::size_t r) {
        RandomSource src(splitmix64(seed ^ splitmix64(r)));
        PathState s;
        for (long i = 0; i < n; ++i) push_observation(m, s, draw_observation(m, param, s, src));
        out[r] = {s.statistic_value, log_lr(m, s, m.mu0(), param), log_lr(m, s, m.mu1(), param)};
    });
    return out;
}

/// Mean and SE of weights exp(lw) over hits, from log-sum-exp of the first and second moments.
inline TailEstimate summarize_weights(double log_sum, double log_sum2, std::size_t hits, std::size_t reps, long n) {
    TailEstimate e;
    e.hits = hits;
    e.reliable = hits >= kMinHits;
    if (hits == 0) return e;
    const double log_r = std::log(double(reps));
    e.estimate = std::exp(log_sum - log_r);
    const double ratio = std::exp(log_sum2 - 2 * log_sum + log_r);  // m2 / est^2
    e.se = e.estimate * std::sqrt(std::max(0.0, ratio - 1.0) / double(reps - 1));
    e.log_efficiency_diag = (log_sum2 - log_r) / double(n);
    return e;
}

/// Weighted tail estimate over draws for the given base hypothesis.
inline TailEstimate weighted_tail(const std::vector<TerminalDraw>& draws, Event ev, Hypothesis base, long n) {
    double l1 = -kInf;
    double l2 = -kInf;
    std::size_t hits = 0;
    for (const auto& d : draws) {
        if (!ev.contains(d.t)) continue;
        const double lw = base == Hypothesis::P0 ? d.lw0 : d.lw1;
        l1 = log_add_exp(l1, lw);
        l2 = log_add_exp(l2, 2 * lw);
        ++hits;
    }
    return summarize_weights(l1, l2, hits, draws.size(), n);
}

/// Importance-sampling estimate of P_base(event at time n) using paths simulated under the tilt.
inline TailEstimate is_estimate(const TiltSpec& tilt, Event ev, long n, std::size_t reps, std::uint64_t seed) {
    if (reps < 100) throw std::invalid_argument("is_estimate: reps must be >= 100");
    if (n < 1) throw std::invalid_argument("is_estimate: n must be >= 1");
    auto draws = simulate_terminal(tilt.model, tilt.tilt_param, n, reps, derive_seed(seed, Stream::Tilted));
    return weighted_tail(draws, ev, tilt.base, n);
}

/// Plain Monte Carlo estimate of P_param(event at time n).
inline TailEstimate plain_estimate(const ModelSpec& m, double param, Event ev, long n, std::size_t reps,
                                   std::uint64_t seed) {
    if (reps < 2) throw std::invalid_argument("plain_estimate: reps must be >= 2");
    auto draws = simulate_terminal(m, param, n, reps, derive_seed(seed, Stream::Plain));
    std::size_t hits = 0;
    for (const auto& d : draws) hits += ev.contains(d.t) ? 1 : 0;
    TailEstimate e;
    e.hits = hits;
    e.reliable = hits >= kMinHits;
    e.estimate = double(hits) / double(reps);
    e.se = std::sqrt(e.estimate * (1 - e.estimate) / double(reps - 1));
    e.log_efficiency_diag = e.estimate > 0 ? std::log(e.estimate) / double(n) : -kInf;
    return e;
}

/// Draws sorted by T with cumulative log-weights, answering tail queries at any kappa in O(log R).
class SortedSample {
public:
    SortedSample(std::vector<TerminalDraw> draws, long n) : n_(n), reps_(draws.size()) {
        std::sort(draws.begin(), draws.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
        const std::size_t r = draws.size();
        t_.resize(r);
        above0_.assign(r + 1, -kInf);
        above0_sq_.assign(r + 1, -kInf);
        below1_.assign(r + 1, -kInf);
        below1_sq_.assign(r + 1, -kInf);
        for (std::size_t i = 0; i < r; ++i) t_[i] = draws[i].t;
        for (std::size_t i = r; i-- > 0;) {
            above0_[i] = log_add_exp(above0_[i + 1], draws[i].lw0);
            above0_sq_[i] = log_add_exp(above0_sq_[i + 1], 2 * draws[i].lw0);
        }
        for (std::size_t i = 0; i < r; ++i) {
            below1_[i + 1] = log_add_exp(below1_[i], draws[i].lw1);
            below1_sq_[i + 1] = log_add_exp(below1_sq_[i], 2 * draws[i].lw1);
        }
    }

    /// P0(T_n > kappa).
    [[nodiscard]] TailEstimate above0(double kappa) const {
        const std::size_t k = split(kappa);
        return summarize_weights(above0_[k], above0_sq_[k], reps_ - k, reps_, n_);
    }

    /// P1(T_n <= kappa).
    [[nodiscard]] TailEstimate below1(double kappa) const {
        const std::size_t k = split(kappa);
        return summarize_weights(below1_[k], below1_sq_[k], k, reps_, n_);
    }

    [[nodiscard]] const std::vector<double>& values() const { return t_; }

private:
    std::size_t split(double kappa) const {
        return std::size_t(std::upper_bound(t_.begin(), t_.end(), kappa) - t_.begin());
    }

    long n_;
    std::size_t reps_;
    std::vector<double> t_;
    std::vector<double> above0_, above0_sq_, below1_, below1_sq_;
};

}  // namespace mstest

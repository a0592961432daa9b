#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "models.hpp"
#include "numeric.hpp"
#include "random.hpp"
#include "sampler.hpp"

namespace mstest {

struct SimBudget {
    std::size_t reps = 10000;
    std::uint64_t seed = 1;
    long max_n = 100000;
    bool force_simulation = false;  // skip the Gaussian closed form
};

enum class FssMethod { ClosedForm, MonteCarlo, ImportanceSampling };

inline std::string to_string(FssMethod m) {
    switch (m) {
        case FssMethod::ClosedForm: return "closed-form";
        case FssMethod::MonteCarlo: return "monte-carlo";
        case FssMethod::ImportanceSampling: return "importance-sampling";
    }
    return "?";
}

/// Estimates at one probed sample size: kappa is the certified alpha-threshold (infinite if none).
struct FssEvidence {
    long n = 0;
    double kappa = kInf;
    double p0 = 1.0;
    double se0 = 0.0;
    double p1 = 1.0;
    double se1 = 0.0;
    bool feasible = false;
};

struct FssDesign {
    double alpha = 0.0;
    double beta = 0.0;
    long n_star = 0;
    double kappa_star = 0.0;
    FssMethod method = FssMethod::ClosedForm;
    std::vector<FssEvidence> evidence;
};

/// The simulation budget ran out before both error constraints could be certified.
class InfeasibleBudget : public std::runtime_error {
public:
    InfeasibleBudget(const std::string& what, FssDesign best) : std::runtime_error(what), best_(std::move(best)) {}
    [[nodiscard]] const FssDesign& best() const { return best_; }

private:
    FssDesign best_;
};

inline void check_levels(double alpha, double beta) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in (0,1)");
}

/// Constraint certified under the stochastic acceptance rule.
inline bool certified(const TailEstimate& t, double level) { return t.reliable && t.estimate + 2 * t.se <= level; }

inline bool has_gaussian_closed_form(const ModelSpec& m) {
    return m.kind() == ModelKind::GaussianMean &&
           (m.statistic() == Statistic::AvgLlr || m.statistic() == Statistic::SampleMean);
}

/// Closed form for the Gaussian mean with the LLR or sample-mean statistic.
inline FssDesign gaussian_fss(const ModelSpec& m, double alpha, double beta) {
    check_levels(alpha, beta);
    if (!has_gaussian_closed_form(m)) throw std::invalid_argument("gaussian closed form needs statistic llr or mean");
    const double info = llr_information(m).first;
    const double za = norm_upper_quantile(alpha);
    const double zb = norm_upper_quantile(beta);
    const double s = za + zb;
    FssDesign d;
    d.alpha = alpha;
    d.beta = beta;
    d.method = FssMethod::ClosedForm;
    d.n_star = s <= 0 ? 1 : std::max(1L, long(std::ceil(s * s / (2 * info) - 1e-12)));
    const double sd = std::sqrt(2 * info / double(d.n_star));
    const double lo = -info + za * sd;  // P0(mean LLR > lo) = alpha
    const double hi = info - zb * sd;   // P1(mean LLR <= hi) = beta
    double kappa = s <= 0 ? 0.5 * (lo + hi) : info * (za - zb) / s;
    kappa = std::clamp(kappa, lo, hi);
    auto probs = [&](long n, double k) {
        const double r = std::sqrt(double(n) / (2 * info));
        return std::pair{norm_sf((k + info) * r), norm_cdf((k - info) * r)};
    };
    if (d.n_star > 1) {
        const long n = d.n_star - 1;
        const double k = -info + za * std::sqrt(2 * info / double(n));
        auto [p0, p1] = probs(n, k);
        d.evidence.push_back({n, k, p0, 0.0, p1, 0.0, p1 <= beta});
    }
    auto [p0, p1] = probs(d.n_star, kappa);
    d.evidence.push_back({d.n_star, kappa, p0, 0.0, p1, 0.0, true});
    const double scale = m.statistic() == Statistic::SampleMean ? 1.0 / (m.mu1() - m.mu0()) : 1.0;
    d.kappa_star = kappa * scale;
    for (auto& e : d.evidence) e.kappa *= scale;
    return d;
}

/// Tail estimate plus how it was obtained.
struct TailResult : TailEstimate {
    FssMethod method = FssMethod::MonteCarlo;
};

/// P_hyp(T_n > kappa) for P0, P_hyp(T_n <= kappa) for P1. Plain MC when its estimate exceeds 1e-3,
/// otherwise importance sampling under the tilt whose limit equals kappa.
inline TailResult tail_prob(const ModelSpec& m, Hypothesis hyp, long n, double kappa, const SimBudget& budget) {
    if (n < 1) throw std::invalid_argument("tail_prob: n must be >= 1");
    const Event ev = hyp == Hypothesis::P0 ? Event::above(kappa) : Event::at_or_below(kappa);
    const auto seed = derive_seed(budget.seed, Stream::Plain, {std::uint64_t(n), std::uint64_t(hyp)});
    TailResult r;
    static_cast<TailEstimate&>(r) = plain_estimate(m, m.param(hyp), ev, n, budget.reps, seed);
    if (r.estimate > 1e-3) return r;
    auto [lo, hi] = attainable_limits(m);
    if (!(kappa > lo && kappa < hi)) return r;
    const TiltSpec tilt{m, kappa, param_for_limit(m, kappa), hyp};
    static_cast<TailEstimate&>(r) = is_estimate(tilt, ev, n, std::max<std::size_t>(budget.reps, 100), seed);
    r.method = FssMethod::ImportanceSampling;
    return r;
}

/// Simulation search for n*(alpha, beta), kappa*(alpha, beta). Samples are cached per n and shared by
/// all level pairs, and designs are memoized per level pair.
class FssSolver {
public:
    static constexpr int kGridLevels = 321;
    static constexpr double kPlainFloor = 1e-3;

    FssSolver(ModelSpec model, SimBudget budget) : m_(std::move(model)), budget_(budget) {
        auto [j0, j1] = limit_endpoints(m_);
        const double w = j1 - j0;
        auto [alo, ahi] = attainable_limits(m_);
        const double pad = 1e-6 * w;
        const double lo = std::max(j0 - 4 * w, std::isfinite(alo) ? alo + pad : -kInf);
        const double hi = std::min(j1 + 4 * w, std::isfinite(ahi) ? ahi - pad : kInf);
        levels_.resize(kGridLevels);
        for (int k = 0; k < kGridLevels; ++k) levels_[k] = lo + (hi - lo) * k / (kGridLevels - 1);
    }

    [[nodiscard]] const ModelSpec& model() const { return m_; }
    [[nodiscard]] const SimBudget& budget() const { return budget_; }

    FssDesign design(double alpha, double beta) {
        check_levels(alpha, beta);
        const auto key = std::pair{alpha, beta};
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        FssDesign d = has_gaussian_closed_form(m_) && !budget_.force_simulation ? gaussian_fss(m_, alpha, beta)
                                                                                : search(alpha, beta);
        memo_.emplace(key, d);
        return d;
    }

    /// Cached-sample estimate of P0(T_n > kappa) or P1(T_n <= kappa).
    TailResult tail(Hypothesis hyp, long n, double kappa) {
        auto& lv = level(n);
        const bool null = hyp == Hypothesis::P0;
        auto& plain = null ? lv.plain0 : lv.plain1;
        if (!plain) plain = std::make_unique<SortedSample>(sample(m_.param(hyp), n, Stream::Plain, unsigned(hyp)), n);
        TailResult r;
        static_cast<TailEstimate&>(r) = null ? plain->above0(kappa) : plain->below1(kappa);
        if (r.estimate > kPlainFloor && r.reliable) return r;
        const auto& tilted = tilted_sample(n, nearest_level(kappa));
        static_cast<TailEstimate&>(r) = null ? tilted.above0(kappa) : tilted.below1(kappa);
        r.method = FssMethod::ImportanceSampling;
        return r;
    }

    /// Certified alpha-threshold and beta check at sample size n.
    FssEvidence probe(long n, double alpha, double beta) {
        FssEvidence e;
        e.n = n;
        auto ok0 = [&](double k) { return certified(tail(Hypothesis::P0, n, k), alpha); };
        // Smallest certified grid level: gallop upward from the first level where plain MC stops applying.
        int start = 0;
        while (start < kGridLevels) {
            auto t = tail(Hypothesis::P0, n, levels_[start]);
            if (t.method == FssMethod::ImportanceSampling || ok0(levels_[start])) break;
            ++start;
        }
        int bad = start - 1;
        int good = -1;
        for (int step = 1, k = start; k < kGridLevels; k = start + step, step *= 2) {
            if (ok0(levels_[k])) {
                good = k;
                break;
            }
            bad = k;
        }
        if (good < 0 && bad < kGridLevels - 1 && ok0(levels_.back())) good = kGridLevels - 1;
        if (good < 0) return e;
        while (good - bad > 1) {
            const int mid = (good + bad) / 2;
            (ok0(levels_[mid]) ? good : bad) = mid;
        }
        double hi = levels_[good];
        double lo = bad >= 0 ? levels_[bad] : (level_min(n) - 1.0);
        for (int it = 0; it < 100 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (ok0(mid) ? hi : lo) = mid;
        }
        const auto t0 = tail(Hypothesis::P0, n, hi);
        const auto t1 = tail(Hypothesis::P1, n, hi);
        e.kappa = hi;
        e.p0 = t0.estimate;
        e.se0 = t0.se;
        e.p1 = t1.estimate;
        e.se1 = t1.se;
        e.feasible = certified(t1, beta);
        last_method_ = (t0.method == FssMethod::ImportanceSampling || t1.method == FssMethod::ImportanceSampling)
                           ? FssMethod::ImportanceSampling
                           : FssMethod::MonteCarlo;
        return e;
    }

private:
    struct LevelData {
        std::unique_ptr<SortedSample> plain0;
        std::unique_ptr<SortedSample> plain1;
        std::map<int, SortedSample> tilted;
    };

    FssDesign search(double alpha, double beta) {
        FssDesign d;
        d.alpha = alpha;
        d.beta = beta;
        std::map<long, std::pair<FssEvidence, FssMethod>> seen;
        auto run = [&](long n) {
            auto e = probe(n, alpha, beta);
            seen[n] = {e, last_method_};
            d.evidence.push_back(e);
            return e.feasible;
        };
        long lo = 0;
        long hi = 1;
        while (!run(hi)) {
            lo = hi;
            hi *= 2;
            if (hi > budget_.max_n) {
                const auto& last = d.evidence.back();
                FssDesign best = d;
                best.n_star = last.n;
                best.kappa_star = last.kappa;
                best.method = seen[last.n].second;
                throw InfeasibleBudget("no certified design for alpha=" + std::to_string(alpha) + ", beta=" +
                                           std::to_string(beta) + " up to n=" + std::to_string(budget_.max_n) +
                                           " with " + std::to_string(budget_.reps) + " replications",
                                       best);
            }
        }
        while (hi - lo > 1) {
            const long mid = lo + (hi - lo) / 2;
            (run(mid) ? hi : lo) = mid;
        }
        d.n_star = hi;
        d.kappa_star = seen[hi].first.kappa;
        d.method = seen[hi].second;
        std::sort(d.evidence.begin(), d.evidence.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
        return d;
    }

    std::vector<TerminalDraw> sample(double param, long n, Stream tag, std::uint64_t idx) const {
        return simulate_terminal(m_, param, n, budget_.reps, derive_seed(budget_.seed, tag, {std::uint64_t(n), idx}));
    }

    LevelData& level(long n) { return cache_[n]; }

    const SortedSample& tilted_sample(long n, int k) {
        auto& lv = level(n);
        auto it = lv.tilted.find(k);
        if (it == lv.tilted.end()) {
            const double param = param_for_limit(m_, levels_[k]);
            it = lv.tilted.emplace(k, SortedSample(sample(param, n, Stream::Tilted, std::uint64_t(k)), n)).first;
        }
        return it->second;
    }

    int nearest_level(double kappa) const {
        auto it = std::lower_bound(levels_.begin(), levels_.end(), kappa);
        if (it == levels_.begin()) return 0;
        if (it == levels_.end()) return kGridLevels - 1;
        const int k = int(it - levels_.begin());
        return (kappa - levels_[k - 1] <= levels_[k] - kappa) ? k - 1 : k;
    }

    double level_min(long n) {
        auto& lv = level(n);
        if (!lv.plain0) lv.plain0 = std::make_unique<SortedSample>(sample(m_.mu0(), n, Stream::Plain, 0), n);
        return std::min(lv.plain0->values().front(), levels_.front());
    }

    ModelSpec m_;
    SimBudget budget_;
    std::vector<double> levels_;
    std::map<long, LevelData> cache_;
    std::map<std::pair<double, double>, FssDesign> memo_;
    FssMethod last_method_ = FssMethod::MonteCarlo;
};

/// One-shot fixed-sample-size design.
inline FssDesign design_fss(const ModelSpec& m, double alpha, double beta, const SimBudget& budget = {}) {
    FssSolver solver(m, budget);
    return solver.design(alpha, beta);
}

}  // namespace mstest

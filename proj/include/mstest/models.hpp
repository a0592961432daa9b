#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "numeric.hpp"
#include "random.hpp"

namespace mstest {

enum class ModelKind { GaussianMean, Ar1, TwoStateMarkov };
enum class Statistic { AvgLlr, SampleMean, Binarized, YuleWalker };
enum class Hypothesis { P0, P1 };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::GaussianMean: return "gaussian";
        case ModelKind::Ar1: return "ar1";
        case ModelKind::TwoStateMarkov: return "markov";
    }
    return "?";
}

inline std::string to_string(Statistic s) {
    switch (s) {
        case Statistic::AvgLlr: return "llr";
        case Statistic::SampleMean: return "mean";
        case Statistic::Binarized: return "binarized";
        case Statistic::YuleWalker: return "yule-walker";
    }
    return "?";
}

/// One of the three models plus the test statistic. Immutable once built.
class ModelSpec {
public:
    static ModelSpec gaussian(double eta, Statistic stat = Statistic::AvgLlr, double x_star = 0.0) {
        if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("gaussian model: eta must be > 0");
        if (stat == Statistic::YuleWalker)
            throw std::invalid_argument("gaussian model admits statistics llr, mean, binarized");
        ModelSpec m(ModelKind::GaussianMean, stat);
        m.mu0_ = -eta;
        m.mu1_ = eta;
        m.x_star_ = x_star;
        return m;
    }

    static ModelSpec ar1(double mu0, double mu1, Statistic stat = Statistic::AvgLlr) {
        if (!(mu0 > -1.0 && mu1 < 1.0 && mu0 < mu1))
            throw std::invalid_argument("ar1 model: need -1 < mu0 < mu1 < 1");
        if (stat != Statistic::AvgLlr && stat != Statistic::YuleWalker)
            throw std::invalid_argument("ar1 model admits statistics llr, yule-walker");
        ModelSpec m(ModelKind::Ar1, stat);
        m.mu0_ = mu0;
        m.mu1_ = mu1;
        return m;
    }

    static ModelSpec markov(double p, double mu0, double mu1, Statistic stat = Statistic::AvgLlr) {
        if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("markov model: p must be in (0,1)");
        if (!(mu0 > 0.0 && mu1 < 1.0 && mu0 < mu1))
            throw std::invalid_argument("markov model: need 0 < mu0 < mu1 < 1");
        if (stat != Statistic::AvgLlr && stat != Statistic::SampleMean)
            throw std::invalid_argument("markov model admits statistics llr, mean");
        ModelSpec m(ModelKind::TwoStateMarkov, stat);
        m.p_ = p;
        m.mu0_ = mu0;
        m.mu1_ = mu1;
        return m;
    }

    [[nodiscard]] ModelKind kind() const { return kind_; }
    [[nodiscard]] Statistic statistic() const { return stat_; }
    [[nodiscard]] double mu0() const { return mu0_; }
    [[nodiscard]] double mu1() const { return mu1_; }
    [[nodiscard]] double eta() const { return mu1_; }
    [[nodiscard]] double p() const { return p_; }
    [[nodiscard]] double x_star() const { return x_star_; }
    [[nodiscard]] double param(Hypothesis h) const { return h == Hypothesis::P0 ? mu0_ : mu1_; }

    /// Same model with a different statistic; validated like the factories.
    [[nodiscard]] ModelSpec with_statistic(Statistic s) const {
        switch (kind_) {
            case ModelKind::GaussianMean: return gaussian(mu1_, s, x_star_);
            case ModelKind::Ar1: return ar1(mu0_, mu1_, s);
            case ModelKind::TwoStateMarkov: return markov(p_, mu0_, mu1_, s);
        }
        return *this;
    }

    /// Open interval of admissible parameter values.
    [[nodiscard]] std::pair<double, double> param_space() const {
        switch (kind_) {
            case ModelKind::GaussianMean: return {-kInf, kInf};
            case ModelKind::Ar1: return {-1.0, 1.0};
            case ModelKind::TwoStateMarkov: return {0.0, 1.0};
        }
        return {0.0, 0.0};
    }

    [[nodiscard]] bool in_param_space(double mu) const {
        auto [lo, hi] = param_space();
        return std::isfinite(mu) && mu > lo && mu < hi;
    }

    [[nodiscard]] std::string describe() const {
        switch (kind_) {
            case ModelKind::GaussianMean: return "gaussian(eta=" + fmt(mu1_) + ")";
            case ModelKind::Ar1: return "ar1(mu0=" + fmt(mu0_) + ",mu1=" + fmt(mu1_) + ")";
            case ModelKind::TwoStateMarkov:
                return "markov(p=" + fmt(p_) + ",mu0=" + fmt(mu0_) + ",mu1=" + fmt(mu1_) + ")";
        }
        return "?";
    }

private:
    ModelSpec(ModelKind k, Statistic s) : kind_(k), stat_(s) {}
    static std::string fmt(double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", x);
        return buf;
    }

    ModelKind kind_;
    Statistic stat_;
    double mu0_ = 0.0;
    double mu1_ = 0.0;
    double p_ = 0.0;
    double x_star_ = 0.0;
};

/// Running state of one observed path.
struct PathState {
    long n = 0;
    double last = 0.0;  // X_{n}; X_0 = 0 for AR(1) and Markov
    CompensatedSum sum_x;
    CompensatedSum sum_x2;      // sum_{i<=n} X_i^2
    CompensatedSum sum_lag_x2;  // sum_{i<=n} X_{i-1}^2
    CompensatedSum sum_lag_xx;  // sum_{i<=n} X_{i-1} X_i
    long above = 0;             // #{i : X_i > x_star}
    long counts[2][2] = {{0, 0}, {0, 0}};
    double statistic_value = 0.0;
    double llr_value = 0.0;
};

/// log dP_a/dP_b of the observed path, from the accumulators.
inline double log_lr(const ModelSpec& m, const PathState& s, double a, double b) {
    switch (m.kind()) {
        case ModelKind::GaussianMean:
            return (a - b) * s.sum_x.value() - 0.5 * double(s.n) * (a * a - b * b);
        case ModelKind::Ar1:
            return (a - b) * s.sum_lag_xx.value() - 0.5 * (a * a - b * b) * s.sum_lag_x2.value();
        case ModelKind::TwoStateMarkov: {
            double v = 0.0;
            if (s.counts[1][1] > 0) v += double(s.counts[1][1]) * std::log(a / b);
            if (s.counts[1][0] > 0) v += double(s.counts[1][0]) * std::log((1.0 - a) / (1.0 - b));
            return v;
        }
    }
    return 0.0;
}

/// log dP_base/dQ where the path was simulated under Q = model at tilt_param.
inline double tilt_llr(const ModelSpec& m, double tilt_param, Hypothesis base, const PathState& s) {
    return log_lr(m, s, m.param(base), tilt_param);
}

inline double current_statistic(const ModelSpec& m, const PathState& s) {
    if (s.n == 0) return 0.0;
    const double n = double(s.n);
    switch (m.statistic()) {
        case Statistic::AvgLlr: return s.llr_value / n;
        case Statistic::SampleMean: return s.sum_x.value() / n;
        case Statistic::Binarized: return double(s.above) / n;
        case Statistic::YuleWalker: {
            const double den = s.sum_x2.value();
            return den == 0.0 ? 0.0 : s.sum_lag_xx.value() / den;
        }
    }
    return 0.0;
}

/// Appends one observation x and refreshes statistic_value and llr_value.
inline void push_observation(const ModelSpec& m, PathState& s, double x) {
    const double prev = s.last;
    s.n += 1;
    s.sum_x.add(x);
    s.sum_x2.add(x * x);
    s.sum_lag_x2.add(prev * prev);
    s.sum_lag_xx.add(prev * x);
    if (x > m.x_star()) s.above += 1;
    if (m.kind() == ModelKind::TwoStateMarkov) s.counts[prev > 0.5 ? 1 : 0][x > 0.5 ? 1 : 0] += 1;
    s.last = x;
    s.llr_value = log_lr(m, s, m.mu1(), m.mu0());
    s.statistic_value = current_statistic(m, s);
}

inline double draw_observation(const ModelSpec& m, double param, const PathState& s, RandomSource& src) {
    switch (m.kind()) {
        case ModelKind::GaussianMean: return param + src.normal();
        case ModelKind::Ar1: return param * s.last + src.normal();
        case ModelKind::TwoStateMarkov: {
            const double u = src.uniform();
            if (s.last > 0.5) return u < param ? 1.0 : 0.0;
            return u < m.p() ? 0.0 : 1.0;
        }
    }
    return 0.0;
}

inline void check_param(const ModelSpec& m, double param) {
    if (!m.in_param_space(param))
        throw std::domain_error("parameter " + std::to_string(param) + " outside the parameter space of " +
                                m.describe());
}

/// Advances the path by one observation simulated under `param`.
inline PathState& simulate_step(const ModelSpec& m, double param, PathState& s, RandomSource& src) {
    check_param(m, param);
    push_observation(m, s, draw_observation(m, param, s, src));
    return s;
}

/// Direct (non-incremental) evaluation of T_n on a full path x_1..x_n.
inline double batch_statistic(const ModelSpec& m, const std::vector<double>& xs) {
    const auto n = double(xs.size());
    if (xs.empty()) return 0.0;
    const double d = m.mu1() - m.mu0();
    double sx = 0, sx2 = 0, lag2 = 0, lagxx = 0, above = 0, n11 = 0, n10 = 0, prev = 0;
    for (double x : xs) {
        sx += x;
        sx2 += x * x;
        lag2 += prev * prev;
        lagxx += prev * x;
        above += x > m.x_star() ? 1 : 0;
        if (prev > 0.5) (x > 0.5 ? n11 : n10) += 1;
        prev = x;
    }
    switch (m.statistic()) {
        case Statistic::AvgLlr:
            switch (m.kind()) {
                case ModelKind::GaussianMean: return (d * sx - n * (m.mu1() * m.mu1() - m.mu0() * m.mu0()) / 2) / n;
                case ModelKind::Ar1: return d * (lagxx - (m.mu1() + m.mu0()) / 2 * lag2) / n;
                case ModelKind::TwoStateMarkov:
                    return (n11 * std::log(m.mu1() / m.mu0()) + n10 * std::log((1 - m.mu1()) / (1 - m.mu0()))) / n;
            }
            return 0.0;
        case Statistic::SampleMean: return sx / n;
        case Statistic::Binarized: return above / n;
        case Statistic::YuleWalker: return sx2 == 0.0 ? 0.0 : lagxx / sx2;
    }
    return 0.0;
}

namespace detail {
inline double markov_stationary_one(double p, double mu) { return (1.0 - p) / (2.0 - p - mu); }
}  // namespace detail

/// Almost-sure limit of T_n under `param`.
inline double statistic_limit(const ModelSpec& m, Statistic stat, double param) {
    check_param(m, param);
    const double a = m.mu0();
    const double b = m.mu1();
    switch (m.kind()) {
        case ModelKind::GaussianMean:
            switch (stat) {
                case Statistic::AvgLlr: return (b - a) * param - (b * b - a * a) / 2;
                case Statistic::SampleMean: return param;
                case Statistic::Binarized: return norm_cdf(param - m.x_star());
                default: break;
            }
            break;
        case ModelKind::Ar1:
            switch (stat) {
                case Statistic::AvgLlr: return (b - a) / (1 - param * param) * (param - (a + b) / 2);
                case Statistic::YuleWalker: return param;
                default: break;
            }
            break;
        case ModelKind::TwoStateMarkov: {
            const double pi1 = detail::markov_stationary_one(m.p(), param);
            switch (stat) {
                case Statistic::AvgLlr: return pi1 * (ber_kl(param, a) - ber_kl(param, b));
                case Statistic::SampleMean: return pi1;
                default: break;
            }
            break;
        }
    }
    throw std::invalid_argument("statistic " + to_string(stat) + " not defined for " + m.describe());
}

inline double statistic_limit(const ModelSpec& m, double param) { return statistic_limit(m, m.statistic(), param); }

/// (J0, J1): limits of the model's statistic under the two hypotheses.
inline std::pair<double, double> limit_endpoints(const ModelSpec& m) {
    return {statistic_limit(m, m.mu0()), statistic_limit(m, m.mu1())};
}

/// (I0, I1): Kullback-Leibler rates of the likelihood ratio.
inline std::pair<double, double> llr_information(const ModelSpec& m) {
    return {-statistic_limit(m, Statistic::AvgLlr, m.mu0()), statistic_limit(m, Statistic::AvgLlr, m.mu1())};
}

/// Open interval of limits reachable by some admissible parameter.
inline std::pair<double, double> attainable_limits(const ModelSpec& m) {
    switch (m.kind()) {
        case ModelKind::GaussianMean:
            if (m.statistic() == Statistic::Binarized) return {0.0, 1.0};
            return {-kInf, kInf};
        case ModelKind::Ar1:
            if (m.statistic() == Statistic::YuleWalker) return {-1.0, 1.0};
            return {-kInf, kInf};
        case ModelKind::TwoStateMarkov: {
            const double lo = detail::markov_stationary_one(m.p(), 0.0);
            if (m.statistic() == Statistic::SampleMean) return {lo, 1.0};
            return {lo * std::log((1 - m.mu1()) / (1 - m.mu0())), std::log(m.mu1() / m.mu0())};
        }
    }
    return {-kInf, kInf};
}

/// Parameter whose a.s. statistic limit equals kappa. All limits are increasing in the parameter.
inline double param_for_limit(const ModelSpec& m, double kappa) {
    auto [lo, hi] = attainable_limits(m);
    if (!(kappa > lo && kappa < hi))
        throw std::range_error("level " + std::to_string(kappa) + " outside attainable limits (" +
                               std::to_string(lo) + ", " + std::to_string(hi) + ")");
    const double a = m.mu0();
    const double b = m.mu1();
    if (m.kind() == ModelKind::GaussianMean) {
        switch (m.statistic()) {
            case Statistic::AvgLlr: return (kappa + (b * b - a * a) / 2) / (b - a);
            case Statistic::SampleMean: return kappa;
            case Statistic::Binarized: return m.x_star() - norm_upper_quantile(kappa);
            default: break;
        }
    }
    auto [plo, phi] = m.param_space();
    const double eps = 1e-15;
    return bisect([&](double mu) { return statistic_limit(m, mu) - kappa; }, plo + eps, phi - eps, 1e-15, 200);
}

}  // namespace mstest

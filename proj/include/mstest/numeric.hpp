#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace mstest {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Neumaier compensated summation.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    [[nodiscard]] double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double norm_cdf(double x) {
    static const boost::math::normal_distribution<double> nd;
    if (x == kInf) return 1.0;
    if (x == -kInf) return 0.0;
    return boost::math::cdf(nd, x);
}

inline double norm_sf(double x) { return norm_cdf(-x); }

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Upper quantile: returns z with P(Z > z) = p.
inline double norm_upper_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_upper_quantile: p must be in (0,1)");
    static const boost::math::normal_distribution<double> nd;
    return boost::math::quantile(boost::math::complement(nd, p));
}

/// Bernoulli Kullback-Leibler divergence Ber(x||y), with 0 log 0 = 0.
inline double ber_kl(double x, double y) {
    if (x < 0.0 || x > 1.0) return kInf;
    auto term = [](double a, double b) {
        if (a == 0.0) return 0.0;
        if (b == 0.0) return kInf;
        return a * std::log(a / b);
    };
    return term(x, y) + term(1.0 - x, 1.0 - y);
}

inline double log_add_exp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// Bisection for a sign change of f on [lo, hi]; f(lo) and f(hi) must have opposite signs.
template <class F>
double bisect(F&& f, double lo, double hi, double tol = 1e-12, int max_iter = 200) {
    double flo = f(lo);
    for (int i = 0; i < max_iter && hi - lo > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Golden-section maximization of a unimodal f on [a, b]. Returns argmax.
template <class F>
double golden_max(F&& f, double a, double b, double tol = 1e-10) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a);
    double d = a + r * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > tol * std::max(1.0, std::abs(a) + std::abs(b))) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    return fc >= fd ? c : d;
}

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
inline QuadratureRule gauss_legendre(int n) {
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = pk;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

template <class F>
double integrate(const QuadratureRule& rule, F&& f, double a, double b) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return half * s;
}

/// Points strictly inside (lo, 1), uniform in log scale.
inline std::vector<double> log_uniform_grid(double lo, int count) {
    std::vector<double> g;
    g.reserve(count);
    const double l = std::log(lo);
    for (int k = 1; k <= count; ++k) g.push_back(std::exp(l * (1.0 - double(k) / (count + 1))));
    return g;
}

}  // namespace mstest

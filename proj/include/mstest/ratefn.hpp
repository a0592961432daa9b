#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "models.hpp"
#include "numeric.hpp"

namespace mstest {

/// Perron root of a nonnegative primitive matrix by power iteration with Collatz-Wielandt bounds.
template <std::size_t D>
double perron_root(const std::array<std::array<double, D>, D>& a, double rel_tol = 1e-14, int max_iter = 100000) {
    std::array<double, D> v;
    v.fill(1.0);
    double lo = 0.0;
    double hi = kInf;
    for (int it = 0; it < max_iter; ++it) {
        std::array<double, D> w{};
        for (std::size_t i = 0; i < D; ++i)
            for (std::size_t j = 0; j < D; ++j) w[i] += a[i][j] * v[j];
        lo = kInf;
        hi = 0.0;
        double norm = 0.0;
        for (std::size_t i = 0; i < D; ++i) {
            const double r = w[i] / v[i];
            lo = std::min(lo, r);
            hi = std::max(hi, r);
            norm = std::max(norm, w[i]);
        }
        for (std::size_t i = 0; i < D; ++i) v[i] = std::max(w[i] / norm, 1e-300);
        if (hi - lo <= rel_tol * hi) break;
    }
    return 0.5 * (lo + hi);
}

/// Effective domain of a cumulant limit (endpoints may be infinite).
struct CumulantDomain {
    double lo = -kInf;
    double hi = kInf;
};

/// Limiting cumulant generating function phi_i(theta) = lim (1/n) log E_i exp(theta n T_n).
class CumulantLimit {
public:
    CumulantLimit(ModelSpec model, int hypothesis) : m_(std::move(model)), i_(hypothesis) {
        if (m_.statistic() == Statistic::YuleWalker)
            throw std::invalid_argument("yule-walker statistic has no cumulant limit; its rate is closed form");
        if (hypothesis != 0 && hypothesis != 1) throw std::invalid_argument("hypothesis index must be 0 or 1");
    }

    [[nodiscard]] const ModelSpec& model() const { return m_; }
    [[nodiscard]] int hypothesis() const { return i_; }

    /// phi_i(theta); +infinity outside the effective domain.
    [[nodiscard]] double operator()(double theta) const {
        const double mu = i_ == 0 ? m_.mu0() : m_.mu1();
        const double a = m_.mu0();
        const double b = m_.mu1();
        switch (m_.kind()) {
            case ModelKind::GaussianMean:
                switch (m_.statistic()) {
                    case Statistic::AvgLlr: {
                        const double d = b - a;
                        const double c = (b * b - a * a) / 2;
                        return theta * (d * mu - c) + theta * theta * d * d / 2;
                    }
                    case Statistic::SampleMean: return mu * theta + theta * theta / 2;
                    case Statistic::Binarized: {
                        const double j = norm_cdf(mu - m_.x_star());
                        if (theta > 0) return theta + std::log(j + (1 - j) * std::exp(-theta));
                        return std::log1p(j * std::expm1(theta));
                    }
                    default: break;
                }
                break;
            case ModelKind::Ar1: return ar1_cumulant(theta, mu);
            case ModelKind::TwoStateMarkov: return markov_cumulant(theta, mu);
        }
        return kInf;
    }

    /// phi'(theta) by central differences with step 1e-5 scaled to theta.
    [[nodiscard]] double slope(double theta) const {
        const double h = 1e-5 * std::max(1.0, std::abs(theta));
        return ((*this)(theta + h) - (*this)(theta - h)) / (2 * h);
    }

    [[nodiscard]] CumulantDomain domain() const {
        CumulantDomain d;
        d.hi = edge(+1.0);
        d.lo = edge(-1.0);
        return d;
    }

private:
    double ar1_cumulant(double theta, double mu) const {
        const double a = m_.mu0();
        const double b = m_.mu1();
        const double p = 1 + mu * mu + (b - a) * (b + a) * theta;
        const double q = -mu - (b - a) * theta;
        const double m2 = mu * mu;
        const bool d1 = m2 < p && p <= 2 * m2 && q * q <= m2 * (p - m2);
        const bool d2 = 2 * m2 < p && p < 2 && p > 2 * std::abs(q);
        const bool d3 = p >= 2 && q * q <= p - 1;
        if (!(d1 || d2 || d3)) return kInf;
        const double disc = p * p - 4 * q * q;
        if (disc < 0) return kInf;
        return -0.5 * std::log(0.5 * p + 0.5 * std::sqrt(disc));
    }

    double markov_cumulant(double theta, double mu) const {
        const double p = m_.p();
        const std::array<std::array<double, 2>, 2> pi{{{p, 1 - p}, {1 - mu, mu}}};
        if (m_.statistic() == Statistic::SampleMean) {
            // Pi_{theta,V}(i,j) = Pi(i,j) e^{theta j}; scaled by the largest exponential factor.
            const double shift = std::max(0.0, theta);
            std::array<std::array<double, 2>, 2> t{};
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) t[i][j] = pi[i][j] * std::exp(theta * j - shift);
            return shift + std::log(perron_root(t));
        }
        // Pair chain Y = (X_{n-1}, X_n) with reward r on the entered transition.
        const double r[2][2] = {{0.0, 0.0},
                                {std::log((1 - m_.mu1()) / (1 - m_.mu0())), std::log(m_.mu1() / m_.mu0())}};
        double shift = -kInf;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) shift = std::max(shift, theta * r[i][j]);
        std::array<std::array<double, 4>, 4> t{};
        for (int y = 0; y < 4; ++y)
            for (int z = 0; z < 4; ++z) {
                const int i2 = y % 2;
                const int i3 = z / 2;
                const int i4 = z % 2;
                if (i2 != i3) continue;
                t[y][z] = pi[i3][i4] * std::exp(theta * r[i3][i4] - shift);
            }
        return shift + std::log(perron_root(t));
    }

    double edge(double dir) const {
        double inside = 0.0;
        double step = 0.5;
        while (std::isfinite((*this)(dir * step))) {
            inside = step;
            step *= 2;
            if (step > 1e8) return dir * kInf;
        }
        double lo = inside;
        double hi = step;
        for (int k = 0; k < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++k) {
            const double mid = 0.5 * (lo + hi);
            (std::isfinite((*this)(dir * mid)) ? lo : hi) = mid;
        }
        return dir * lo;
    }

    ModelSpec m_;
    int i_;
};

/// Legendre-Fenchel transform sup_theta {theta kappa - phi(theta)}; +infinity when unbounded.
inline double legendre(const CumulantLimit& phi, double kappa) {
    if (!std::isfinite(kappa)) return kInf;
    auto obj = [&](double t) {
        const double v = phi(t);
        return std::isfinite(v) ? t * kappa - v : -kInf;
    };
    const double dir = kappa >= phi.slope(0.0) ? 1.0 : -1.0;
    double t_pp = 0.0;
    double t_p = 0.0;
    double f_p = obj(0.0);
    double step = 0.25;
    for (;;) {
        const double t = dir * step;
        const double f = obj(t);
        if (!std::isfinite(f)) {
            // Domain edge between t_p and t: the sup may sit on the boundary.
            double in = t_p;
            double out = t;
            for (int k = 0; k < 200 && std::abs(out - in) > 1e-13 * std::max(1.0, std::abs(in)); ++k) {
                const double mid = 0.5 * (in + out);
                (std::isfinite(obj(mid)) ? in : out) = mid;
            }
            const double arg = golden_max(obj, std::min(t_pp, in), std::max(t_pp, in));
            return std::max(0.0, std::max(obj(arg), obj(in)));
        }
        if (f < f_p) {
            const double arg = golden_max(obj, std::min(t_pp, t), std::max(t_pp, t));
            return std::max(0.0, obj(arg));
        }
        if (step > 1e7) {
            // Objective still rising: finite only if it has flattened out.
            return f - obj(t / 2) < 1e-9 ? f : kInf;
        }
        t_pp = t_p;
        t_p = t;
        f_p = f;
        step *= 2;
    }
}

/// Inverse of phi' in the interior of the domain.
inline double theta_of_slope(const CumulantLimit& phi, double kappa) {
    const auto dom = phi.domain();
    auto usable = [&](double t) {
        const double h = 1e-5 * std::max(1.0, std::abs(t));
        return t - h > dom.lo && t + h < dom.hi;
    };
    auto near_edge = [&](double edge) { return edge - std::copysign(3e-5 * std::max(1.0, std::abs(edge)), edge); };
    auto out_of_range = [&] {
        const double lo = std::isfinite(dom.lo) ? phi.slope(near_edge(dom.lo)) : -kInf;
        const double hi = std::isfinite(dom.hi) ? phi.slope(near_edge(dom.hi)) : kInf;
        return std::range_error("slope " + std::to_string(kappa) + " outside attainable slopes (" +
                                std::to_string(lo) + ", " + std::to_string(hi) + ")");
    };
    const double s0 = phi.slope(0.0);
    if (kappa == s0) return 0.0;
    const double dir = kappa > s0 ? 1.0 : -1.0;
    double inner = 0.0;
    double outer = dir * 0.25;
    for (;;) {
        if (!usable(outer)) {
            const double edge = near_edge(dir > 0 ? dom.hi : dom.lo);
            if (!usable(edge) || (phi.slope(edge) - kappa) * dir < 0) throw out_of_range();
            outer = edge;
            break;
        }
        if ((phi.slope(outer) - kappa) * dir >= 0) break;
        if (std::abs(outer) > 1e8) throw out_of_range();
        inner = outer;
        outer *= 2;
    }
    double lo = std::min(inner, outer);
    double hi = std::max(inner, outer);
    for (int k = 0; k < 300; ++k) {
        const double mid = 0.5 * (lo + hi);
        const double s = phi.slope(mid);
        if (std::abs(s - kappa) <= 1e-10 || hi - lo < 1e-15 * std::max(1.0, std::abs(mid))) return mid;
        (s < kappa ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Rate functions psi_0, psi_1 of the model's statistic, with endpoints J0 < J1.
class RateFunctions {
public:
    explicit RateFunctions(ModelSpec model)
        : m_(std::move(model)), phi0_(make_cumulant(m_, 0)), phi1_(make_cumulant(m_, 1)) {
        std::tie(j0_, j1_) = limit_endpoints(m_);
        std::tie(i0_, i1_) = llr_information(m_);
    }

    [[nodiscard]] const ModelSpec& model() const { return m_; }
    [[nodiscard]] double j0() const { return j0_; }
    [[nodiscard]] double j1() const { return j1_; }
    [[nodiscard]] double i0() const { return i0_; }
    [[nodiscard]] double i1() const { return i1_; }
    [[nodiscard]] bool has_closed_form() const {
        return m_.kind() == ModelKind::GaussianMean || m_.statistic() == Statistic::YuleWalker;
    }

    [[nodiscard]] const CumulantLimit& cumulant(int i) const {
        const auto& c = i == 0 ? phi0_ : phi1_;
        if (!c) throw std::invalid_argument("no cumulant limit for " + to_string(m_.statistic()));
        return *c;
    }

    /// psi_i(kappa): closed form where available, numeric Legendre transform otherwise.
    [[nodiscard]] double psi(int i, double kappa) const {
        const double mu = i == 0 ? m_.mu0() : m_.mu1();
        if (m_.kind() == ModelKind::GaussianMean) {
            switch (m_.statistic()) {
                case Statistic::AvgLlr: {
                    const double info = i0_;
                    const double d = i == 0 ? info + kappa : info - kappa;
                    return d * d / (4 * info);
                }
                case Statistic::SampleMean: return (kappa - mu) * (kappa - mu) / 2;
                case Statistic::Binarized: return ber_kl(kappa, i == 0 ? j0_ : j1_);
                default: break;
            }
        }
        if (m_.statistic() == Statistic::YuleWalker) {
            if (!(kappa > -1.0 && kappa < 1.0)) return kInf;
            return 0.5 * std::log((1 + mu * mu - 2 * mu * kappa) / (1 - kappa * kappa));
        }
        return legendre(cumulant(i), kappa);
    }

    [[nodiscard]] double psi_numeric(int i, double kappa) const { return legendre(cumulant(i), kappa); }

private:
    static std::optional<CumulantLimit> make_cumulant(const ModelSpec& m, int i) {
        if (m.statistic() == Statistic::YuleWalker) return std::nullopt;
        return CumulantLimit(m, i);
    }

    ModelSpec m_;
    std::optional<CumulantLimit> phi0_;
    std::optional<CumulantLimit> phi1_;
    double j0_ = 0, j1_ = 0, i0_ = 0, i1_ = 0;
};

struct ChernoffPoint {
    double c = 0.0;
    double kappa = 0.0;
};

/// Crossing of psi_0 and psi_1 on (J0, J1).
inline ChernoffPoint chernoff_info(const RateFunctions& rf) {
    double lo = rf.j0();
    double hi = rf.j1();
    double mid = 0.5 * (lo + hi);
    for (int k = 0; k < 200; ++k) {
        mid = 0.5 * (lo + hi);
        const double diff = rf.psi(0, mid) - rf.psi(1, mid);
        if (std::abs(diff) <= 1e-12 || hi - lo < 1e-15) break;
        (diff < 0 ? lo : hi) = mid;
    }
    return {rf.psi(0, mid), mid};
}

/// -inf_theta phi_i(theta); for the LLR statistic this equals the Chernoff information.
inline double cumulant_minimum(const CumulantLimit& phi, double lo, double hi) {
    const double t = golden_max([&](double x) { return -phi(x); }, lo, hi, 1e-12);
    return -phi(t);
}

/// kappa in (J0, J1) with psi_0(kappa)/psi_1(kappa) = r.
inline double g_inverse(const RateFunctions& rf, double r) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("g_inverse: r must be positive and finite");
    double lo = rf.j0();
    double hi = rf.j1();
    const double target = std::log(r);
    for (int k = 0; k < 300 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++k) {
        const double mid = 0.5 * (lo + hi);
        const double g = std::log(rf.psi(0, mid)) - std::log(rf.psi(1, mid));
        if (std::isnan(g)) break;
        (g < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct AsymptoticEfficiency {
    double are0 = 0.0;
    double are1 = 0.0;
};

/// (psi_1(J0)/I0, psi_0(J1)/I1).
inline AsymptoticEfficiency are(const RateFunctions& rf) {
    if (rf.model().statistic() == Statistic::AvgLlr)
        throw std::invalid_argument("ARE is not applicable to the likelihood-ratio statistic (identically 1)");
    return {rf.psi(1, rf.j0()) / rf.i0(), rf.psi(0, rf.j1()) / rf.i1()};
}

}  // namespace mstest

#pragma once

#include "flowguide/common.hpp"

#include <functional>
#include <utility>

namespace flowguide {

enum class ScheduleKind { CondOT, VariancePreserving, Custom };

inline const char* to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::CondOT: return "cond_ot";
        case ScheduleKind::VariancePreserving: return "variance_preserving";
        case ScheduleKind::Custom: return "custom";
    }
    return "?";
}

// Semi-linear split of the marginal field: u_t(x) = a·x + b·x1|t(x),
// with a = σ̇/σ and b = α̇ − α σ̇/σ.
struct Coeffs {
    double a;
    double b;
};

struct SnrPoint {
    double t;
    double gamma;      // α_t / σ_t
    double gamma_dot;  // b_t / σ_t
};

// An affine path schedule (α_t, σ_t) with analytically supplied derivatives.
// Convention: x_t = α_t·x1 + σ_t·x0, so α(0)=0, α(1)=1, σ(0)=1, σ(1)=0,
// α strictly increasing and σ strictly decreasing on (0,1).
// All flows integrate on [0, 1−ε]; ε is carried here and shared downstream.
class Schedule {
public:
    using Fn = std::function<double(double)>;

    static Schedule cond_ot(double t_eps = 1e-3) {
        Schedule s;
        s.kind_ = ScheduleKind::CondOT;
        s.eps_ = check_eps(t_eps);
        s.alpha_ = [](double t) { return t; };
        s.sigma_ = [](double t) { return 1.0 - t; };
        s.alpha_dot_ = [](double) { return 1.0; };
        s.sigma_dot_ = [](double) { return -1.0; };
        s.validate();
        return s;
    }

    static Schedule variance_preserving(double t_eps = 1e-3) {
        constexpr double half_pi = 1.57079632679489661923;
        Schedule s;
        s.kind_ = ScheduleKind::VariancePreserving;
        s.eps_ = check_eps(t_eps);
        s.alpha_ = [](double t) { return std::sin(half_pi * t); };
        s.sigma_ = [](double t) { return std::cos(half_pi * t); };
        s.alpha_dot_ = [](double t) { return half_pi * std::cos(half_pi * t); };
        s.sigma_dot_ = [](double t) { return -half_pi * std::sin(half_pi * t); };
        s.validate();
        return s;
    }

    static Schedule custom(Fn alpha, Fn sigma, Fn alpha_dot, Fn sigma_dot, double t_eps = 1e-3) {
        Schedule s;
        s.kind_ = ScheduleKind::Custom;
        s.eps_ = check_eps(t_eps);
        s.alpha_ = std::move(alpha);
        s.sigma_ = std::move(sigma);
        s.alpha_dot_ = std::move(alpha_dot);
        s.sigma_dot_ = std::move(sigma_dot);
        s.validate();
        return s;
    }

    ScheduleKind kind() const { return kind_; }
    double t_eps() const { return eps_; }
    double t_end() const { return 1.0 - eps_; }

    double alpha(double t) const { return alpha_(t); }
    double sigma(double t) const { return sigma_(t); }
    double alpha_dot(double t) const { return alpha_dot_(t); }
    double sigma_dot(double t) const { return sigma_dot_(t); }

    Coeffs coeffs(double t) const {
        check_domain(t);
        const double s = sigma_(t);
        if (s < 1e-12) throw RangeError("coeffs: sigma(t) below 1e-12");
        const double sd = sigma_dot_(t);
        const double a = sd / s;
        return {a, alpha_dot_(t) - alpha_(t) * a};
    }

    double gamma(double t) const {
        const double s = sigma_(t);
        if (s < 1e-300) throw RangeError("gamma: sigma(t) underflow");
        return alpha_(t) / s;
    }

    SnrPoint snr(double t) const {
        check_domain(t);
        const Coeffs c = coeffs(t);
        return {t, gamma(t), c.b / sigma_(t)};
    }

    // Functional inverse of γ. Closed form where available, bisection otherwise.
    double snr_inverse(double g) const {
        const double g_max = gamma(t_end());
        if (!(g >= 0.0) || g > g_max * (1.0 + 1e-12))
            throw RangeError("snr_inverse: gamma outside [0, gamma(1-eps)]");
        g = std::min(g, g_max);
        switch (kind_) {
            case ScheduleKind::CondOT: return g / (1.0 + g);
            case ScheduleKind::VariancePreserving:
                return std::atan(g) / 1.57079632679489661923;
            case ScheduleKind::Custom: break;
        }
        return invert_increasing([this](double t) { return gamma(t); }, g, 0.0, t_end());
    }

    // Inverse of the (strictly decreasing) σ; used by the polynomial grid.
    double sigma_inverse(double s) const {
        const double lo = sigma_(t_end());
        if (s > sigma_(0.0) * (1.0 + 1e-12) || s < lo * (1.0 - 1e-12))
            throw RangeError("sigma_inverse: value outside [sigma(1-eps), sigma(0)]");
        return invert_increasing([this](double t) { return -sigma_(t); }, -s, 0.0, t_end());
    }

private:
    static double check_eps(double eps) {
        if (!(eps > 0.0) || eps > 0.1) throw ConfigError("t_eps must lie in (0, 0.1]");
        return eps;
    }

    void check_domain(double t) const {
        if (!(t >= 0.0) || t > t_end() + 1e-15)
            throw RangeError("t outside [0, 1-eps]");
    }

    // Bisection to 1e-12 on a strictly increasing f.
    template <class F>
    static double invert_increasing(F f, double target, double lo, double hi) {
        double flo = f(lo), fhi = f(hi);
        if (target <= flo) return lo;
        if (target >= fhi) return hi;
        for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (f(mid) < target)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }

    void validate() const {
        auto near = [](double x, double y) { return std::abs(x - y) <= 1e-12; };
        if (!near(alpha_(0.0), 0.0) || !near(sigma_(1.0), 0.0) ||
            !near(alpha_(1.0), 1.0) || !near(sigma_(0.0), 1.0))
            throw ConfigError("schedule boundary conditions violated");
        // Monotonicity and SNR growth, sampled.
        double prev_gamma = -1.0;
        for (int i = 1; i <= 64; ++i) {
            const double t = i / 64.0 * t_end();
            if (!(alpha_dot_(t) > 0.0)) throw ConfigError("alpha_dot must be positive on (0,1)");
            if (!(sigma_dot_(t) < 0.0)) throw ConfigError("sigma_dot must be negative on (0,1)");
            const double g = gamma(t);
            if (!(g > prev_gamma)) throw ConfigError("gamma must be strictly increasing");
            prev_gamma = g;
        }
    }

    ScheduleKind kind_ = ScheduleKind::Custom;
    double eps_ = 1e-3;
    Fn alpha_, sigma_, alpha_dot_, sigma_dot_;
};

}  // namespace flowguide

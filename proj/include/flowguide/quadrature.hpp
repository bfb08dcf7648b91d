#pragma once

#include "flowguide/common.hpp"

#include <functional>
#include <queue>
#include <vector>

namespace flowguide {

struct QuadConfig {
    double abs_tol = 1e-9;
    int max_intervals = 4096;
};

namespace detail {

// Gauss-Kronrod 7-15 constants (QUADPACK dqk15).
inline constexpr double kGk15Nodes[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr double kGk15Weights[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kGauss7Weights[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct GkResult {
    Vec value;
    double err;
};

template <class F>
GkResult gk15(const F& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const Vec fc = f(mid);
    Vec kronrod = kGk15Weights[7] * fc;
    Vec gauss = kGauss7Weights[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double dx = half * kGk15Nodes[i];
        const Vec sum = f(mid - dx) + f(mid + dx);
        kronrod += kGk15Weights[i] * sum;
        if (i % 2 == 1) gauss += kGauss7Weights[i / 2] * sum;
    }
    kronrod *= half;
    gauss *= half;
    return {kronrod, (kronrod - gauss).template lpNorm<Eigen::Infinity>()};
}

}  // namespace detail

// Adaptive Gauss-Kronrod integration of a vector-valued function. Bisects the
// interval with the largest error estimate until the total meets abs_tol.
template <class F>
Vec integrate_adaptive(const F& f, double a, double b, const QuadConfig& cfg = {}) {
    if (a == b) return f(a) * 0.0;
    struct Interval {
        double a, b, err;
        Vec value;
        bool operator<(const Interval& o) const { return err < o.err; }
    };
    std::priority_queue<Interval> queue;
    auto first = detail::gk15(f, a, b);
    queue.push({a, b, first.err, first.value});
    Vec total = first.value;
    double total_err = first.err;
    int used = 1;
    while (total_err > cfg.abs_tol) {
        if (used >= cfg.max_intervals || queue.empty())
            throw AccuracyError("quadrature did not converge to requested tolerance");
        const Interval worst = queue.top();
        queue.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        auto left = detail::gk15(f, worst.a, mid);
        auto right = detail::gk15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.err + right.err - worst.err;
        queue.push({worst.a, mid, left.err, left.value});
        queue.push({mid, worst.b, right.err, right.value});
        ++used;
    }
    return total;
}

// Scalar convenience wrapper.
template <class F>
double integrate_scalar(const F& f, double a, double b, const QuadConfig& cfg = {}) {
    auto wrap = [&f](double x) {
        Vec v(1);
        v[0] = f(x);
        return v;
    };
    return integrate_adaptive(wrap, a, b, cfg)[0];
}

}  // namespace flowguide

#pragma once

#include "flowguide/model.hpp"
#include "flowguide/rng.hpp"

#include <vector>

namespace fgtest {

using namespace flowguide;

inline GaussianMixtureTarget dirac_target(const Vec& mu, double spread = 1e-10) {
    const int d = static_cast<int>(mu.size());
    return GaussianMixtureTarget({1.0}, {mu}, {spread * Mat::Identity(d, d)});
}

inline GaussianMixtureTarget standard_normal_target(int d) {
    return GaussianMixtureTarget({1.0}, {Vec::Zero(d)}, {Mat::Identity(d, d)});
}

inline GaussianMixtureTarget two_mode_target(double sep = 2.0) {
    Vec mu1(2), mu2(2);
    mu1 << sep, 0.0;
    mu2 << -sep, 0.0;
    return GaussianMixtureTarget({0.5, 0.5}, {mu1, mu2},
                                 {Mat::Identity(2, 2), Mat::Identity(2, 2)});
}

// Random K-component mixture with SPD covariances A·Aᵀ + 0.3·I.
inline GaussianMixtureTarget random_mixture(Rng& rng, int d, int k) {
    std::vector<double> w(k);
    std::vector<Vec> mu;
    std::vector<Mat> cov;
    double wsum = 0.0;
    for (int i = 0; i < k; ++i) {
        w[i] = 0.2 + rng.uniform();
        wsum += w[i];
        mu.push_back(2.5 * rng.normal_vec(d));
        Mat a(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) a(r, c) = 0.4 * rng.normal();
        cov.push_back(a * a.transpose() + 0.3 * Mat::Identity(d, d));
    }
    for (auto& wi : w) wi /= wsum;
    // renormalize exactly so the simplex check passes
    double total = 0.0;
    for (double wi : w) total += wi;
    w.back() += 1.0 - total;
    return GaussianMixtureTarget(w, mu, cov);
}

// A state on the marginal path: x = α_t x1 + σ_t x0 with x1 ~ q, x0 ~ N(0, I).
inline Vec path_point(const PosteriorModel& model, double t, Rng& rng) {
    const auto& s = model.schedule();
    return s.alpha(t) * model.mixture().sample(rng) + s.sigma(t) * rng.normal_vec(model.dim());
}

}  // namespace fgtest

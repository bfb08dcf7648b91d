#include <catch2/catch_amalgamated.hpp>

#include "flowguide/model.hpp"
#include "helpers.hpp"

using namespace flowguide;
using fgtest::dirac_target;
using fgtest::path_point;
using fgtest::random_mixture;
using fgtest::standard_normal_target;
using fgtest::two_mode_target;

namespace {

// Self-normalized Monte-Carlo estimate of E[X1 | X_t = x]: draw x1 ~ q and
// weight by the likelihood N(x; α x1, σ² I). Returns the estimate and a
// per-component standard error.
struct McPosterior {
    Vec mean;
    Vec stderr_;
};

McPosterior mc_posterior_mean(const GaussianMixtureTarget& target, double alpha, double sigma,
                              const Vec& x, int n, Rng& rng) {
    const int d = target.dim();
    std::vector<Vec> xs(n);
    std::vector<double> logw(n);
    double lmax = -1e300;
    for (int i = 0; i < n; ++i) {
        xs[i] = target.sample(rng);
        logw[i] = -(x - alpha * xs[i]).squaredNorm() / (2.0 * sigma * sigma);
        lmax = std::max(lmax, logw[i]);
    }
    double wsum = 0.0;
    Vec mean = Vec::Zero(d);
    for (int i = 0; i < n; ++i) {
        const double w = std::exp(logw[i] - lmax);
        wsum += w;
        mean += w * xs[i];
    }
    mean /= wsum;
    Vec var = Vec::Zero(d);
    for (int i = 0; i < n; ++i) {
        const double wn = std::exp(logw[i] - lmax) / wsum;
        var += (wn * wn) * (xs[i] - mean).cwiseAbs2();
    }
    return {mean, var.cwiseSqrt()};
}

Mat fd_jacobian(const PosteriorModel& model, double t, const Vec& x, double h = 1e-5) {
    const int d = model.dim();
    Mat J(d, d);
    for (int j = 0; j < d; ++j) {
        const Vec e = Vec::Unit(d, j);
        J.col(j) = (model.posterior_mean(t, x + h * e) - model.posterior_mean(t, x - h * e)) /
                   (2.0 * h);
    }
    return J;
}

}  // namespace

TEST_CASE("dirac-like target: posterior is the point mass") {
    Vec mu(2);
    mu << 1.0, 0.0;
    PosteriorModel model(Schedule::cond_ot(), dirac_target(mu));
    Rng rng(1);
    for (double t : {0.0, 0.3, 0.9}) {
        const Vec x = rng.normal_vec(2);
        CHECK((model.posterior_mean(t, x) - mu).norm() <= 1e-6);
        CHECK(model.posterior_var(t, x).norm() <= 1e-8);
        const Vec w = rng.normal_vec(2);
        CHECK(model.posterior_vjp(t, x, w).norm() <= 1e-6);
    }
}

TEST_CASE("single standard normal: conjugacy fixed point at t=0.5") {
    PosteriorModel model(Schedule::cond_ot(), standard_normal_target(2));
    Vec x(2);
    x << 0.3, -0.7;
    const Vec mean = model.posterior_mean(0.5, x);
    CHECK((mean - x).norm() <= 1e-12);

    const Mat var = model.posterior_var(0.5, x);
    CHECK((var - 0.5 * Mat::Identity(2, 2)).norm() <= 1e-12);

    Vec v(2);
    v << 1.3, 0.4;
    CHECK((model.posterior_jvp(0.5, x, v) - v).norm() <= 1e-12);

    // Monte-Carlo oracle, 3 standard errors.
    Rng rng(20240);
    const auto mc = mc_posterior_mean(model.mixture(), 0.5, 0.5, x, 1000000, rng);
    for (int j = 0; j < 2; ++j)
        CHECK(std::abs(mean[j] - mc.mean[j]) <= 3.0 * mc.stderr_[j]);
}

TEST_CASE("posterior_mean matches the Monte-Carlo oracle at random probes") {
    Rng rng(5151);
    PosteriorModel model(Schedule::cond_ot(), random_mixture(rng, 2, 3));
    for (int trial = 0; trial < 10; ++trial) {
        const double t = rng.uniform(0.2, 0.7);
        const Vec x = path_point(model, t, rng);
        const double a = model.schedule().alpha(t), s = model.schedule().sigma(t);
        const auto mc = mc_posterior_mean(model.mixture(), a, s, x, 1000000, rng);
        const Vec mean = model.posterior_mean(t, x);
        for (int j = 0; j < 2; ++j) {
            // allow a tiny absolute floor for near-zero components
            CHECK(std::abs(mean[j] - mc.mean[j]) <= 3.0 * mc.stderr_[j] + 1e-6);
        }
    }
}

TEST_CASE("two equal modes: posterior collapses toward the near component at t -> 1-eps") {
    PosteriorModel model(Schedule::cond_ot(), two_mode_target());
    const double t = model.schedule().t_end();
    Vec x(2);
    x << 2.0, 0.0;
    const auto post = model.posterior(t, x);

    // Independent scalar oracle for the isotropic two-mode case: per-component
    // marginal likelihoods N(x; αμ_k, (α²+σ²)I) and conjugate means.
    const double a = model.schedule().alpha(t), s = model.schedule().sigma(t);
    const double q = a * a + s * s;
    Vec mu1(2), mu2(2);
    mu1 << 2.0, 0.0;
    mu2 << -2.0, 0.0;
    const double l1 = std::exp(-(x - a * mu1).squaredNorm() / (2 * q));
    const double l2 = std::exp(-(x - a * mu2).squaredNorm() / (2 * q));
    const double r1 = l1 / (l1 + l2);
    const Vec m1 = mu1 + (a / q) * (x - a * mu1);
    const Vec m2 = mu2 + (a / q) * (x - a * mu2);
    const Vec oracle_mean = r1 * m1 + (1.0 - r1) * m2;

    CHECK(std::abs(post.responsibilities()[0] - r1) <= 1e-12);
    CHECK(post.responsibilities()[0] >= 0.999);  // far mode is ~e^{-8} down
    CHECK((post.mean() - oracle_mean).norm() <= 1e-12);
    // the mean sits at the conjugacy pull x/α-ish, about 2ε from the mode
    CHECK((post.mean() - mu1).norm() <= 2.5e-3);
}

TEST_CASE("variance identity and finite-difference Jacobian oracle") {
    Rng rng(77);
    for (int d : {2, 3}) {
        PosteriorModel model(Schedule::cond_ot(), random_mixture(rng, d, 3));
        for (int trial = 0; trial < 50; ++trial) {
            const double t = rng.uniform(0.05, 0.95);
            const Vec x = path_point(model, t, rng);
            const double alpha = model.schedule().alpha(t);
            const double sigma = model.schedule().sigma(t);
            const Mat var = model.posterior_var(t, x);
            const Mat J = model.posterior_jacobian(t, x);
            const Mat J_fd = fd_jacobian(model, t, x);

            // exact Jacobian vs its finite-difference oracle
            CHECK((J - J_fd).norm() <= 1e-5 * (1.0 + J.norm()));
            // ∇x1|t = (α/σ²)·Var, FD side per the module contract
            CHECK((J_fd - (alpha / (sigma * sigma)) * var).norm() <= 1e-5 * (1.0 + var.norm()));
            // Var = (σ²/α)·∇x1|t, the reciprocal form
            CHECK((var - (sigma * sigma / alpha) * J).norm() <= 1e-6 * (1.0 + var.norm()));
        }
    }
}

TEST_CASE("jvp/vjp adjoint consistency and central-difference match") {
    Rng rng(99);
    PosteriorModel model(Schedule::variance_preserving(), random_mixture(rng, 3, 2));
    for (int trial = 0; trial < 20; ++trial) {
        const double t = rng.uniform(0.1, 0.9);
        const Vec x = path_point(model, t, rng);
        const Vec v = rng.normal_vec(3);
        const Vec w = rng.normal_vec(3);
        CHECK(std::abs(model.posterior_vjp(t, x, w).dot(v) -
                       model.posterior_jvp(t, x, v).dot(w)) <= 1e-8);

        const double h = 1e-5;
        const Vec fd = (model.posterior_mean(t, x + h * v) - model.posterior_mean(t, x - h * v)) /
                       (2.0 * h);
        const Vec jvp = model.posterior_jvp(t, x, v);
        CHECK((jvp - fd).norm() <= 1e-5 * (1.0 + fd.norm()));
    }
}

TEST_CASE("posterior variance is symmetric PSD") {
    Rng rng(123);
    PosteriorModel model(Schedule::cond_ot(), random_mixture(rng, 4, 3));
    for (int trial = 0; trial < 10; ++trial) {
        const double t = rng.uniform(0.05, 0.95);
        const Mat var = model.posterior_var(t, path_point(model, t, rng));
        CHECK((var - var.transpose()).norm() <= 1e-12);
        const Eigen::SelfAdjointEigenSolver<Mat> eig(var);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("mixture validation errors") {
    Vec mu = Vec::Zero(2);
    Mat id = Mat::Identity(2, 2);
    // weights off the simplex
    CHECK_THROWS_AS(GaussianMixtureTarget({0.5, 0.6}, {mu, mu}, {id, id}), ConfigError);
    CHECK_THROWS_AS(GaussianMixtureTarget({-1.0, 2.0}, {mu, mu}, {id, id}), ConfigError);
    // non-SPD covariance
    Mat bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(GaussianMixtureTarget({1.0}, {mu}, {bad}), ConfigError);
    // non-finite query
    PosteriorModel model(Schedule::cond_ot(), standard_normal_target(2));
    Vec nan_x(2);
    nan_x << std::nan(""), 0.0;
    CHECK_THROWS_AS(model.posterior_mean(0.5, nan_x), std::invalid_argument);
}

TEST_CASE("posterior_var and jacobian are unsupported on the MLP backend") {
    MicroMlpSpec spec;
    spec.dim = 2;
    spec.hidden1 = 8;
    spec.hidden2 = 8;
    PosteriorModel model(Schedule::cond_ot(), MicroMlp(spec));
    Vec x = Vec::Zero(2);
    CHECK_THROWS_AS(model.posterior_var(0.5, x), UnsupportedError);
    CHECK_THROWS_AS(model.posterior_jacobian(0.5, x), UnsupportedError);
    CHECK_NOTHROW(model.posterior_mean(0.5, x));
}

#include <catch2/catch_amalgamated.hpp>

#include "flowguide/verify.hpp"
#include "helpers.hpp"

using namespace flowguide;
using fgtest::dirac_target;
using fgtest::random_mixture;
using fgtest::standard_normal_target;
using fgtest::two_mode_target;

TEST_CASE("loglog fit: synthetic self-tests") {
    SECTION("exact h^2 errors give slope 2.000") {
        std::vector<double> hs, errs;
        for (int i = 0; i < 6; ++i) {
            hs.push_back(std::pow(2.0, -i));
            errs.push_back(hs.back() * hs.back());
        }
        const auto fit = fit_loglog("selftest", hs, errs, 1.65, 2.35);
        CHECK(fit.status == StudyStatus::Pass);
        CHECK(fit.slope == Catch::Approx(2.0).margin(1e-12));
        CHECK(fit.r2 >= 0.999999);
    }
    SECTION("machine-precision errors report a degenerate study") {
        std::vector<double> hs = {1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125};
        std::vector<double> errs(6, 1e-15);
        const auto fit = fit_loglog("degenerate", hs, errs, 1.65, 2.35);
        CHECK(fit.status == StudyStatus::Degenerate);
    }
    SECTION("noisy errors are inconclusive, not failing") {
        std::vector<double> hs = {1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125};
        std::vector<double> errs = {1e-2, 3e-2, 0.5e-2, 4e-2, 1e-2, 2e-2};
        const auto fit = fit_loglog("noise", hs, errs, 1.65, 2.35);
        CHECK(fit.status == StudyStatus::Inconclusive);
    }
    SECTION("too few points or too little span is inconclusive") {
        std::vector<double> hs = {1.0, 0.5, 0.25, 0.125, 0.0625};
        std::vector<double> errs;
        for (double h : hs) errs.push_back(h * h);
        auto short_span = fit_loglog("span", {1.0, 0.9, 0.8, 0.7, 0.6},
                                     {1.0, 0.81, 0.64, 0.49, 0.36}, 1.65, 2.35);
        CHECK(short_span.status == StudyStatus::Inconclusive);
    }
    SECTION("wrong slope fails") {
        std::vector<double> hs, errs;
        for (int i = 0; i < 6; ++i) {
            hs.push_back(std::pow(2.0, -i));
            errs.push_back(hs.back());  // slope 1 against a slope-2 window
        }
        CHECK(fit_loglog("fail", hs, errs, 1.65, 2.35).status == StudyStatus::Fail);
    }
}

TEST_CASE("gradient order study: euler slope 2, midpoint slope 3") {
    Rng rng(41);
    PosteriorModel model(Schedule::cond_ot(), two_mode_target());
    Vec target(2);
    target << 2.0, 0.0;
    const Loss loss = Loss::quadratic(target);

    const auto euler = order_study_gradient(model, loss, Scheme::Euler);
    INFO("euler slope " << euler.slope << " r2 " << euler.r2);
    CHECK(euler.status == StudyStatus::Pass);
    CHECK(euler.slope >= 1.65);
    CHECK(euler.slope <= 2.35);

    const auto mid = order_study_gradient(model, loss, Scheme::Midpoint);
    INFO("midpoint slope " << mid.slope << " r2 " << mid.r2);
    CHECK(mid.status == StudyStatus::Pass);
    CHECK(mid.slope >= 2.65);
    CHECK(mid.slope <= 3.35);

    CHECK_THROWS_AS(order_study_gradient(model, loss, Scheme::RK4), ConfigError);
}

TEST_CASE("gradient order study: coarse reference yields inconclusive, not failure") {
    PosteriorModel model(Schedule::cond_ot(), two_mode_target());
    const Loss loss = Loss::quadratic(Vec::Zero(2));
    OrderStudyConfig cfg;
    cfg.ref_steps = 4;
    const auto fit = order_study_gradient(model, loss, Scheme::Euler, cfg);
    CHECK(fit.status == StudyStatus::Inconclusive);
}

TEST_CASE("gradient order study: degenerate on a point mass") {
    Vec mu(2);
    mu << 1.0, 1.0;
    PosteriorModel model(Schedule::cond_ot(), dirac_target(mu, 1e-12));
    // With a constant posterior the one-step exponential-Euler estimator is
    // exact, so the study reports the machine-precision floor.
    const auto fit = order_study_gradient(model, Loss::quadratic(mu), Scheme::ExpEuler);
    CHECK(fit.status == StudyStatus::Degenerate);
}

TEST_CASE("greedy-vs-ideal study shows the h^2 law on a two-mode mixture") {
    // At ε = 0.05 the h² term stays well above the floating-point floor across
    // the whole ladder; at ε = 1e-3 the same law holds but at ~1e-12 amplitudes.
    PosteriorModel model(Schedule::cond_ot(0.05), two_mode_target());
    const auto fit = greedy_vs_ideal_study(model);
    INFO("slope " << fit.slope << " r2 " << fit.r2 << " note " << fit.note);
    CHECK(fit.status == StudyStatus::Pass);
    CHECK(fit.slope >= 1.65);
    CHECK(fit.slope <= 2.35);
}

TEST_CASE("greedy-vs-ideal study: degenerate on a point mass") {
    Vec mu(2);
    mu << 0.5, -0.5;
    PosteriorModel model(Schedule::cond_ot(0.05), dirac_target(mu, 1e-12));
    const auto fit = greedy_vs_ideal_study(model);
    for (double e : fit.errors) CHECK(e <= 1e-8);
    CHECK(fit.status == StudyStatus::Degenerate);
}

TEST_CASE("greedy-vs-ideal difference shrinks monotonically on a single gaussian") {
    PosteriorModel model(Schedule::cond_ot(0.05), standard_normal_target(2));
    GreedyIdealStudyConfig cfg;
    cfg.hs_gamma = {6.0, 5.0, 4.0, 3.0, 2.5, 2.0, 1.5, 1.0, 0.75, 0.5};
    const auto fit = greedy_vs_ideal_study(model, cfg);
    for (std::size_t i = 0; i + 1 < fit.errors.size(); ++i)
        CHECK(fit.errors[i + 1] < fit.errors[i]);
}

TEST_CASE("greedy convergence study") {
    SECTION("single gaussian: converges and r shrinks toward the horizon") {
        PosteriorModel model(Schedule::cond_ot(), standard_normal_target(2));
        Vec star(2);
        star << 2.0, 0.0;
        GreedyConvergenceConfig cfg;
        cfg.ts = {0.5, 0.7, 0.8, 0.9, 0.95};
        const auto report = greedy_convergence_study(model, star, cfg);
        REQUIRE(report.points.size() == 5u);
        for (const auto& pt : report.points) CHECK(pt.converged);
        CHECK(report.status == StudyStatus::Pass);
        // r(0.9) < r(0.5)
        CHECK(report.points[3].residual < report.points[0].residual);
    }
    SECTION("mixture with the target on a mode") {
        PosteriorModel model(Schedule::cond_ot(), two_mode_target());
        Vec star(2);
        star << 2.0, 0.0;
        const auto report = greedy_convergence_study(model, star);
        for (const auto& pt : report.points) CHECK(pt.converged);
        CHECK(report.status == StudyStatus::Pass);
        CHECK(report.c_hat > 0.0);
    }
    SECTION("point mass: iteration cannot move the estimate") {
        Vec mu(2);
        mu << 1.0, 0.0;
        PosteriorModel model(Schedule::cond_ot(), dirac_target(mu));
        Vec star(2);
        star << 2.0, 0.0;  // unreachable
        const auto report = greedy_convergence_study(model, star);
        CHECK(report.status == StudyStatus::Fail);
        for (const auto& pt : report.points) {
            CHECK_FALSE(pt.converged);
            CHECK(pt.final_gap > 0.5);
        }
        // with the target on the point mass, zero iterations suffice
        const auto ok = greedy_convergence_study(model, mu);
        for (const auto& pt : ok.points) {
            CHECK(pt.converged);
            CHECK(pt.iterations == 0);
        }
    }
}

TEST_CASE("identity suite") {
    Rng rng(4242);
    SECTION("point mass: all identities pass with tiny residuals") {
        Vec mu(2);
        mu << 1.0, -1.0;
        PosteriorModel model(Schedule::cond_ot(), dirac_target(mu, 1e-8));
        const auto report = identity_suite(model);
        for (const auto& c : report.checks) {
            INFO(c.name << " residual " << c.residual);
            CHECK(c.pass);
        }
        CHECK(report.all_pass);
    }
    SECTION("random two-component mixture passes at stated tolerances") {
        PosteriorModel model(Schedule::cond_ot(), random_mixture(rng, 2, 2));
        const auto report = identity_suite(model);
        for (const auto& c : report.checks) {
            INFO(c.name << " residual " << c.residual << " thr " << c.threshold);
            CHECK(c.pass);
        }
    }
    SECTION("corrupted variance is caught (harness self-test)") {
        PosteriorModel model(Schedule::cond_ot(), random_mixture(rng, 2, 2));
        IdentitySuiteConfig cfg;
        cfg.var_corruption = 1.01;
        CHECK(lemma_b1_residual(model, cfg) > 1e-5);
    }
}

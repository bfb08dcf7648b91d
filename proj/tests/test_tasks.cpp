#include <catch2/catch_amalgamated.hpp>

#include "flowguide/tasks.hpp"
#include "helpers.hpp"

using namespace flowguide;
using fgtest::dirac_target;
using fgtest::random_mixture;
using fgtest::two_mode_target;

namespace {

GuidanceRun basic_run(Engine engine, double eta) {
    GuidanceRun run;
    run.engine = engine;
    run.eta.kind = EtaScheduleKind::Constant;
    run.eta.eta = eta;
    run.solver.scheme = Scheme::Euler;
    run.solver.n_steps = 32;
    return run;
}

}  // namespace

TEST_CASE("guidance with eta = 0 is bit-identical to the unguided solve") {
    Rng rng(1);
    PosteriorModel model(Schedule::cond_ot(), random_mixture(rng, 2, 2));
    const Vec x0 = rng.normal_vec(2);
    const Loss loss = Loss::quadratic(Vec::Zero(2));
    const auto run = basic_run(Engine::GreedyEuler, 0.0);
    const auto guided = guided_sample(model, run, loss, x0);
    const auto unguided = solve(model, run.solver, x0);
    REQUIRE(guided.trajectory.states.size() == unguided.states.size());
    for (std::size_t i = 0; i < unguided.states.size(); ++i)
        CHECK(guided.trajectory.states[i] == unguided.states[i]);
}

TEST_CASE("point-mass target: greedy guidance is a no-op") {
    Vec mu(2);
    mu << 1.0, 1.0;
    PosteriorModel model(Schedule::cond_ot(), dirac_target(mu));
    Rng rng(2);
    const Vec x0 = rng.normal_vec(2);
    Vec star(2);
    star << -3.0, 0.0;
    const auto run = basic_run(Engine::GreedyEuler, 0.5);
    const auto guided = guided_sample(model, run, Loss::quadratic(star), x0);
    const auto unguided = solve(model, run.solver, x0);
    CHECK((guided.trajectory.terminal() - unguided.terminal()).norm() <= 1e-7);
}

TEST_CASE("two-mode steering: greedy guidance raises the target-mode hit rate") {
    PosteriorModel model(Schedule::cond_ot(), two_mode_target());
    Vec star(2);
    star << 2.0, 0.0;
    const Loss loss = Loss::quadratic(star);

    GuidanceRun run = basic_run(Engine::GreedyEuler, 1.0);
    run.eta.kind = EtaScheduleKind::AnnealedLinearCutoff;
    run.eta.t_cut = 0.0;

    const int seeds = 60;
    int hits_guided = 0, hits_unguided = 0;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(1000 + s);
        const Vec x0 = rng.normal_vec(2);
        const auto guided = guided_sample(model, run, loss, x0);
        if (mode_hit(guided.trajectory, star, 0.5)) ++hits_guided;
        if (mode_hit(solve(model, run.solver, x0), star, 0.5)) ++hits_unguided;
    }
    INFO("guided " << hits_guided << "/" << seeds << " unguided " << hits_unguided);
    CHECK(hits_guided > hits_unguided);
    CHECK(hits_guided >= seeds * 8 / 10);
}

TEST_CASE("linear-measurement greedy gradient obeys the chain rule identity") {
    Rng rng(3);
    PosteriorModel model(Schedule::cond_ot(), random_mixture(rng, 2, 2));
    const auto prob = make_inverse_problem(MeasurementKind::RandomProjection, 1, {},
                                           (Vec(2) << 1.5, -0.5).finished(), 0.05, 77);
    const Loss loss = prob.to_loss();
    const double t = 0.4;
    const Vec x = fgtest::path_point(model, t, rng);
    const auto est = greedy_grad(model, loss, t, x, GreedyEstimator::Euler1);
    const Vec x1 = *est.estimate_of_x1;
    const Vec expected = model.posterior_vjp(
        t, x, prob.A.transpose() * (prob.A * x1 - prob.y) / (prob.beta_y * prob.beta_y));
    CHECK((est.grad - expected).norm() <= 1e-8 * (1.0 + expected.norm()));
}

TEST_CASE("guided_sample records a loss curve per solver step") {
    Rng rng(4);
    PosteriorModel model(Schedule::cond_ot(), two_mode_target());
    const Loss loss = Loss::quadratic((Vec(2) << 2.0, 0.0).finished());
    auto run = basic_run(Engine::GreedyMidpoint, 0.3);
    run.inner_steps = 2;
    const auto res = guided_sample(model, run, loss, rng.normal_vec(2));
    CHECK(res.loss_curve.size() == static_cast<std::size_t>(run.solver.n_steps));
    CHECK(res.terminal_loss == loss.value(res.trajectory.terminal()));
}

TEST_CASE("guidance divergence reports the step index") {
    Rng rng(5);
    PosteriorModel model(Schedule::cond_ot(), two_mode_target());
    // beta_y small enough to overflow the measurement gradient
    Mat A = Mat::Identity(2, 2);
    Vec y(2);
    y << 100.0, 100.0;
    const Loss loss = Loss::linear_measurement(A, y, 1e-160);
    const auto run = basic_run(Engine::GreedyEuler, 1e160);
    CHECK_THROWS_AS(guided_sample(model, run, loss, rng.normal_vec(2)), DivergenceError);
}

TEST_CASE("guidance config validation") {
    GuidanceRun run = basic_run(Engine::GreedyKStepEuler, 0.1);
    run.kstep = 0;
    PosteriorModel model(Schedule::cond_ot(), two_mode_target());
    const Loss loss = Loss::quadratic(Vec::Zero(2));
    CHECK_THROWS_AS(guided_sample(model, run, loss, Vec::Zero(2)), ConfigError);
    run.kstep = 2;
    run.inner_steps = 0;
    CHECK_THROWS_AS(guided_sample(model, run, loss, Vec::Zero(2)), ConfigError);
    run.inner_steps = 1;
    run.eta.t_cut = 1.5;
    CHECK_THROWS_AS(guided_sample(model, run, loss, Vec::Zero(2)), ConfigError);
}

TEST_CASE("e2e optimization of the initial condition") {
    Rng rng(6);
    PosteriorModel model(Schedule::cond_ot(), two_mode_target());
    E2eOptConfig cfg;
    cfg.solver.scheme = Scheme::Midpoint;
    cfg.solver.n_steps = 24;

    SECTION("zero iterations returns x0 unchanged") {
        cfg.iterations = 0;
        const Vec x0 = rng.normal_vec(2);
        const auto res = e2e_optimize_x0(model, Loss::quadratic(Vec::Zero(2)), cfg, x0);
        CHECK(res.x0_best == x0);
        CHECK(res.history.size() == 1u);
    }
    SECTION("recovers the terminal of a nearby initial condition") {
        const Vec x0_true = rng.normal_vec(2);
        const Vec target = solve(model, cfg.solver, x0_true).terminal();
        const Loss loss = Loss::quadratic(target);
        cfg.iterations = 200;
        cfg.lr = 0.4;
        const Vec x0_start = x0_true + 0.3 * rng.normal_vec(2);
        const auto res = e2e_optimize_x0(model, loss, cfg, x0_start);
        CHECK_FALSE(res.diverged);
        CHECK(res.best_loss <= 1e-4);
    }
    SECTION("momentum accepts valid range only") {
        cfg.momentum = 1.0;
        CHECK_THROWS_AS(e2e_optimize_x0(model, Loss::quadratic(Vec::Zero(2)), cfg, Vec::Zero(2)),
                        ConfigError);
    }
}

TEST_CASE("inverse problem construction") {
    Vec truth(2);
    truth << 1.0, 2.0;

    SECTION("mask keeps the named coordinates") {
        const auto prob = make_inverse_problem(MeasurementKind::Mask, 0, {0}, truth, 1e-12, 1);
        REQUIRE(prob.y.size() == 1);
        CHECK(prob.y[0] == Catch::Approx(1.0).margin(1e-9));
        CHECK_THROWS_AS(make_inverse_problem(MeasurementKind::Mask, 0, {}, truth, 0.05, 1),
                        ConfigError);
        CHECK_THROWS_AS(make_inverse_problem(MeasurementKind::Mask, 0, {7}, truth, 0.05, 1),
                        ConfigError);
    }
    SECTION("squash clips at the saturation boundary") {
        Vec t2(2);
        t2 << 0.2, 0.9;
        const auto prob =
            make_inverse_problem(MeasurementKind::NonlinearSquash, 0, {}, t2, 1e-12, 2);
        CHECK(prob.y[0] == Catch::Approx(0.4).margin(1e-9));
        CHECK(prob.y[1] == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("random projection is reproducible per seed") {
        const auto a = make_inverse_problem(MeasurementKind::RandomProjection, 1, {}, truth, 0.05, 9);
        const auto b = make_inverse_problem(MeasurementKind::RandomProjection, 1, {}, truth, 0.05, 9);
        CHECK(a.A == b.A);
        CHECK(a.y == b.y);
        CHECK_THROWS_AS(make_inverse_problem(MeasurementKind::RandomProjection, 5, {}, truth,
                                             0.05, 9),
                        ConfigError);
    }
}

TEST_CASE("loss gradients match finite differences away from kinks") {
    Rng rng(7);
    Vec target(2);
    target << 0.4, -0.2;
    Mat A(1, 2);
    A << 0.7, -0.3;
    Vec y(1);
    y << 0.25;
    const Loss losses[] = {Loss::quadratic(target), Loss::linear_measurement(A, y, 0.05),
                           Loss::squash_measurement((Vec(2) << 0.3, -0.6).finished(), 0.1)};
    for (const Loss& loss : losses) {
        for (int trial = 0; trial < 10; ++trial) {
            Vec x = 0.35 * rng.normal_vec(2);  // keep |2x| < 1 for the squash branch
            const double h = 1e-6;
            Vec fd(2);
            for (int j = 0; j < 2; ++j) {
                const Vec e = Vec::Unit(2, j);
                fd[j] = (loss.value(x + h * e) - loss.value(x - h * e)) / (2.0 * h);
            }
            const Vec g = loss.gradient(x);
            CHECK((g - fd).norm() <= 1e-6 * (1.0 + fd.norm()));
        }
    }
}

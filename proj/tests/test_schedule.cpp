#include <catch2/catch_amalgamated.hpp>

#include "flowguide/rng.hpp"
#include "flowguide/schedule.hpp"

using namespace flowguide;

namespace {

// Finite-difference oracle for the semi-linear coefficients; h = 1e-6.
Coeffs fd_coeffs(const Schedule& s, double t, double h = 1e-6) {
    const double ad = (s.alpha(t + h) - s.alpha(t - h)) / (2 * h);
    const double sd = (s.sigma(t + h) - s.sigma(t - h)) / (2 * h);
    const double a = sd / s.sigma(t);
    return {a, ad - s.alpha(t) * a};
}

}  // namespace

TEST_CASE("schedule boundary conditions and monotonicity") {
    for (auto sched : {Schedule::cond_ot(), Schedule::variance_preserving()}) {
        CHECK(std::abs(sched.alpha(0.0)) <= 1e-12);
        CHECK(std::abs(sched.sigma(1.0)) <= 1e-12);
        CHECK(std::abs(sched.alpha(1.0) - 1.0) <= 1e-12);
        CHECK(std::abs(sched.sigma(0.0) - 1.0) <= 1e-12);
        double prev = -1.0;
        for (int i = 1; i <= 200; ++i) {
            const double t = i / 200.0 * sched.t_end();
            CHECK(sched.alpha_dot(t) > 0.0);
            CHECK(sched.sigma_dot(t) < 0.0);
            const double g = sched.gamma(t);
            CHECK(g > prev);
            prev = g;
        }
    }
}

TEST_CASE("cond_ot coefficients at reference points") {
    const auto s = Schedule::cond_ot();
    const auto c_half = s.coeffs(0.5);
    CHECK(c_half.a == Catch::Approx(-2.0).margin(1e-14));
    CHECK(c_half.b == Catch::Approx(2.0).margin(1e-14));
    const auto c0 = s.coeffs(0.0);
    CHECK(c0.a == Catch::Approx(-1.0).margin(1e-14));
    CHECK(c0.b == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("variance_preserving coefficients match the finite-difference oracle") {
    const auto s = Schedule::variance_preserving();
    // symbolic value at t = 0.5: a = -pi/2, b = pi/sqrt(2)
    const auto c = s.coeffs(0.5);
    CHECK(c.a == Catch::Approx(-1.5707963267948966).margin(1e-12));
    CHECK(c.b == Catch::Approx(2.221441469079183).margin(1e-12));
    for (double t : {0.05, 0.21, 0.5, 0.77, 0.95}) {
        const auto exact = s.coeffs(t);
        const auto fd = fd_coeffs(s, t);
        CHECK(std::abs(exact.a - fd.a) <= 1e-6 * (1.0 + std::abs(fd.a)));
        CHECK(std::abs(exact.b - fd.b) <= 1e-6 * (1.0 + std::abs(fd.b)));
    }
}

TEST_CASE("coeffs rejects out-of-domain times") {
    const auto s = Schedule::cond_ot();
    CHECK_THROWS_AS(s.coeffs(-0.01), RangeError);
    CHECK_THROWS_AS(s.coeffs(0.9999), RangeError);  // past 1-eps
    const auto custom = Schedule::custom(
        [](double t) { return t; }, [](double t) { return 1.0 - t; },
        [](double) { return 1.0; }, [](double) { return -1.0; }, 1e-3);
    CHECK_NOTHROW(custom.coeffs(custom.t_end()));
}

TEST_CASE("snr round trip and closed values") {
    const auto s = Schedule::cond_ot();
    CHECK(s.snr(0.5).gamma == Catch::Approx(1.0).margin(1e-14));
    CHECK(s.snr_inverse(1.0) == Catch::Approx(0.5).margin(1e-12));
    const auto p = s.snr(0.9);
    CHECK(p.gamma == Catch::Approx(9.0).margin(1e-12));
    CHECK(p.gamma_dot == Catch::Approx(100.0).margin(1e-9));

    for (auto sched : {Schedule::cond_ot(), Schedule::variance_preserving()}) {
        for (int i = 0; i <= 100; ++i) {
            const double t = 0.01 + (sched.t_end() - 0.01) * i / 100.0;
            CHECK(std::abs(sched.snr_inverse(sched.gamma(t)) - t) <= 1e-10);
        }
    }
}

TEST_CASE("custom schedule inverts gamma by bisection") {
    // quadratic-in-t schedule
    const auto s = Schedule::custom(
        [](double t) { return t * t; }, [](double t) { return 1.0 - t * t; },
        [](double t) { return 2.0 * t; }, [](double t) { return -2.0 * t; }, 1e-3);
    for (double t : {0.05, 0.4, 0.83, s.t_end()}) {
        CHECK(std::abs(s.snr_inverse(s.gamma(t)) - t) <= 1e-10);
    }
    CHECK_THROWS_AS(s.snr_inverse(-0.5), RangeError);
    CHECK_THROWS_AS(s.snr_inverse(1e9), RangeError);
}

TEST_CASE("gamma_dot identity against b/sigma on random times") {
    // Eq-24-style identity: γ̇ = b/σ, checked on 1000 draws.
    const auto s = Schedule::variance_preserving();
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double t = rng.uniform(1e-4, s.t_end());
        const auto c = s.coeffs(t);
        CHECK(std::abs(s.snr(t).gamma_dot - c.b / s.sigma(t)) <= 1e-9);
    }
}

TEST_CASE("schedule validation rejects broken inputs") {
    CHECK_THROWS_AS(Schedule::cond_ot(0.0), ConfigError);
    CHECK_THROWS_AS(Schedule::cond_ot(0.5), ConfigError);
    // wrong boundary: alpha(1) = 2
    CHECK_THROWS_AS(Schedule::custom([](double t) { return 2 * t; },
                                     [](double t) { return 1 - t; },
                                     [](double) { return 2.0; }, [](double) { return -1.0; }),
                    ConfigError);
    // non-monotone sigma
    CHECK_THROWS_AS(Schedule::custom([](double t) { return t; },
                                     [](double t) { return 1 + t - 2 * t * t; },
                                     [](double) { return 1.0; },
                                     [](double t) { return 1 - 4 * t; }),
                    ConfigError);
}

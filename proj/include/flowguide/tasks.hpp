#pragma once

#include "flowguide/grads.hpp"
#include "flowguide/verify.hpp"

#include <vector>

namespace flowguide {

enum class EtaScheduleKind { Constant, AnnealedLinearCutoff };

// Guidance strength over time. The annealed form is η·(1−t) for t > t_cut and
// zero otherwise; t_cut = 0 keeps it active over the whole solve.
struct EtaSchedule {
    EtaScheduleKind kind = EtaScheduleKind::Constant;
    double eta = 0.0;
    double t_cut = 0.0;

    void validate() const {
        if (!(eta >= 0.0)) throw ConfigError("eta schedule: eta must be >= 0");
        if (t_cut < 0.0 || t_cut > 1.0) throw ConfigError("eta schedule: t_cut must lie in [0,1]");
    }

    double at(double t) const {
        switch (kind) {
            case EtaScheduleKind::Constant: return eta;
            case EtaScheduleKind::AnnealedLinearCutoff:
                return t > t_cut ? eta * (1.0 - t) : 0.0;
        }
        return 0.0;
    }
};

struct GuidanceRun {
    Engine engine = Engine::GreedyEuler;
    int kstep = 2;        // GreedyKStepEuler estimator steps
    int dto_steps = 16;   // DTO-on-remaining-interval steps
    EtaSchedule eta;
    int inner_steps = 1;  // gradient updates per solver step
    SolverConfig solver;
    std::uint64_t seed = 0;

    void validate() const {
        eta.validate();
        if (inner_steps < 1) throw ConfigError("guidance: inner_steps must be >= 1");
        if (engine == Engine::GreedyKStepEuler && kstep < 1)
            throw ConfigError("guidance: kstep must be >= 1");
        if (engine == Engine::OtdAdjoint || engine == Engine::ForwardSensitivity)
            throw ConfigError("guidance: engine must be a posterior-family or DTO engine");
    }
};

struct GuidedRunResult {
    Trajectory trajectory;
    std::vector<double> loss_curve;  // L(estimate_of_x1) at each guided node
    double terminal_loss = 0.0;
};

namespace detail {

inline GradientEstimate guidance_gradient(const PosteriorModel& model, const Loss& loss,
                                          const GuidanceRun& run, double t, const Vec& x) {
    switch (run.engine) {
        case Engine::GreedyEuler:
            return greedy_grad(model, loss, t, x, GreedyEstimator::Euler1);
        case Engine::GreedyMidpoint:
            return greedy_grad(model, loss, t, x, GreedyEstimator::Midpoint);
        case Engine::GreedyKStepEuler:
            return greedy_grad(model, loss, t, x, GreedyEstimator::KStepEuler, run.kstep);
        case Engine::DtoFull: {
            SolverConfig cfg = run.solver;
            cfg.scheme = Scheme::Euler;
            cfg.n_steps = run.dto_steps;
            cfg.t_end = -1.0;
            return dto_grad(model, loss, cfg, t, x);
        }
        default: break;
    }
    throw ConfigError("guidance: unsupported engine");
}

}  // namespace detail

// Guided sampling loop: at each solver node apply `inner_steps` gradient updates
// with strength η(t_n), then advance one solver step. With η = 0 the state
// updates are exact no-ops, so the run is bit-identical to the unguided solve.
inline GuidedRunResult guided_sample(const PosteriorModel& model, const GuidanceRun& run,
                                     const Loss& loss, const Vec& x0) {
    run.validate();
    require_finite(x0, "x0");
    const auto ts = make_grid(model.schedule(), run.solver);
    GuidedRunResult out;
    out.trajectory.times = ts;
    out.trajectory.states.reserve(ts.size());

    Vec x = x0;
    out.trajectory.states.push_back(x);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const double t = ts[i];
        const double eta_t = run.eta.at(t);
        auto diverged = [&](const char* what) {
            std::ostringstream msg;
            msg << "guidance diverged at step " << i << " (" << what << "); last finite loss "
                << (out.loss_curve.empty() ? loss.value(x0) : out.loss_curve.back());
            return DivergenceError(static_cast<int>(i), "guidance", msg.str());
        };
        for (int j = 0; j < run.inner_steps; ++j) {
            GradientEstimate est;
            try {
                est = detail::guidance_gradient(model, loss, run, t, x);
            } catch (const std::invalid_argument& e) {
                // a non-finite state or gradient reached an engine mid-run
                throw diverged(e.what());
            }
            if (!est.grad.allFinite()) throw diverged("non-finite gradient");
            if (j + 1 == run.inner_steps) {
                const double l = loss.value(*est.estimate_of_x1);
                if (!std::isfinite(l)) throw diverged("non-finite loss");
                out.loss_curve.push_back(l);
            }
            x -= eta_t * est.grad;
            if (!x.allFinite()) throw diverged("non-finite state after update");
        }
        try {
            x = step(model, run.solver.scheme, ts[i], ts[i + 1], x, static_cast<int>(i));
        } catch (const std::invalid_argument& e) {
            throw diverged(e.what());
        }
        detail::check_stage(x, static_cast<int>(i), "post_step");
        out.trajectory.states.push_back(x);
    }
    out.terminal_loss = loss.value(out.trajectory.terminal());
    return out;
}

// --- metrics (pure functions of trajectory and problem) ---------------------

inline double terminal_distance(const Trajectory& traj, const Vec& target) {
    return (traj.terminal() - target).norm();
}

inline bool mode_hit(const Trajectory& traj, const Vec& mode, double radius) {
    return terminal_distance(traj, mode) <= radius;
}

// --- end-to-end initial-condition optimization -------------------------------

struct E2eOptConfig {
    int iterations = 100;
    double lr = 0.1;
    double momentum = 0.0;  // 0 = plain gradient descent
    SolverConfig solver;    // DTO scheme and grid for the forward solve
};

struct E2eResult {
    Vec x0_best;
    double best_loss = 0.0;
    int best_iteration = 0;
    std::vector<double> history;  // terminal loss per iterate, including the start
    bool diverged = false;
};

inline E2eResult e2e_optimize_x0(const PosteriorModel& model, const Loss& loss,
                                 const E2eOptConfig& cfg, const Vec& x0) {
    if (cfg.iterations < 0) throw ConfigError("e2e: iterations must be >= 0");
    if (!(cfg.lr > 0.0)) throw ConfigError("e2e: lr must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw ConfigError("e2e: momentum must lie in [0,1)");
    require_finite(x0, "x0");

    E2eResult out;
    Vec x = x0;
    Vec velocity = Vec::Zero(x.size());
    out.x0_best = x0;

    for (int it = 0; it <= cfg.iterations; ++it) {
        GradientEstimate est;
        try {
            est = dto_grad(model, loss, cfg.solver, cfg.solver.t_start, x);
        } catch (const DivergenceError&) {
            out.diverged = true;
            break;
        }
        const double l = loss.value(*est.estimate_of_x1);
        if (!std::isfinite(l)) {
            out.diverged = true;
            break;
        }
        out.history.push_back(l);
        if (it == 0 || l < out.best_loss) {
            out.best_loss = l;
            out.best_iteration = it;
            out.x0_best = x;
        }
        if (it == cfg.iterations) break;
        velocity = cfg.momentum * velocity - cfg.lr * est.grad;
        x += velocity;
    }
    return out;
}

// --- synthetic inverse problems ----------------------------------------------

enum class MeasurementKind { RandomProjection, Mask, NonlinearSquash };

struct InverseProblem {
    MeasurementKind kind = MeasurementKind::RandomProjection;
    Mat A;                   // linear kinds
    std::vector<int> mask;   // Mask only (row indices of the identity)
    Vec y;
    double beta_y = 0.0;
    Vec truth;
    double squash_scale = 2.0;

    Loss to_loss() const {
        switch (kind) {
            case MeasurementKind::RandomProjection:
            case MeasurementKind::Mask:
                return Loss::linear_measurement(A, y, beta_y);
            case MeasurementKind::NonlinearSquash:
                return Loss::squash_measurement(y, beta_y, squash_scale);
        }
        throw ConfigError("inverse problem: unknown kind");
    }
};

inline InverseProblem make_inverse_problem(MeasurementKind kind, int d_y,
                                           const std::vector<int>& mask_indices, const Vec& truth,
                                           double beta_y, std::uint64_t seed) {
    if (!(beta_y > 0.0)) throw ConfigError("inverse problem: beta_y must be positive");
    require_finite(truth, "truth");
    const int d = static_cast<int>(truth.size());
    Rng rng(seed);
    InverseProblem prob;
    prob.kind = kind;
    prob.beta_y = beta_y;
    prob.truth = truth;
    switch (kind) {
        case MeasurementKind::RandomProjection: {
            if (d_y < 1 || d_y > d) throw ConfigError("inverse problem: need 1 <= d_y <= dim");
            prob.A = Mat(d_y, d);
            for (int i = 0; i < d_y; ++i)
                for (int j = 0; j < d; ++j) prob.A(i, j) = rng.normal() / std::sqrt(d);
            prob.y = prob.A * truth;
            break;
        }
        case MeasurementKind::Mask: {
            if (mask_indices.empty()) throw ConfigError("inverse problem: empty mask");
            prob.mask = mask_indices;
            prob.A = Mat::Zero(static_cast<int>(mask_indices.size()), d);
            for (std::size_t i = 0; i < mask_indices.size(); ++i) {
                const int idx = mask_indices[i];
                if (idx < 0 || idx >= d) throw ConfigError("inverse problem: mask index out of range");
                prob.A(static_cast<int>(i), idx) = 1.0;
            }
            prob.y = prob.A * truth;
            break;
        }
        case MeasurementKind::NonlinearSquash: {
            prob.y = (prob.squash_scale * truth).cwiseMax(-1.0).cwiseMin(1.0);
            break;
        }
    }
    for (Eigen::Index i = 0; i < prob.y.size(); ++i) prob.y[i] += beta_y * rng.normal();
    return prob;
}

}  // namespace flowguide

#pragma once

#include "flowguide/model.hpp"

#include <sstream>

namespace flowguide {

struct TrainConfig {
    int steps = 20000;
    int batch = 64;
    double lr = 1e-2;          // peak rate; decays with a cosine to 0
    int holdout = 2048;        // held-out pair count for the final loss
    double loss_threshold = -1.0;  // absolute gate; <0 means "beat the zero predictor"
    std::uint64_t seed = 0;

    void validate() const {
        if (steps < 0) throw ConfigError("train: steps must be >= 0");
        if (batch < 1) throw ConfigError("train: batch must be positive");
        if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
        if (holdout < 1) throw ConfigError("train: holdout must be positive");
    }
};

struct TrainResult {
    PosteriorModel model;
    double holdout_loss;        // mean ||u_θ(t, x_t) − (x1−x0)||² on held-out pairs
    double zero_predictor_loss; // same metric for u ≡ 0; the variance of the target
    int steps;
};

namespace detail {

struct CfmBatchSample {
    double t;
    Vec xt;
    Vec target;  // conditional velocity x1 − x0
};

inline CfmBatchSample draw_cfm_sample(const GaussianMixtureTarget& target, Rng& rng) {
    CfmBatchSample s;
    const int d = target.dim();
    const Vec x0 = rng.normal_vec(d);
    const Vec x1 = target.sample(rng);
    s.t = rng.uniform();
    s.xt = s.t * x1 + (1.0 - s.t) * x0;  // CondOT path
    s.target = x1 - x0;
    return s;
}

}  // namespace detail

// Conditional flow-matching regression of the network field onto the CondOT
// conditional velocity x1 − x0. Plain SGD with cosine step decay; single
// threaded, so a fixed seed reproduces the weights bit for bit.
inline TrainResult train_micro_mlp(const GaussianMixtureTarget& target, const Schedule& schedule,
                                   const MicroMlpSpec& arch, const TrainConfig& cfg) {
    cfg.validate();
    arch.validate();
    if (schedule.kind() != ScheduleKind::CondOT)
        throw ConfigError("train_micro_mlp: training targets are defined for the CondOT schedule");
    if (arch.dim != target.dim())
        throw ConfigError("train_micro_mlp: network dim does not match target dim");

    MicroMlp net(arch);
    Rng rng(cfg.seed);
    const double pi = 3.14159265358979323846;

    for (int step = 0; step < cfg.steps; ++step) {
        auto grads = net.zero_grads();
        double loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto s = detail::draw_cfm_sample(target, rng);
            const auto act = net.forward_trace(s.t, s.xt);
            const Vec resid = act.out - s.target;
            loss += resid.squaredNorm();
            net.param_backward(act, (2.0 / cfg.batch) * resid, grads);
        }
        loss /= cfg.batch;
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "train_micro_mlp: loss diverged at step " << step << " (loss=" << loss << ")";
            throw TrainingError(msg.str());
        }
        const double lr = cfg.lr * 0.5 * (1.0 + std::cos(pi * step / std::max(1, cfg.steps)));
        net.apply_update(grads, lr);
    }

    // Held-out evaluation, drawn after training from the same stream.
    double holdout_loss = 0.0, zero_loss = 0.0;
    for (int i = 0; i < cfg.holdout; ++i) {
        const auto s = detail::draw_cfm_sample(target, rng);
        holdout_loss += (net.forward(s.t, s.xt) - s.target).squaredNorm();
        zero_loss += s.target.squaredNorm();
    }
    holdout_loss /= cfg.holdout;
    zero_loss /= cfg.holdout;

    const double gate = cfg.loss_threshold >= 0.0 ? cfg.loss_threshold : zero_loss;
    if (cfg.steps > 0 && !(holdout_loss < gate)) {
        std::ostringstream msg;
        msg << "train_micro_mlp: held-out CFM loss " << holdout_loss
            << " did not reach threshold " << gate;
        throw TrainingError(msg.str());
    }

    return {PosteriorModel(schedule, std::move(net)), holdout_loss, zero_loss, cfg.steps};
}

}  // namespace flowguide

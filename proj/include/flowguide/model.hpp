#pragma once

#include "flowguide/common.hpp"
#include "flowguide/micro_mlp.hpp"
#include "flowguide/mixture.hpp"
#include "flowguide/schedule.hpp"

#include <memory>

namespace flowguide {

enum class Backend { AnalyticMixture, MicroMlp };

// Posterior-mean backend behind a single query surface: x1|t(x), its
// jvp/vjp, Var1|t(x), and the induced vector field u_t(x) = a_t x + b_t x1|t(x).
//
// The analytic backend evaluates the mixture conjugacy closed forms; the MLP
// backend runs in direct-field mode (the network outputs u_t directly) and
// derives posterior quantities through the semi-linear split.
// Immutable after construction; all queries are const and thread-safe.
class PosteriorModel {
public:
    PosteriorModel(Schedule schedule, GaussianMixtureTarget target)
        : schedule_(std::move(schedule)),
          mixture_(std::make_shared<GaussianMixtureTarget>(std::move(target))) {}

    PosteriorModel(Schedule schedule, MicroMlp net)
        : schedule_(std::move(schedule)), mlp_(std::make_shared<MicroMlp>(std::move(net))) {}

    Backend backend() const { return mixture_ ? Backend::AnalyticMixture : Backend::MicroMlp; }
    const Schedule& schedule() const { return schedule_; }
    int dim() const { return mixture_ ? mixture_->dim() : mlp_->dim(); }

    const GaussianMixtureTarget& mixture() const {
        if (!mixture_) throw UnsupportedError("no mixture target on this backend");
        return *mixture_;
    }
    const MicroMlp& net() const {
        if (!mlp_) throw UnsupportedError("no network on this backend");
        return *mlp_;
    }

    Vec posterior_mean(double t, const Vec& x) const {
        require_finite(x, "x");
        if (mixture_) return posterior(t, x).mean();
        const Coeffs c = schedule_.coeffs(t);
        return (mlp_->forward(t, x) - c.a * x) / c.b;
    }

    // AnalyticMixture only; the MLP carries no posterior spread.
    Mat posterior_var(double t, const Vec& x) const {
        require_finite(x, "x");
        if (!mixture_) throw UnsupportedError("posterior_var: MicroMlp backend");
        return posterior(t, x).variance();
    }

    Mat posterior_jacobian(double t, const Vec& x) const {
        require_finite(x, "x");
        if (!mixture_) throw UnsupportedError("posterior_jacobian: MicroMlp backend");
        return posterior(t, x).jacobian();
    }

    Vec posterior_jvp(double t, const Vec& x, const Vec& v) const {
        require_finite(x, "x");
        require_finite(v, "v");
        if (mixture_) return posterior(t, x).jacobian() * v;
        const Coeffs c = schedule_.coeffs(t);
        return (mlp_->input_jvp(t, x, v) - c.a * v) / c.b;
    }

    Vec posterior_vjp(double t, const Vec& x, const Vec& w) const {
        require_finite(x, "x");
        require_finite(w, "w");
        if (mixture_) return posterior(t, x).jacobian().transpose() * w;
        const Coeffs c = schedule_.coeffs(t);
        return (mlp_->input_vjp(t, x, w) - c.a * w) / c.b;
    }

    Vec vector_field(double t, const Vec& x) const {
        require_finite(x, "x");
        if (!mixture_) return mlp_->forward(t, x);
        const Coeffs c = schedule_.coeffs(t);
        return c.a * x + c.b * posterior(t, x).mean();
    }

    // ∂u/∂x · v = a·v + b·(∂x1|t/∂x)·v
    Vec field_jvp(double t, const Vec& x, const Vec& v) const {
        if (!mixture_) return mlp_->input_jvp(t, x, v);
        const Coeffs c = schedule_.coeffs(t);
        return c.a * v + c.b * (posterior(t, x).jacobian() * v);
    }

    Vec field_vjp(double t, const Vec& x, const Vec& w) const {
        if (!mixture_) return mlp_->input_vjp(t, x, w);
        const Coeffs c = schedule_.coeffs(t);
        return c.a * w + c.b * (posterior(t, x).jacobian().transpose() * w);
    }

    MixturePosterior posterior(double t, const Vec& x) const {
        if (!mixture_) throw UnsupportedError("posterior: MicroMlp backend");
        return MixturePosterior(*mixture_, schedule_.alpha(t), schedule_.sigma(t), x);
    }

private:
    Schedule schedule_;
    std::shared_ptr<const GaussianMixtureTarget> mixture_;
    std::shared_ptr<const MicroMlp> mlp_;
};

}  // namespace flowguide

#pragma once

#include "flowguide/common.hpp"

#include <memory>
#include <string>

namespace flowguide {

enum class LossKind { Quadratic, LinearMeasurement, NonlinearMeasurement };

// Guidance function L on the terminal state, with an analytic gradient.
//   Quadratic:            L(x) = ½·||x − x*||²
//   LinearMeasurement:    L(x) = ||A·x − y||² / (2·β_y²)
//   NonlinearMeasurement: L(x) = ||op(x) − y||² / (2·β_y²),
// where the only named nonlinear operator is the saturating "squash"
// op(x) = clip(op_scale·x, −1, 1), applied elementwise.
class Loss {
public:
    static Loss quadratic(Vec target) {
        Loss l;
        l.kind_ = LossKind::Quadratic;
        l.target_ = std::move(target);
        return l;
    }

    static Loss linear_measurement(Mat A, Vec y, double beta_y) {
        if (!(beta_y > 0.0)) throw ConfigError("loss: beta_y must be positive");
        if (A.rows() != y.size()) throw ConfigError("loss: A rows must match y size");
        Loss l;
        l.kind_ = LossKind::LinearMeasurement;
        l.A_ = std::move(A);
        l.target_ = std::move(y);
        l.beta_y_ = beta_y;
        return l;
    }

    static Loss squash_measurement(Vec y, double beta_y, double op_scale = 2.0) {
        if (!(beta_y > 0.0)) throw ConfigError("loss: beta_y must be positive");
        Loss l;
        l.kind_ = LossKind::NonlinearMeasurement;
        l.target_ = std::move(y);
        l.beta_y_ = beta_y;
        l.op_scale_ = op_scale;
        return l;
    }

    LossKind kind() const { return kind_; }
    const Mat& matrix() const { return A_; }
    const Vec& target() const { return target_; }
    double beta_y() const { return beta_y_; }

    double value(const Vec& x) const {
        require_finite(x, "loss x");
        switch (kind_) {
            case LossKind::Quadratic: return 0.5 * (x - target_).squaredNorm();
            case LossKind::LinearMeasurement:
                return (A_ * x - target_).squaredNorm() / (2.0 * beta_y_ * beta_y_);
            case LossKind::NonlinearMeasurement:
                return (squash(x) - target_).squaredNorm() / (2.0 * beta_y_ * beta_y_);
        }
        return 0.0;
    }

    Vec gradient(const Vec& x) const {
        require_finite(x, "loss x");
        switch (kind_) {
            case LossKind::Quadratic: return x - target_;
            case LossKind::LinearMeasurement:
                return A_.transpose() * (A_ * x - target_) / (beta_y_ * beta_y_);
            case LossKind::NonlinearMeasurement: {
                // Subgradient: saturated coordinates contribute nothing.
                Vec r = (squash(x) - target_) / (beta_y_ * beta_y_);
                for (Eigen::Index i = 0; i < x.size(); ++i)
                    r[i] = std::abs(op_scale_ * x[i]) < 1.0 ? op_scale_ * r[i] : 0.0;
                return r;
            }
        }
        return Vec::Zero(x.size());
    }

    Vec squash(const Vec& x) const {
        return (op_scale_ * x).cwiseMax(-1.0).cwiseMin(1.0);
    }

private:
    LossKind kind_ = LossKind::Quadratic;
    Mat A_;
    Vec target_;
    double beta_y_ = 1.0;
    double op_scale_ = 2.0;
};

}  // namespace flowguide

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace flowguide {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Config / schema / argument problems. CLI maps these to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A quantity left its representable range (e.g. snr_inverse outside [γ_min, γ_max]).
struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation not defined for this backend (e.g. posterior_var on an MLP).
struct UnsupportedError : std::runtime_error {
    explicit UnsupportedError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite state during integration. Carries the failing step and stage.
// CLI maps these to exit code 2.
struct DivergenceError : std::runtime_error {
    int step;
    std::string stage;
    DivergenceError(int step_, std::string stage_, const std::string& msg)
        : std::runtime_error(msg), step(step_), stage(std::move(stage_)) {}
};

// Quadrature or iterative refinement failed to reach its tolerance.
struct AccuracyError : std::runtime_error {
    explicit AccuracyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training diverged (NaN loss) or otherwise failed.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite()) throw std::invalid_argument(std::string("non-finite input: ") + what);
}

inline double sq(double x) { return x * x; }

}  // namespace flowguide

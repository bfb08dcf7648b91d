#pragma once

#include "flowguide/common.hpp"
#include "flowguide/rng.hpp"

#include <Eigen/Cholesky>

#include <vector>

namespace flowguide {

// Target distribution q(x1) = Σ_k w_k N(μ_k, Σ_k). Realizes a model trained to
// zero loss: under the affine path x_t = α x1 + σ x0 every posterior quantity
// below has a closed form via linear-Gaussian conjugacy.
class GaussianMixtureTarget {
public:
    GaussianMixtureTarget(std::vector<double> weights, std::vector<Vec> means,
                          std::vector<Mat> covariances)
        : w_(std::move(weights)), mu_(std::move(means)), cov_(std::move(covariances)) {
        if (w_.empty() || w_.size() != mu_.size() || w_.size() != cov_.size())
            throw ConfigError("mixture: weights/means/covariances size mismatch");
        dim_ = static_cast<int>(mu_[0].size());
        if (dim_ < 1 || dim_ > 64) throw ConfigError("mixture: dim must lie in [1, 64]");
        double wsum = 0.0;
        for (std::size_t k = 0; k < w_.size(); ++k) {
            if (!(w_[k] > 0.0)) throw ConfigError("mixture: weights must be positive");
            wsum += w_[k];
            if (mu_[k].size() != dim_ || cov_[k].rows() != dim_ || cov_[k].cols() != dim_)
                throw ConfigError("mixture: inconsistent component dimensions");
            Eigen::LLT<Mat> llt(cov_[k]);
            if (llt.info() != Eigen::Success)
                throw ConfigError("mixture: covariance not SPD (Cholesky failed)");
            chol_.push_back(llt.matrixL());
        }
        if (std::abs(wsum - 1.0) > 1e-12) throw ConfigError("mixture: weights must sum to 1");
    }

    int dim() const { return dim_; }
    int components() const { return static_cast<int>(w_.size()); }
    const std::vector<double>& weights() const { return w_; }
    const Vec& mean_of(int k) const { return mu_[k]; }
    const Mat& cov_of(int k) const { return cov_[k]; }

    Vec sample(Rng& rng) const {
        double u = rng.uniform();
        std::size_t k = 0;
        for (; k + 1 < w_.size(); ++k) {
            if (u < w_[k]) break;
            u -= w_[k];
        }
        return mu_[k] + chol_[k] * rng.normal_vec(dim_);
    }

    Vec target_mean() const {
        Vec m = Vec::Zero(dim_);
        for (std::size_t k = 0; k < w_.size(); ++k) m += w_[k] * mu_[k];
        return m;
    }

private:
    std::vector<double> w_;
    std::vector<Vec> mu_;
    std::vector<Mat> cov_;
    std::vector<Mat> chol_;  // lower factors of Σ_k, for sampling
    int dim_ = 0;
};

// One-shot evaluation of the mixture posterior p(x1 | x_t = x) at (alpha, sigma).
// Conjugacy per component k, with S_k = α²Σ_k + σ²I:
//   responsibility r_k ∝ w_k N(x; αμ_k, S_k)          (log-space, max-subtracted)
//   posterior mean m_k = μ_k + αΣ_k S_k⁻¹ (x − αμ_k)
//   posterior cov  C_k = Σ_k − α²Σ_k S_k⁻¹ Σ_k
// The map Jacobian carries the ∇r_k terms, so it is the exact derivative of
// mean(); its agreement with (α/σ²)·Var is a theorem checked in the tests, not
// an implementation shortcut.
class MixturePosterior {
public:
    MixturePosterior(const GaussianMixtureTarget& target, double alpha, double sigma,
                     const Vec& x)
        : d_(target.dim()), K_(target.components()) {
        require_finite(x, "posterior x");
        if (!(sigma > 0.0)) throw RangeError("posterior: sigma must be positive");
        const double a2 = alpha * alpha, s2 = sigma * sigma;
        std::vector<double> logp(K_);
        rk_.resize(K_);
        mk_.resize(K_);
        grad_logp_.resize(K_);
        dm_.resize(K_);
        Ck_.resize(K_);
        for (int k = 0; k < K_; ++k) {
            const Mat& Sigma = target.cov_of(k);
            Mat S = a2 * Sigma + s2 * Mat::Identity(d_, d_);
            Eigen::LLT<Mat> llt(S);
            if (llt.info() != Eigen::Success) throw RangeError("posterior: S_k Cholesky failed");
            const Vec z = x - alpha * target.mean_of(k);
            const Vec Sinv_z = llt.solve(z);
            double logdet = 0.0;
            for (int i = 0; i < d_; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
            logp[k] = std::log(target.weights()[k]) - 0.5 * logdet - 0.5 * z.dot(Sinv_z);
            grad_logp_[k] = -Sinv_z;
            mk_[k] = target.mean_of(k) + alpha * (Sigma * Sinv_z);
            dm_[k] = alpha * llt.solve(Sigma).transpose();  // αΣS⁻¹, using S,Σ symmetric
            Ck_[k] = Sigma - a2 * (Sigma * llt.solve(Sigma));
        }
        double lmax = logp[0];
        for (int k = 1; k < K_; ++k) lmax = std::max(lmax, logp[k]);
        double norm = 0.0;
        for (int k = 0; k < K_; ++k) {
            rk_[k] = std::exp(logp[k] - lmax);
            norm += rk_[k];
        }
        for (int k = 0; k < K_; ++k) rk_[k] /= norm;
        mean_ = Vec::Zero(d_);
        for (int k = 0; k < K_; ++k) mean_ += rk_[k] * mk_[k];
    }

    const Vec& mean() const { return mean_; }

    // Law of total variance: Σ r_k (C_k + m_k m_kᵀ) − mean meanᵀ.
    Mat variance() const {
        Mat V = -mean_ * mean_.transpose();
        for (int k = 0; k < K_; ++k) V += rk_[k] * (Ck_[k] + mk_[k] * mk_[k].transpose());
        return 0.5 * (V + V.transpose());
    }

    // Exact ∇_x mean(x) = Σ_k [ r_k·αΣ_kS_k⁻¹ + m_k (∇r_k)ᵀ ], ∇r_k = r_k(g_k − ḡ).
    Mat jacobian() const {
        Vec gbar = Vec::Zero(d_);
        for (int k = 0; k < K_; ++k) gbar += rk_[k] * grad_logp_[k];
        Mat J = Mat::Zero(d_, d_);
        for (int k = 0; k < K_; ++k)
            J += rk_[k] * (dm_[k] + mk_[k] * (grad_logp_[k] - gbar).transpose());
        return J;
    }

    const std::vector<double>& responsibilities() const { return rk_; }

private:
    int d_, K_;
    std::vector<double> rk_;
    std::vector<Vec> mk_;
    std::vector<Vec> grad_logp_;
    std::vector<Mat> dm_;
    std::vector<Mat> Ck_;
    Vec mean_;
};

}  // namespace flowguide

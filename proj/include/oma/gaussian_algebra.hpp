#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "oma/linalg.hpp"

namespace oma {

/// Multivariate normal with an explicitly symmetric, PSD covariance.
/// The universal uncertainty carrier across the identification / fusion
/// hierarchy; immutable after construction and safe to share across threads.
class Gaussian {
public:
    Gaussian(VectorXd mean, MatrixXd cov);

    const VectorXd& mean() const { return mean_; }
    const MatrixXd& cov() const { return cov_; }
    Eigen::Index dim() const { return mean_.size(); }

    /// log N(x | mean, cov). Covariance factored on demand; throws if singular.
    double log_density(const VectorXd& x) const;
    double density(const VectorXd& x) const;

private:
    VectorXd mean_;
    MatrixXd cov_;
};

/// Standard deviations σ_pp plus strictly-lower-triangular correlations
/// ρ_pq ∈ (−1, 1); the sampling parameterization that keeps covariance
/// samples symmetric PSD by construction.
struct CorrelationSpec {
    VectorXd sigmas;   // σ_pp ≥ 0
    MatrixXd rhos;     // only entries (p, q) with p > q are read

    CorrelationSpec(VectorXd s, MatrixXd r);
    Eigen::Index dim() const { return sigmas.size(); }
    double rho(Eigen::Index p, Eigen::Index q) const {  // unordered access
        return p == q ? 1.0 : (p > q ? rhos(p, q) : rhos(q, p));
    }
};

struct ProductFactorization {
    double log_evidence;   // log N(μ | μ₀, Σ₀ + Σ)
    Gaussian posterior;    // N(ζ, Ω)
};

/// Factor the product of two Gaussians over the same variable:
/// N(x|μ₀,Σ₀)·N(x|μ,Σ) = evidence · N(x|ζ,Ω) with the gain-matrix forms
/// Ω = Σ₀ − K Σ₀, ζ = μ₀ + K(μ − μ₀), K = Σ₀(Σ₀+Σ)⁻¹.
ProductFactorization product_factorize(const Gaussian& g0, const Gaussian& g);

/// log N(μ_hyper | λ̂, Σ_hyper + Σ̂): the per-dataset evidence term of the
/// marginal hyper-posterior. All hierarchy-level products run in log space;
/// convolve_evidence is the thin linear wrapper.
double log_convolve_evidence(const VectorXd& lambda_hat, const MatrixXd& sigma_hat,
                             const MatrixXd& sigma_hyper, const VectorXd& mu_hyper);
double convolve_evidence(const VectorXd& lambda_hat, const MatrixXd& sigma_hat,
                         const MatrixXd& sigma_hyper, const VectorXd& mu_hyper);

/// Analytic Cholesky factor of the correlation matrix implied by `spec`
/// (unit-row-norm lower triangular L with L·Lᵀ = R), built column by column
/// from the correlation coefficients alone. Throws if R is not positive
/// definite (a diagonal term under the square root is ≤ 0).
MatrixXd cholesky_from_correlation(const CorrelationSpec& spec);

/// Σ = S·L·Lᵀ·S: covariance with diagonal σ_pp² and off-diagonals ρ_pq σ_pp σ_qq,
/// symmetric PSD by construction.
MatrixXd assemble_covariance(const CorrelationSpec& spec);

}  // namespace oma

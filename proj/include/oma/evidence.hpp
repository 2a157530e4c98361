#pragma once

#include <Eigen/Dense>
#include <string>

#include "oma/linalg.hpp"

namespace oma {

/// Laplace-approximated likelihood of the dynamical parameters λ = (f, ξ, φ)
/// for one dataset: λ̂_s with covariance Σ̂_λs. The mode-shape sub-vector of
/// λ̂ has unit norm; the covariance carries a tolerated null direction along
/// it (the unit-norm constraint).
struct DatasetEvidence {
    VectorXd lambda_hat;  // (n+2): f, ξ, φ₁…φ_n
    MatrixXd cov;         // (n+2)×(n+2) symmetric PSD
    std::string dataset_id;

    DatasetEvidence(VectorXd lam, MatrixXd c, std::string id);

    Eigen::Index dim() const { return lambda_hat.size(); }
    /// Mode-shape length; zero for the low-dimensional algebra-test cases.
    Eigen::Index channels() const { return std::max<Eigen::Index>(lambda_hat.size() - 2, 0); }
    Eigen::VectorXd mode_shape() const { return lambda_hat.tail(channels()); }
};

/// Hyper Gaussian over the dynamical parameters: ψ = {μ_λ, Σ_λλ}.
struct HyperParams {
    VectorXd mu;
    MatrixXd cov;

    HyperParams() = default;
    HyperParams(VectorXd m, MatrixXd c);
    Eigen::Index dim() const { return mu.size(); }
};

}  // namespace oma

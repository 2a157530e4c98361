#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oma/evidence.hpp"
#include "oma/gaussian_algebra.hpp"

namespace oma {

/// Fixed eigenvectors of the hyper covariance; only the eigenvalues stay
/// free. Restores identifiability of Σ_λλ when the dataset count is small.
struct EigenbasisChart {
    MatrixXd basis;        // orthonormal columns, descending eigenvalue order
    VectorXd eigenvalues;  // ≥ 0

    EigenbasisChart(MatrixXd b, VectorXd d);
    Eigen::Index dim() const { return eigenvalues.size(); }
    MatrixXd covariance() const {
        return symmetrize(basis * eigenvalues.asDiagonal() * basis.transpose());
    }
};

/// Free directions of the hyper covariance as symmetric basis matrices:
/// either the packed upper triangle of a full symmetric matrix (off-diagonal
/// entries tied pairwise, hence the built-in factor 2) or the rank-one
/// eigendirections of a chart.
class SigmaBasis {
public:
    static SigmaBasis packed_triangle(Eigen::Index dim);
    static SigmaBasis chart(const EigenbasisChart& chart);

    Eigen::Index matrix_dim() const { return dim_; }
    Eigen::Index count() const { return static_cast<Eigen::Index>(directions_.size()); }
    const MatrixXd& direction(Eigen::Index a) const {
        return directions_[static_cast<std::size_t>(a)];
    }
    bool is_chart() const { return chart_mode_; }

    /// Coordinates of a symmetric matrix in this basis (packed-triangle
    /// entries, or eigenvalue loadings l_jᵀΣl_j for a chart).
    VectorXd coordinates_of(const MatrixXd& sigma) const;
    MatrixXd matrix_of(const VectorXd& coords) const;
    std::string label(Eigen::Index a) const;

private:
    Eigen::Index dim_ = 0;
    bool chart_mode_ = false;
    std::vector<MatrixXd> directions_;
    std::vector<std::string> labels_;
};

/// Per-coordinate uniform prior box over the packed hyper parameterization.
struct PriorBox {
    VectorXd lo, hi;

    PriorBox() = default;
    PriorBox(VectorXd l, VectorXd h);
    Eigen::Index dim() const { return lo.size(); }
    bool contains(const VectorXd& x) const {
        return (x.array() > lo.array()).all() && (x.array() < hi.array()).all();
    }
};

/// Resolve the sign ambiguity of identified mode shapes against the first
/// dataset's shape; covariances transform congruently by the diagonal ±1
/// flip. Throws when shapes are near-orthogonal (|φ̂ᵀφ̂_ref| < 0.2 — probable
/// mode mismatch).
std::vector<DatasetEvidence> align_mode_signs(std::vector<DatasetEvidence> evidences);

/// Negative log marginal hyper-posterior (constant dropped):
/// L(μ,Σ) = ½Σ_s ln|Σ+Σ̂_s| + ½Σ_s (μ−λ̂_s)ᵀ(Σ+Σ̂_s)⁻¹(μ−λ̂_s).
/// With a box given, +∞ outside it (uniform hyper-prior); the box covers
/// [μ; σ-coordinates] in `basis` order.
double hyper_nll(const HyperParams& psi, const std::vector<DatasetEvidence>& evidences,
                 const PriorBox* box = nullptr, const SigmaBasis* basis = nullptr);

struct HyperGradient {
    VectorXd mu;     // Σ_s A_s⁻¹(μ−λ̂_s)
    MatrixXd sigma;  // ½Σ_s [A_s⁻¹ − A_s⁻¹(μ−λ̂_s)(μ−λ̂_s)ᵀA_s⁻¹]
};

HyperGradient hyper_gradient(const HyperParams& psi,
                             const std::vector<DatasetEvidence>& evidences);

/// Project the matrix gradient to basis coordinates: tr(G·E_α).
VectorXd pack_gradient(const HyperGradient& grad, const SigmaBasis& basis);

/// Hessian of the hyper NLL over the packed vector [μ; σ-coordinates].
MatrixXd hyper_hessian(const HyperParams& psi, const std::vector<DatasetEvidence>& evidences,
                       const SigmaBasis& basis);
MatrixXd hyper_hessian(const HyperParams& psi, const std::vector<DatasetEvidence>& evidences);

/// Moment-matching start: ensemble mean and excess scatter
/// Σ̄ = scatter − mean(Σ̂_s), negative eigenvalues clipped to zero.
HyperParams initial_hyper(const std::vector<DatasetEvidence>& evidences);

/// Eigendecomposition of Σ̄ with descending eigenvalues, signs fixed so each
/// column's largest-magnitude entry is positive.
EigenbasisChart eigenbasis_reduce(const MatrixXd& sigma_bar);

struct MuUpdate {
    VectorXd mu;                    // Σ_s Λ_s λ̂_s
    std::vector<MatrixXd> weights;  // Λ_s; sums to the identity
    double precision_scale = 0.0;   // ‖Σ_s(Σ+Σ̂_s)⁻¹‖∞ — conditioning indicator
};

/// Closed-form stationary μ given Σ (the weighting-matrix update).
MuUpdate weighted_mu_update(const std::vector<DatasetEvidence>& evidences,
                            const MatrixXd& sigma);

struct StationarityCheck {
    VectorXd residual;         // Σ_s(Σ+Σ̂_s)⁻¹(μ−λ̂_s) in extended precision
    double error_bound = 0.0;  // forward-error estimate Σ_s eps·cond(A_s)·‖w_s‖
};

/// The μ-gradient as used for the MAP stationarity contract, with the
/// precision floor its measurement cannot go below (constraint null
/// directions drive per-dataset condition numbers towards ~1e8).
StationarityCheck stationarity_check(const std::vector<DatasetEvidence>& evidences,
                                     const HyperParams& psi);

struct MapOptions {
    bool use_chart = true;  // ignored when an explicit chart is passed
    int max_outer_iterations = 1000;
    double objective_tol = 1e-10;
    double step_tol = 1e-8;
    double grad_mu_tol = 1e-6;
    const PriorBox* mu_box = nullptr;  // over μ only; violations clamp + flag
};

struct MapResult {
    HyperParams psi;
    bool converged = false;
    int iterations = 0;
    bool at_zero_boundary = false;  // every variance direction clamped at 0
    std::vector<Eigen::Index> clamped_coordinates;
    std::optional<EigenbasisChart> chart;  // engaged chart (final eigenvalues)
    double final_nll = 0.0;
    double grad_mu_norm = 0.0;
    /// Stationarity tolerance actually enforced: the configured grad_mu_tol,
    /// raised to the extended-precision measurement floor when constraint
    /// null directions drive the summed precision towards ~1e13.
    double grad_mu_tolerance = 0.0;
    bool mu_box_clamped = false;
};

/// MAP of the hyper parameters: alternate the exact μ update with projected
/// damped-Newton steps on the covariance coordinates (chart eigenvalues ≥ 0,
/// or the full packed triangle projected onto the PSD cone).
MapResult map_estimate(const std::vector<DatasetEvidence>& evidences,
                       const std::optional<EigenbasisChart>& chart = std::nullopt,
                       const MapOptions& options = {});

/// Fused posterior of dataset r's dynamical parameters (gain-matrix form):
/// N(λ̂_r + K̂(μ̂−λ̂_r), Σ̂_r − K̂Σ̂_r), K̂ = Σ̂_r(Σ̂_r+Σ̂_λλ)⁻¹.
Gaussian dataset_conditional(std::size_t r, const std::vector<DatasetEvidence>& evidences,
                             const HyperParams& psi_hat);

struct PredictiveResult {
    Gaussian dist;
    bool degenerate = false;  // zero hyper covariance: point mass at μ̂
};

/// Posterior predictive for an unobserved operating condition: N(μ̂_λ, Σ̂_λλ).
PredictiveResult predictive(const HyperParams& psi_hat);

struct HyperPosteriorLaplace {
    VectorXd psi_hat;  // [μ; active σ-coordinates]
    MatrixXd cov;      // inverse Hessian over the same packing
    bool positive_definite = true;
    VectorXd offending_direction;  // populated when the Hessian is indefinite
    std::vector<Eigen::Index> boundary_coordinates;  // σ-coords held at 0, excluded
    std::vector<std::string> labels;

    VectorXd standard_deviations() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Gaussian approximation of the hyper posterior at the MAP: covariance =
/// inverse Hessian in the active parameterization. An indefinite Hessian is
/// returned flagged with its offending eigen-direction — the validity check
/// for the asymptotic approximation.
HyperPosteriorLaplace hyper_laplace(const HyperParams& psi_hat,
                                    const std::vector<DatasetEvidence>& evidences,
                                    const SigmaBasis& basis,
                                    const std::vector<Eigen::Index>& boundary_coordinates = {});
HyperPosteriorLaplace hyper_laplace(const HyperParams& psi_hat,
                                    const std::vector<DatasetEvidence>& evidences);

}  // namespace oma

#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "oma/evidence.hpp"
#include "oma/gaussian_algebra.hpp"
#include "oma/spectral.hpp"

namespace oma {

/// Single-mode model parameters θ = (f, ξ, φ, S, Se). The mode shape is kept
/// at unit Euclidean norm; f, ξ, S, Se are strictly positive.
struct ModalParams {
    double f;      // natural frequency [Hz]
    double xi;     // damping ratio
    VectorXd phi;  // mode shape, ‖φ‖ = 1
    double S;      // modal-force PSD
    double Se;     // prediction-error PSD

    ModalParams(double f_, double xi_, VectorXd phi_, double S_, double Se_);

    /// Convenience factory that normalizes the shape before validating.
    static ModalParams with_normalized_shape(double f, double xi, VectorXd phi, double S,
                                             double Se);

    Eigen::Index channels() const { return phi.size(); }

    /// Packed (f, ξ, φ₁…φ_n, S, Se) — the ordering used by the Laplace
    /// covariance and the evidence split.
    VectorXd packed() const;
};

/// Gaussian posterior approximation at the MPV: N(θ | θ̂, Σ̂_θθ) with the
/// covariance over (f, ξ, φ₁…φ_n, S, Se). The φ-block is rank-deficient along
/// φ̂ (unit-norm constraint).
struct LaplacePosterior {
    ModalParams theta_hat;
    MatrixXd cov;  // (n+4)×(n+4)
};

/// Frequency response function h = (2πi f_k)^(−q) / (1 − β² − 2ξβi), β = f_k/f.
std::complex<double> frf(double f_k, double f, double xi, int response_order);

/// Dynamic amplification D_k = h·h*.
double dynamic_amplification(double f_k, double f, double xi, int response_order);

/// Theoretical PSD matrix E_k = S·D_k·φφᵀ + Se·I (symmetric positive definite).
MatrixXd psd_model(const ModalParams& theta, double f_k, int response_order = 0);

/// Negative log posterior over the band (uniform prior, constant dropped):
/// L(θ) = nN_f lnπ + Σ_k ln|E_k| + Σ_k F̂*_k E_k⁻¹ F̂_k, evaluated through the
/// rank-one fast form of the determinant and inverse.
double nll(const ModalParams& theta, const std::vector<FftLine>& band_lines,
           int response_order = 0);

/// Same objective via explicit determinants and solves; the independent
/// algebraic route the fast form is checked against.
double nll_direct(const ModalParams& theta, const std::vector<FftLine>& band_lines,
                  int response_order = 0);

struct MpvOptions {
    int max_iterations = 500;
    double objective_tol = 1e-10;  // relative decrease
    double gradient_tol = 1e-6;    // norm in the reduced chart coordinates
};

struct MpvResult {
    ModalParams theta;
    int iterations = 0;
    bool converged = false;
    double final_nll = 0.0;
};

/// Most probable value: local minimizer of the band NLL with ‖φ‖ = 1
/// maintained through a tangent-space chart (φ = normalize(φ₀ + T·u)) and
/// log-parameterized positive coordinates. A non-converged run returns the
/// best point with `converged = false`.
MpvResult mpv(const std::vector<FftLine>& band_lines, const ModalParams& init,
              int response_order = 0, const MpvOptions& options = {});

/// Thrown by `laplace` when the reduced-space Hessian is not positive
/// definite; carries the offending direction mapped to parameter labels.
struct UnidentifiableBandError : std::runtime_error {
    UnidentifiableBandError(std::string msg, VectorXd dir)
        : std::runtime_error(std::move(msg)), direction(std::move(dir)) {}
    VectorXd direction;  // over (f, ξ, φ₁…φ_n, S, Se)
};

/// Laplace posterior at the MPV: inverse Hessian in the reduced chart mapped
/// back to the full (n+4)-space (delta method for the log coordinates, chart
/// basis for φ).
LaplacePosterior laplace(const ModalParams& theta_hat, const std::vector<FftLine>& band_lines,
                         int response_order = 0);

/// The curvature-rescaled reduced objective behind `mpv`/`laplace`, exposed
/// so the Hessian can be cross-checked against independent finite
/// differences. `value` maps scaled chart coordinates v (0 at θ̂) to the band
/// NLL; `theta_jacobian` is ∂θ/∂v at v = 0.
struct ReducedObjective {
    std::function<double(const VectorXd&)> value;
    std::function<ModalParams(const VectorXd&)> decode;
    VectorXd scales;
    MatrixXd theta_jacobian;
    Eigen::Index dim() const { return scales.size(); }
};
ReducedObjective reduced_objective(const ModalParams& theta_hat,
                                   const std::vector<FftLine>& band_lines,
                                   int response_order = 0);

/// Data-driven starting point: peak of the smoothed singular-value spectrum
/// for f₀/φ₀, half-power bandwidth for ξ₀, band noise floor for Se₀.
ModalParams initial_guess(const std::vector<FftLine>& band_lines, int response_order = 0);

struct SplitEvidence {
    DatasetEvidence dynamic;  // λ = (f, ξ, φ) block
    Gaussian noise;           // η = (S, Se) block
};

/// Partition the Laplace posterior into the dynamical-parameter evidence and
/// the nuisance (S, Se) block (block selection marginalizes the rest under a
/// uniform prior).
SplitEvidence split_evidence(const LaplacePosterior& lp, std::string dataset_id = "");

}  // namespace oma

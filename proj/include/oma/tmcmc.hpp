#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "oma/hierarchical.hpp"

namespace oma {

/// Sampling parameterization of ψ: μ followed by either chart eigenvalues or
/// (σ_pp, ρ_pq) with the covariance rebuilt through the analytic Cholesky.
/// Keeps every covariance sample symmetric PSD by construction.
class HyperParameterization {
public:
    /// μ (d) + eigenvalues (d) over a fixed eigenbasis.
    static HyperParameterization chart(EigenbasisChart chart);
    /// μ (d) + σ (d) + ρ (d(d−1)/2, row-major strict lower triangle).
    static HyperParameterization correlation(Eigen::Index dim);

    Eigen::Index dim() const { return dim_; }                 // dimension of λ
    Eigen::Index parameter_count() const { return count_; }   // sampling coordinates
    bool is_chart() const { return chart_.has_value(); }
    const EigenbasisChart& chart_basis() const { return *chart_; }

    /// Throws std::runtime_error when the coordinates imply a non-PD
    /// correlation matrix (callers treat that as zero density).
    HyperParams decode(const VectorXd& x) const;
    VectorXd encode(const HyperParams& psi) const;
    std::string label(Eigen::Index i) const;

private:
    Eigen::Index dim_ = 0;
    Eigen::Index count_ = 0;
    std::optional<EigenbasisChart> chart_;
};

/// Conventional prior box: μ_f ∈ (0, f_max), μ_ξ ∈ (0, 0.1),
/// μ_φ ∈ (−1, 1); chart eigenvalues ∈ (0, 0.1); correlation mode gets
/// σ ∈ (0, √0.1) and ρ ∈ (−1, 1).
PriorBox default_prior_box(const HyperParameterization& param, double f_max);

struct HyperSampleSet {
    std::vector<VectorXd> samples;          // packed sampling coordinates
    std::vector<double> log_target_values;  // −hyper_nll at each sample
    std::vector<double> stage_exponents;    // 0 = prior … 1 = posterior
    std::uint64_t rng_seed = 0;
    HyperParameterization parameterization = HyperParameterization::correlation(1);

    std::size_t size() const { return samples.size(); }
    HyperParams decode(std::size_t m) const { return parameterization.decode(samples[m]); }
};

struct TmcmcOptions {
    int sample_count = 2000;      // N_s per stage
    double proposal_scale = 0.2;  // β
    double target_weight_cov = 1.0;
    /// Metropolis steps walked per emitted sample. Sharp hyper posteriors
    /// occupy a vanishing fraction of the prior box; shallow chains leave the
    /// population stranded in metastable modes.
    int mh_steps_per_sample = 60;
    int max_stages = 100;
};

/// Transitional MCMC over the marginal hyper posterior restricted to the
/// prior box: staged tempering with exponent steps keeping the incremental
/// weight CoV near 1, multinomial resampling, and per-chain Metropolis moves
/// with proposal covariance β²·(weighted sample covariance). Chains draw from
/// substreams of (seed, stage, chain), so any execution order reproduces the
/// same samples.
HyperSampleSet sample_hyper(const std::vector<DatasetEvidence>& evidences,
                            const PriorBox& prior_box, const HyperParameterization& param,
                            std::uint64_t seed, const TmcmcOptions& options = {});

struct GaussianMixture {
    std::vector<Gaussian> components;  // uniform weights 1/N_s

    double weight() const { return 1.0 / static_cast<double>(components.size()); }
};

struct MixtureMoments {
    GaussianMixture mixture;
    VectorXd mean;
    MatrixXd cov;
};

/// Mixture over the per-sample dataset-conditional Gaussians, with the exact
/// law-of-total-moments mean and covariance.
MixtureMoments mixture_conditional(const HyperSampleSet& sample_set,
                                   const DatasetEvidence& evidence_r);

/// Mixture over the sampled hyper Gaussians themselves (the predictive).
MixtureMoments mixture_predictive(const HyperSampleSet& sample_set);

/// Log density of one (μ_p, σ²_p) pair under the product of per-dataset
/// scalar evidences — the fast path available when every evidence covariance
/// is diagonal. Throws unless all off-diagonals are < 1e-12·trace.
std::function<double(double, double)> diagonal_pairwise_target(
    const std::vector<DatasetEvidence>& evidences, Eigen::Index p,
    std::pair<double, double> mu_bounds, std::pair<double, double> var_bounds);

}  // namespace oma

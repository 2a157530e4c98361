#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "oma/evidence.hpp"
#include "oma/modal_likelihood.hpp"
#include "oma/rng.hpp"
#include "oma/spectral.hpp"

namespace oma {

/// Generative scenario: a known hyper distribution over λ = (f, ξ, φ) plus
/// per-dataset nuisance ranges. The ground-truth oracle for recovery and
/// calibration tests.
struct SynthScenario {
    HyperParams true_hyper;  // over (f, ξ, φ₁…φ_n)
    int channels = 1;
    Eigen::Index samples_per_record = 1024;  // N
    double dt = 0.01;
    std::pair<double, double> S_range{1.0, 1.0};
    std::pair<double, double> Se_range{1e-3, 1e-3};
    int dataset_count = 1;  // N_D
    int response_order = 0;
    std::uint64_t seed = 0;

    SynthScenario(HyperParams hyper, int n, Eigen::Index n_samples, double dt_,
                  std::pair<double, double> s_range, std::pair<double, double> se_range,
                  int n_datasets, int q, std::uint64_t seed_);
};

/// One realization λ_s ~ N(μ_λ, Σ_λλ) with the shape renormalized to unit
/// length and S_s, Se_s drawn uniform from their ranges. Deterministic per
/// (scenario.seed, s); re-draws up to 100 times if f or ξ comes out
/// non-positive, then gives up (scenario badly specified).
ModalParams draw_dataset_params(const SynthScenario& scenario, int s);

/// Exact frequency-domain draws from the likelihood model: at each grid
/// frequency, F̂_k = M·(z₁ + i z₂) with M·Mᵀ = E_k(θ)/2, z ~ N(0, I).
/// S and Se may be zero here (degenerate spectra are valid draws).
std::vector<FftLine> generate_fft_lines(double f, double xi, const VectorXd& phi, double S,
                                        double Se, const FrequencyBand& band, int grid_size,
                                        int response_order, Rng& rng);
std::vector<FftLine> generate_fft_band(const ModalParams& theta, const FrequencyBand& band,
                                       int grid_size, int response_order, Rng& rng);

/// Time-domain path: SDOF oscillator (f, ξ) driven by white noise of PSD S,
/// propagated by the exact discrete-time state transition, distributed to
/// channels by φ, plus white measurement noise of PSD Se. Rougher than the
/// frequency-domain path — it carries genuine discretization/model error.
TimeHistory generate_time_history(const ModalParams& theta, const SynthScenario& scenario,
                                  int s = 0);
TimeHistory generate_time_history_values(double f, double xi, const VectorXd& phi, double S,
                                         double Se, Eigen::Index n_samples, double dt,
                                         int response_order, Rng& rng);

}  // namespace oma

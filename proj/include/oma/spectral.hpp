#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "oma/linalg.hpp"

namespace oma {

/// Multi-channel sampled vibration record (one dataset).
struct TimeHistory {
    Eigen::MatrixXd samples;  // channels × time steps
    double dt = 0.0;          // sampling interval [s]
    int response_order = 0;   // q: 0 acceleration, 1 velocity, 2 displacement

    TimeHistory() = default;
    TimeHistory(Eigen::MatrixXd s, double dt_, int q);
    Eigen::Index channels() const { return samples.rows(); }
    Eigen::Index steps() const { return samples.cols(); }
    double nyquist() const { return 0.5 / dt; }
};

/// One scaled-FFT line: frequency and the complex response per channel.
struct FftLine {
    double freq = 0.0;  // Hz
    Eigen::VectorXcd values;
};

struct FrequencyBand {
    double f_lb = 0.0;
    double f_ub = 0.0;

    FrequencyBand(double lb, double ub);
    bool contains(double f) const { return f >= f_lb && f <= f_ub; }
};

/// Scaled FFT: F̂_k = √(Δt/N) Σ_j ŷ_j e^(−2πi jk/N)
/// at f_k = k/(NΔt), for k = 1 … int[N/2]−1 (DC and Nyquist excluded).
/// `remove_mean` subtracts the per-channel mean first; default off — the raw
/// DFT is what the likelihood model describes.
std::vector<FftLine> scaled_fft(const TimeHistory& th, bool remove_mean = false);

/// All lines with f_lb ≤ f_k ≤ f_ub (both endpoints inclusive), order
/// preserved. Throws if the band selects no bins.
std::vector<FftLine> band_select(const std::vector<FftLine>& lines, const FrequencyBand& band);

struct SingularValueSpectrum {
    std::vector<double> freqs;
    Eigen::MatrixXd values;  // bins × channels, descending within each row
};

/// Per-frequency singular values of the sample PSD matrix averaged across
/// datasets, (1/N_D)·Σ_s F̂_{k,s} F̂*_{k,s}. Records are truncated to the
/// shortest length; channel counts and dt must agree.
SingularValueSpectrum singular_value_spectrum(const std::vector<TimeHistory>& datasets);

}  // namespace oma

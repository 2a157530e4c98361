#include "oma/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <stdexcept>

namespace oma {

TimeHistory::TimeHistory(Eigen::MatrixXd s, double dt_, int q)
    : samples(std::move(s)), dt(dt_), response_order(q) {
    if (dt <= 0.0) throw std::invalid_argument("TimeHistory: dt must be > 0");
    if (samples.rows() < 1 || samples.cols() < 2)
        throw std::invalid_argument("TimeHistory: need >= 1 channel and >= 2 samples");
    if (q < 0 || q > 2) throw std::invalid_argument("TimeHistory: response order must be 0, 1 or 2");
    if (!samples.allFinite()) throw std::invalid_argument("TimeHistory: non-finite samples");
}

FrequencyBand::FrequencyBand(double lb, double ub) : f_lb(lb), f_ub(ub) {
    if (!(lb > 0.0) || !(ub > lb))
        throw std::invalid_argument("FrequencyBand: need 0 < f_lb < f_ub");
}

std::vector<FftLine> scaled_fft(const TimeHistory& th, bool remove_mean) {
    const Eigen::Index n = th.channels();
    const Eigen::Index steps = th.steps();
    const Eigen::Index half = steps / 2;  // lines k = 1 … half−1
    if (half < 2) throw std::invalid_argument("scaled_fft: record too short");

    const double scale = std::sqrt(th.dt / static_cast<double>(steps));
    std::vector<FftLine> lines(static_cast<std::size_t>(half - 1));
    for (auto& line : lines) line.values.resize(n);

    Eigen::FFT<double> fft;
    std::vector<double> channel(static_cast<std::size_t>(steps));
    std::vector<std::complex<double>> spectrum;
    for (Eigen::Index c = 0; c < n; ++c) {
        const double mean = remove_mean ? th.samples.row(c).mean() : 0.0;
        for (Eigen::Index j = 0; j < steps; ++j)
            channel[static_cast<std::size_t>(j)] = th.samples(c, j) - mean;
        fft.fwd(spectrum, channel);
        for (Eigen::Index k = 1; k < half; ++k)
            lines[static_cast<std::size_t>(k - 1)].values[c] =
                scale * spectrum[static_cast<std::size_t>(k)];
    }
    const double df = 1.0 / (static_cast<double>(steps) * th.dt);
    for (Eigen::Index k = 1; k < half; ++k)
        lines[static_cast<std::size_t>(k - 1)].freq = static_cast<double>(k) * df;
    return lines;
}

std::vector<FftLine> band_select(const std::vector<FftLine>& lines, const FrequencyBand& band) {
    std::vector<FftLine> out;
    for (const auto& line : lines)
        if (band.contains(line.freq)) out.push_back(line);
    if (out.empty())
        throw std::runtime_error("band_select: band contains no FFT bins for this record length");
    return out;
}

SingularValueSpectrum singular_value_spectrum(const std::vector<TimeHistory>& datasets) {
    if (datasets.empty()) throw std::invalid_argument("singular_value_spectrum: no datasets");
    const Eigen::Index n = datasets.front().channels();
    const double dt = datasets.front().dt;
    Eigen::Index steps = datasets.front().steps();
    for (const auto& d : datasets) {
        if (d.channels() != n)
            throw std::invalid_argument("singular_value_spectrum: heterogeneous channel counts");
        if (d.dt != dt)
            throw std::invalid_argument("singular_value_spectrum: heterogeneous sampling rates");
        steps = std::min(steps, d.steps());
    }

    std::vector<std::vector<FftLine>> spectra;
    spectra.reserve(datasets.size());
    for (const auto& d : datasets) {
        TimeHistory trimmed = d;
        trimmed.samples = d.samples.leftCols(steps).eval();
        spectra.push_back(scaled_fft(trimmed));
    }

    const std::size_t bins = spectra.front().size();
    SingularValueSpectrum out;
    out.freqs.resize(bins);
    out.values.resize(static_cast<Eigen::Index>(bins), n);
    const double inv_nd = 1.0 / static_cast<double>(datasets.size());
    Eigen::MatrixXcd psd(n, n);
    for (std::size_t k = 0; k < bins; ++k) {
        psd.setZero();
        for (const auto& sp : spectra) psd += sp[k].values * sp[k].values.adjoint();
        psd *= inv_nd;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(psd, Eigen::EigenvaluesOnly);
        out.freqs[k] = spectra.front()[k].freq;
        out.values.row(static_cast<Eigen::Index>(k)) =
            es.eigenvalues().reverse().cwiseMax(0.0).transpose();
    }
    return out;
}

}  // namespace oma

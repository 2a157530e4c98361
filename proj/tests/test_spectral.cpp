#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oma/spectral.hpp"
#include "oma/synth.hpp"
#include "test_helpers.hpp"

using namespace oma;
using namespace oma::testing;

TEST_CASE("scaled_fft: zero signal gives zero lines") {
    const TimeHistory th(Eigen::MatrixXd::Zero(2, 256), 0.01, 0);
    for (const auto& line : scaled_fft(th)) CHECK(line.values.norm() == 0.0);
}

TEST_CASE("scaled_fft: on-bin cosine concentrates in a single line") {
    const Eigen::Index n_steps = 1024;
    const double dt = 0.01;
    const int bin = 100;
    const double f0 = bin / (static_cast<double>(n_steps) * dt);
    Eigen::MatrixXd samples(1, n_steps);
    for (Eigen::Index j = 0; j < n_steps; ++j)
        samples(0, j) = std::cos(2.0 * std::numbers::pi * f0 * (static_cast<double>(j) * dt));
    const auto lines = scaled_fft(TimeHistory(samples, dt, 0));

    const double want = std::sqrt(dt * static_cast<double>(n_steps)) / 2.0;  // √(ΔtN)/2
    CHECK(want == doctest::Approx(1.6));
    for (const auto& line : lines) {
        const double mag = line.values.norm();
        if (std::abs(line.freq - f0) < 1e-9)
            CHECK(rel_err(mag, want) < 1e-12);
        else
            CHECK(mag < 1e-10);
    }
}

TEST_CASE("scaled_fft: one-sided Parseval on zero-mean noise") {
    Rng rng(5);
    const Eigen::Index n_steps = 4096;
    const double dt = 0.02;
    Eigen::MatrixXd samples(1, n_steps);
    for (Eigen::Index j = 0; j < n_steps; ++j) samples(0, j) = rng.normal();
    samples.row(0).array() -= samples.row(0).mean();

    double spectral = 0.0;
    for (const auto& line : scaled_fft(TimeHistory(samples, dt, 0)))
        spectral += line.values.squaredNorm();
    const double temporal = dt * samples.row(0).squaredNorm() / 2.0;
    CHECK(rel_err(spectral, temporal) < 0.01);
}

TEST_CASE("scaled_fft is linear") {
    Rng rng(6);
    const Eigen::Index n_steps = 512;
    Eigen::MatrixXd x(1, n_steps), y(1, n_steps);
    for (Eigen::Index j = 0; j < n_steps; ++j) {
        x(0, j) = rng.normal();
        y(0, j) = rng.normal();
    }
    const double a = 1.7, b = -0.4;
    const auto fx = scaled_fft(TimeHistory(x, 0.01, 0));
    const auto fy = scaled_fft(TimeHistory(y, 0.01, 0));
    const auto fz = scaled_fft(TimeHistory(a * x + b * y, 0.01, 0));
    for (std::size_t k = 0; k < fz.size(); ++k) {
        const Eigen::VectorXcd combo = a * fx[k].values + b * fy[k].values;
        CHECK((fz[k].values - combo).norm() < 1e-12 * (1.0 + combo.norm()));
    }
}

TEST_CASE("band_select: reference band bin count matches the integer-count oracle") {
    Eigen::MatrixXd samples = Eigen::MatrixXd::Zero(1, 12000);
    samples(0, 0) = 1.0;  // impulse: every bin populated
    const auto lines = scaled_fft(TimeHistory(samples, 0.005, 0));
    const auto band = band_select(lines, FrequencyBand(3.2, 5.2));

    // bin spacing 1/60 Hz: count integers k with 3.2 ≤ k/60 ≤ 5.2 (both
    // endpoints land on bins and are inclusive, so k = 192 … 312)
    std::size_t expected = 0;
    for (int k = 1; k < 6000; ++k) {
        const double f = static_cast<double>(k) / 60.0;
        if (f >= 3.2 && f <= 5.2) ++expected;
    }
    CHECK(expected == 121);
    CHECK(band.size() == expected);
    for (const auto& line : band) {
        CHECK(line.freq >= 3.2);
        CHECK(line.freq <= 5.2);
    }
}

TEST_CASE("band_select: empty selection throws, full band preserves, idempotent") {
    Eigen::MatrixXd samples = Eigen::MatrixXd::Zero(1, 256);
    samples(0, 3) = 1.0;
    const auto lines = scaled_fft(TimeHistory(samples, 0.01, 0));  // Nyquist 50 Hz
    CHECK_THROWS_AS(band_select(lines, FrequencyBand(60.0, 70.0)), std::runtime_error);

    const FrequencyBand full(lines.front().freq, lines.back().freq);
    const auto all = band_select(lines, full);
    CHECK(all.size() == lines.size());
    const auto again = band_select(all, full);
    CHECK(again.size() == all.size());
}

TEST_CASE("singular_value_spectrum: single channel reduces to the periodogram") {
    Rng rng(9);
    Eigen::MatrixXd samples(1, 512);
    for (Eigen::Index j = 0; j < 512; ++j) samples(0, j) = rng.normal();
    const TimeHistory th(samples, 0.01, 0);
    const auto spectrum = singular_value_spectrum({th});
    const auto lines = scaled_fft(th);
    REQUIRE(spectrum.freqs.size() == lines.size());
    for (std::size_t k = 0; k < lines.size(); ++k)
        CHECK(rel_err(spectrum.values(static_cast<Eigen::Index>(k), 0),
                      lines[k].values.squaredNorm()) < 1e-12);
}

TEST_CASE("singular_value_spectrum: single-mode data peaks at the modal bin") {
    Eigen::VectorXd phi(3);
    phi << 0.37, 0.616, 0.696;
    const HyperParams hyper((Eigen::VectorXd(5) << 4.2, 0.03, phi).finished(),
                            Eigen::MatrixXd::Zero(5, 5));
    const SynthScenario scenario(hyper, 3, 6000, 0.005, {1.0, 1.0}, {1e-4, 1e-4}, 4, 0, 99);
    std::vector<TimeHistory> records;
    for (int s = 0; s < scenario.dataset_count; ++s)
        records.push_back(generate_time_history(draw_dataset_params(scenario, s), scenario, s));
    const auto spectrum = singular_value_spectrum(records);

    Eigen::Index peak;
    spectrum.values.col(0).maxCoeff(&peak);
    CHECK(std::abs(spectrum.freqs[static_cast<std::size_t>(peak)] - 4.2) < 0.15);
    CHECK(spectrum.values(peak, 0) / spectrum.values(peak, 1) > 10.0);
    // real, non-negative, descending per bin
    for (Eigen::Index k = 0; k < spectrum.values.rows(); ++k) {
        CHECK(spectrum.values(k, 2) >= 0.0);
        CHECK(spectrum.values(k, 0) >= spectrum.values(k, 1));
        CHECK(spectrum.values(k, 1) >= spectrum.values(k, 2));
    }
}

TEST_CASE("singular_value_spectrum: input validation") {
    CHECK_THROWS_AS(singular_value_spectrum({}), std::invalid_argument);
    const TimeHistory a(Eigen::MatrixXd::Zero(1, 64), 0.01, 0);
    const TimeHistory b(Eigen::MatrixXd::Zero(2, 64), 0.01, 0);
    CHECK_THROWS_AS(singular_value_spectrum({a, b}), std::invalid_argument);
}

TEST_CASE("TimeHistory validates inputs") {
    CHECK_THROWS_AS(TimeHistory(Eigen::MatrixXd::Zero(1, 4), -0.1, 0), std::invalid_argument);
    CHECK_THROWS_AS(TimeHistory(Eigen::MatrixXd::Zero(1, 1), 0.1, 0), std::invalid_argument);
    Eigen::MatrixXd nan_mat = Eigen::MatrixXd::Zero(1, 4);
    nan_mat(0, 2) = std::nan("");
    CHECK_THROWS_AS(TimeHistory(nan_mat, 0.1, 0), std::invalid_argument);
}

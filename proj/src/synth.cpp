#include "oma/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oma {

namespace {
constexpr double kPi = std::numbers::pi;

Eigen::Matrix2d sdof_transition(double omega, double xi, double tau) {
    const double omega_d = omega * std::sqrt(1.0 - xi * xi);
    const double decay = std::exp(-xi * omega * tau);
    const double c = std::cos(omega_d * tau);
    const double s = std::sin(omega_d * tau);
    Eigen::Matrix2d phi;
    phi(0, 0) = decay * (c + xi * omega / omega_d * s);
    phi(0, 1) = decay * s / omega_d;
    phi(1, 0) = -decay * omega * omega / omega_d * s;
    phi(1, 1) = decay * (c - xi * omega / omega_d * s);
    return phi;
}
}  // namespace

SynthScenario::SynthScenario(HyperParams hyper, int n, Eigen::Index n_samples, double dt_,
                             std::pair<double, double> s_range,
                             std::pair<double, double> se_range, int n_datasets, int q,
                             std::uint64_t seed_)
    : true_hyper(std::move(hyper)),
      channels(n),
      samples_per_record(n_samples),
      dt(dt_),
      S_range(s_range),
      Se_range(se_range),
      dataset_count(n_datasets),
      response_order(q),
      seed(seed_) {
    if (true_hyper.dim() != n + 2)
        throw std::invalid_argument("SynthScenario: hyper dimension must be n+2");
    if (n < 1 || n_samples < 1 || n_datasets < 1)
        throw std::invalid_argument("SynthScenario: counts must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("SynthScenario: dt must be > 0");
    if (!(S_range.first > 0.0) || !(Se_range.first > 0.0) ||
        S_range.second < S_range.first || Se_range.second < Se_range.first)
        throw std::invalid_argument("SynthScenario: nuisance ranges must be positive intervals");
    if (q < 0 || q > 2) throw std::invalid_argument("SynthScenario: q must be 0, 1 or 2");
}

ModalParams draw_dataset_params(const SynthScenario& scenario, int s) {
    Rng rng = Rng::stream(scenario.seed, 0xD5, static_cast<std::uint64_t>(s));
    const Eigen::Index d = scenario.true_hyper.dim();
    const MatrixXd root = psd_sqrt(scenario.true_hyper.cov);
    for (int attempt = 0; attempt < 100; ++attempt) {
        VectorXd z(d);
        for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
        const VectorXd lambda = scenario.true_hyper.mu + root * z;
        const double f = lambda[0];
        const double xi = lambda[1];
        if (!(f > 0.0) || !(xi > 0.0)) continue;
        VectorXd phi = lambda.tail(d - 2);
        if (!(phi.norm() > 0.0)) continue;
        const double s_psd = rng.uniform(scenario.S_range.first, scenario.S_range.second);
        const double se_psd = rng.uniform(scenario.Se_range.first, scenario.Se_range.second);
        return ModalParams::with_normalized_shape(f, xi, std::move(phi), s_psd, se_psd);
    }
    throw std::runtime_error(
        "draw_dataset_params: drew non-positive f or xi 100 times; scenario badly specified");
}

std::vector<FftLine> generate_fft_lines(double f, double xi, const VectorXd& phi, double S,
                                        double Se, const FrequencyBand& band, int grid_size,
                                        int response_order, Rng& rng) {
    if (grid_size < 2) throw std::invalid_argument("generate_fft_lines: need >= 2 grid lines");
    const Eigen::Index n = phi.size();
    std::vector<FftLine> lines(static_cast<std::size_t>(grid_size));
    const double df = (band.f_ub - band.f_lb) / static_cast<double>(grid_size - 1);
    for (int k = 0; k < grid_size; ++k) {
        const double f_k = band.f_lb + df * static_cast<double>(k);
        const double d_k = dynamic_amplification(f_k, f, xi, response_order);
        MatrixXd e = S * d_k * (phi * phi.transpose());
        e.diagonal().array() += Se;
        const MatrixXd root = psd_sqrt(0.5 * e);
        VectorXd z_re(n), z_im(n);
        for (Eigen::Index i = 0; i < n; ++i) z_re[i] = rng.normal();
        for (Eigen::Index i = 0; i < n; ++i) z_im[i] = rng.normal();
        auto& line = lines[static_cast<std::size_t>(k)];
        line.freq = f_k;
        line.values = (root * z_re).cast<std::complex<double>>() +
                      std::complex<double>(0.0, 1.0) * (root * z_im).cast<std::complex<double>>();
    }
    return lines;
}

std::vector<FftLine> generate_fft_band(const ModalParams& theta, const FrequencyBand& band,
                                       int grid_size, int response_order, Rng& rng) {
    return generate_fft_lines(theta.f, theta.xi, theta.phi, theta.S, theta.Se, band, grid_size,
                              response_order, rng);
}

TimeHistory generate_time_history_values(double f, double xi, const VectorXd& phi, double S,
                                         double Se, Eigen::Index n_samples, double dt,
                                         int response_order, Rng& rng) {
    if (!(f > 0.0) || !(xi > 0.0) || !(xi < 1.0) || f >= 0.5 / dt)
        throw std::invalid_argument("generate_time_history: unstable discretization parameters");
    const double omega = 2.0 * kPi * f;
    const Eigen::Matrix2d transition = sdof_transition(omega, xi, dt);

    // Q_d = ∫₀^dt Φ(τ)·B S Bᵀ·Φ(τ)ᵀ dτ, Simpson on the closed-form transition.
    const int intervals = 64;
    Eigen::Matrix2d q_d = Eigen::Matrix2d::Zero();
    const double h = dt / intervals;
    for (int j = 0; j <= intervals; ++j) {
        const Eigen::Matrix2d p = sdof_transition(omega, xi, dt - j * h);
        const Eigen::Vector2d col(p(0, 1), p(1, 1));
        const double weight = (j == 0 || j == intervals) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
        q_d += weight * (col * col.transpose());
    }
    q_d *= S * h / 3.0;
    const Eigen::Matrix2d noise_root = psd_sqrt(q_d);

    // stationary initial state: P = ΦPΦᵀ + Q
    Eigen::Matrix2d stationary = Eigen::Matrix2d::Zero();
    for (int it = 0; it < 4000; ++it) {
        const Eigen::Matrix2d next = transition * stationary * transition.transpose() + q_d;
        if ((next - stationary).norm() <= 1e-15 * (next.norm() + 1e-300)) {
            stationary = next;
            break;
        }
        stationary = next;
    }
    const Eigen::Matrix2d init_root = psd_sqrt(stationary);

    Eigen::Vector2d state = init_root * Eigen::Vector2d(rng.normal(), rng.normal());
    VectorXd scaled_disp(n_samples);
    for (Eigen::Index j = 0; j < n_samples; ++j) {
        scaled_disp[j] = omega * omega * state[0];
        state = transition * state + noise_root * Eigen::Vector2d(rng.normal(), rng.normal());
    }

    // (2πi f)^(−q) factor realized by trapezoid integration in time.
    for (int pass = 0; pass < response_order; ++pass) {
        double acc = 0.0;
        double prev = scaled_disp[0];
        scaled_disp[0] = 0.0;
        for (Eigen::Index j = 1; j < n_samples; ++j) {
            const double cur = scaled_disp[j];
            acc += 0.5 * dt * (prev + cur);
            prev = cur;
            scaled_disp[j] = acc;
        }
    }

    const double noise_sd = std::sqrt(Se / dt);
    Eigen::MatrixXd samples(phi.size(), n_samples);
    for (Eigen::Index j = 0; j < n_samples; ++j) {
        for (Eigen::Index c = 0; c < phi.size(); ++c)
            samples(c, j) = phi[c] * scaled_disp[j] + noise_sd * rng.normal();
    }
    return TimeHistory(std::move(samples), dt, response_order);
}

TimeHistory generate_time_history(const ModalParams& theta, const SynthScenario& scenario,
                                  int s) {
    Rng rng = Rng::stream(scenario.seed, 0x7E, static_cast<std::uint64_t>(s));
    return generate_time_history_values(theta.f, theta.xi, theta.phi, theta.S, theta.Se,
                                        scenario.samples_per_record, scenario.dt,
                                        scenario.response_order, rng);
}

}  // namespace oma

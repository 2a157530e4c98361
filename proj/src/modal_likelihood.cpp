#include "oma/modal_likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "oma/numdiff.hpp"

namespace oma {

namespace {

constexpr double kPi = std::numbers::pi;

// FD steps in the curvature-rescaled chart, sized for the objective's
// evaluation jitter (~eps·|L|): gradients resolve norms well below the 1e-6
// convergence tolerance, Hessians carry ~1e-5 relative error.
constexpr double kGradStep = 1e-4;
constexpr double kHessStep = 1e-3;

/// Tangent-space chart around a reference point: the reduced coordinates are
/// x = (ln f, ln ξ, u₁…u_{n−1}, ln S, ln Se) with φ(u) = (φ₀ + T·u)/‖φ₀ + T·u‖,
/// T an orthonormal basis of φ₀⊥. At u = 0 the chart reproduces the reference.
class ReducedChart {
public:
    explicit ReducedChart(const ModalParams& ref) : phi0_(ref.phi) {
        const Eigen::Index n = ref.channels();
        Eigen::MatrixXd seed(n, 1);
        seed.col(0) = phi0_;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(seed);
        Eigen::MatrixXd q = qr.householderQ();
        tangent_ = q.rightCols(n - 1);
        origin_.resize(dim());
        origin_[0] = std::log(ref.f);
        origin_[1] = std::log(ref.xi);
        origin_.segment(2, n - 1).setZero();
        origin_[dim() - 2] = std::log(ref.S);
        origin_[dim() - 1] = std::log(ref.Se);
    }

    Eigen::Index dim() const { return phi0_.size() + 3; }
    const VectorXd& origin() const { return origin_; }

    ModalParams decode(const VectorXd& x) const {
        const Eigen::Index n = phi0_.size();
        VectorXd phi = phi0_ + tangent_ * x.segment(2, n - 1);
        phi /= phi.norm();
        return ModalParams(std::exp(x[0]), std::exp(x[1]), std::move(phi),
                           std::exp(x[dim() - 2]), std::exp(x[dim() - 1]));
    }

    /// ∂θ/∂x at the chart origin: diag(f, ξ) ⊕ T ⊕ diag(S, Se).
    MatrixXd theta_jacobian(const ModalParams& at) const {
        const Eigen::Index n = phi0_.size();
        MatrixXd jac = MatrixXd::Zero(n + 4, dim());
        jac(0, 0) = at.f;
        jac(1, 1) = at.xi;
        jac.block(2, 2, n, n - 1) = tangent_;
        jac(n + 2, dim() - 2) = at.S;
        jac(n + 3, dim() - 1) = at.Se;
        return jac;
    }

private:
    VectorXd phi0_;
    MatrixXd tangent_;  // n × (n−1)
    VectorXd origin_;
};

/// Per-coordinate curvature scales from central second differences; the
/// optimizer and the Laplace Hessian work in these rescaled coordinates so
/// the pinned tolerances are meaningful across curvatures spanning ~1e7.
VectorXd curvature_scales(const std::function<double(const VectorXd&)>& f, const VectorXd& x) {
    VectorXd scales(x.size());
    const double f0 = f(x);
    VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-4 * std::max(std::abs(x[i]), 1.0);
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        const double curv = (fp - 2.0 * f0 + fm) / (h * h);
        scales[i] = curv > 1e-8 ? 1.0 / std::sqrt(curv) : 1.0;
    }
    return scales;
}

struct BfgsOutcome {
    VectorXd x;
    double value;
    int iterations;
    bool converged;
};

/// Quasi-Newton line-search descent with a divergence guard (steps that fail
/// to decrease the objective are rejected by backtracking).
BfgsOutcome bfgs_minimize(const std::function<double(const VectorXd&)>& f, VectorXd x,
                          double objective_tol, double gradient_tol, int max_iterations) {
    const Eigen::Index n = x.size();
    MatrixXd inv_hess = MatrixXd::Identity(n, n);
    double value = f(x);
    VectorXd grad = fd_gradient(f, x, kGradStep);
    int iter = 0;
    bool converged = grad.norm() < gradient_tol;
    while (!converged && iter < max_iterations) {
        ++iter;
        VectorXd dir = -(inv_hess * grad);
        if (dir.dot(grad) >= 0.0) {  // curvature gone bad: restart steepest
            inv_hess.setIdentity();
            dir = -grad;
        }
        double alpha = 1.0;
        double trial_value = value;
        VectorXd trial = x;
        bool decreased = false;
        for (int ls = 0; ls < 50; ++ls) {
            trial = x + alpha * dir;
            trial_value = f(trial);
            if (std::isfinite(trial_value) &&
                trial_value <= value + 1e-4 * alpha * grad.dot(dir)) {
                decreased = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!decreased) break;

        const VectorXd grad_new = fd_gradient(f, trial, kGradStep);
        const VectorXd s = trial - x;
        const VectorXd y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const MatrixXd eye = MatrixXd::Identity(n, n);
            const MatrixXd v = eye - (s * y.transpose()) / sy;
            inv_hess = v * inv_hess * v.transpose() + (s * s.transpose()) / sy;
        }
        const double rel_drop = (value - trial_value) / std::max(1.0, std::abs(value));
        x = trial;
        value = trial_value;
        grad = grad_new;
        if (rel_drop < objective_tol && grad.norm() < gradient_tol) converged = true;
    }
    return BfgsOutcome{std::move(x), value, iter, converged};
}

void check_band(const std::vector<FftLine>& band_lines, Eigen::Index n) {
    if (band_lines.size() < 1) throw std::invalid_argument("empty frequency band");
    for (const auto& line : band_lines)
        if (line.values.size() != n)
            throw std::invalid_argument("band line channel count mismatch");
}

}  // namespace

ModalParams::ModalParams(double f_, double xi_, VectorXd phi_, double S_, double Se_)
    : f(f_), xi(xi_), phi(std::move(phi_)), S(S_), Se(Se_) {
    if (!(f > 0.0) || !(xi > 0.0) || !(S > 0.0) || !(Se > 0.0))
        throw std::invalid_argument("ModalParams: f, xi, S, Se must be strictly positive");
    if (phi.size() < 1) throw std::invalid_argument("ModalParams: empty mode shape");
    if (std::abs(phi.norm() - 1.0) > 1e-12)
        throw std::invalid_argument("ModalParams: mode shape must have unit norm");
}

ModalParams ModalParams::with_normalized_shape(double f, double xi, VectorXd phi, double S,
                                               double Se) {
    const double norm = phi.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("ModalParams: zero mode shape");
    return ModalParams(f, xi, phi / norm, S, Se);
}

VectorXd ModalParams::packed() const {
    VectorXd out(channels() + 4);
    out[0] = f;
    out[1] = xi;
    out.segment(2, channels()) = phi;
    out[channels() + 2] = S;
    out[channels() + 3] = Se;
    return out;
}

std::complex<double> frf(double f_k, double f, double xi, int response_order) {
    if (!(f > 0.0) || !(f_k > 0.0) || !(xi > 0.0))
        throw std::invalid_argument("frf: f, f_k, xi must be positive");
    const double beta = f_k / f;
    const std::complex<double> den(1.0 - beta * beta, -2.0 * xi * beta);
    std::complex<double> num(1.0, 0.0);
    const std::complex<double> i_omega(0.0, 2.0 * kPi * f_k);
    for (int p = 0; p < response_order; ++p) num /= i_omega;
    return num / den;
}

double dynamic_amplification(double f_k, double f, double xi, int response_order) {
    const double beta = f_k / f;
    const double d = 1.0 / ((1.0 - beta * beta) * (1.0 - beta * beta) +
                            4.0 * xi * xi * beta * beta);
    return response_order == 0 ? d
                               : d * std::pow(2.0 * kPi * f_k, -2.0 * response_order);
}

MatrixXd psd_model(const ModalParams& theta, double f_k, int response_order) {
    const double d_k = dynamic_amplification(f_k, theta.f, theta.xi, response_order);
    MatrixXd e = theta.S * d_k * (theta.phi * theta.phi.transpose());
    e.diagonal().array() += theta.Se;
    return symmetrize(e);
}

double nll(const ModalParams& theta, const std::vector<FftLine>& band_lines,
           int response_order) {
    check_band(band_lines, theta.channels());
    const double n = static_cast<double>(theta.channels());
    double log_dets = 0.0;
    double quads = 0.0;
    for (const auto& line : band_lines) {
        const double sd = theta.S * dynamic_amplification(line.freq, theta.f, theta.xi,
                                                          response_order);
        log_dets += (n - 1.0) * std::log(theta.Se) + std::log(theta.Se + sd);
        // E⁻¹ = P_φ⊥/Se + φφᵀ/(Se+S·D): both quad terms are positive, which
        // keeps the evaluation jitter at eps·|L| instead of eps·SNR·|L|
        const std::complex<double> along = theta.phi.cast<std::complex<double>>().dot(line.values);
        const Eigen::VectorXcd residual =
            line.values - along * theta.phi.cast<std::complex<double>>();
        quads += residual.squaredNorm() / theta.Se + std::norm(along) / (theta.Se + sd);
    }
    return n * static_cast<double>(band_lines.size()) * std::log(kPi) + log_dets + quads;
}

double nll_direct(const ModalParams& theta, const std::vector<FftLine>& band_lines,
                  int response_order) {
    check_band(band_lines, theta.channels());
    const double n = static_cast<double>(theta.channels());
    double total = n * static_cast<double>(band_lines.size()) * std::log(kPi);
    for (const auto& line : band_lines) {
        const MatrixXd e = psd_model(theta, line.freq, response_order);
        Eigen::LLT<MatrixXd> llt(e);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("nll_direct: PSD model not positive definite");
        total += lognormal_det(llt);
        const VectorXd re = line.values.real();
        const VectorXd im = line.values.imag();
        total += re.dot(llt.solve(re)) + im.dot(llt.solve(im));
    }
    return total;
}

MpvResult mpv(const std::vector<FftLine>& band_lines, const ModalParams& init,
              int response_order, const MpvOptions& options) {
    if (band_lines.size() < 10)
        throw std::invalid_argument("mpv: band must contain at least 10 FFT lines");
    check_band(band_lines, init.channels());

    ModalParams theta = init;
    double value = nll(theta, band_lines, response_order);
    double prev_value = std::numeric_limits<double>::infinity();
    int used = 0;
    bool converged = false;
    for (int outer = 0; outer < 24 && used < options.max_iterations; ++outer) {
        const ReducedObjective reduced = reduced_objective(theta, band_lines, response_order);
        VectorXd v = VectorXd::Zero(reduced.dim());

        // convergence is declared only in a freshly-built chart
        const VectorXd g0 = fd_gradient(reduced.value, v, kGradStep);
        if (g0.norm() < options.gradient_tol &&
            prev_value - value < options.objective_tol * std::max(1.0, std::abs(value))) {
            converged = true;
            break;
        }
        prev_value = value;

        auto out = bfgs_minimize(reduced.value, v, options.objective_tol, options.gradient_tol,
                                 options.max_iterations - used);
        used += std::max(out.iterations, 1);
        v = out.x;
        value = out.value;

        // damped-Newton polish: crushes the gradient quadratically once BFGS
        // has stopped making line-search progress
        for (int polish = 0; polish < 3 && used < options.max_iterations; ++polish) {
            const VectorXd g = fd_gradient(reduced.value, v, kGradStep);
            if (g.norm() < options.gradient_tol) break;
            MatrixXd hess = fd_hessian(reduced.value, v, kHessStep);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(hess);
            const double lo = es.eigenvalues().minCoeff();
            if (lo < 1e-8) hess.diagonal().array() += 1e-8 - std::min(lo, 0.0);
            const VectorXd dir = -Eigen::LDLT<MatrixXd>(hess).solve(g);
            double step = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 30; ++ls) {
                const double trial = reduced.value(v + step * dir);
                if (std::isfinite(trial) && trial < value) {
                    v += step * dir;
                    value = trial;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            ++used;
            if (!moved) break;
        }
        theta = reduced.decode(v);
    }
    return MpvResult{theta, used, converged, value};
}

ReducedObjective reduced_objective(const ModalParams& theta_hat,
                                   const std::vector<FftLine>& band_lines,
                                   int response_order) {
    check_band(band_lines, theta_hat.channels());
    auto chart = std::make_shared<ReducedChart>(theta_hat);
    auto objective_x = [chart, band_lines, response_order](const VectorXd& x) {
        return nll(chart->decode(x), band_lines, response_order);
    };
    const VectorXd scales = curvature_scales(objective_x, chart->origin());
    ReducedObjective out;
    out.value = [objective_x, origin = chart->origin(), scales](const VectorXd& v) {
        return objective_x(origin + scales.cwiseProduct(v));
    };
    out.decode = [chart, origin = chart->origin(), scales](const VectorXd& v) {
        return chart->decode(origin + scales.cwiseProduct(v));
    };
    out.scales = scales;
    out.theta_jacobian = chart->theta_jacobian(theta_hat) * scales.asDiagonal();
    return out;
}

LaplacePosterior laplace(const ModalParams& theta_hat,
                         const std::vector<FftLine>& band_lines, int response_order) {
    const ReducedObjective reduced = reduced_objective(theta_hat, band_lines, response_order);
    const MatrixXd hess_v =
        fd_hessian(reduced.value, VectorXd::Zero(reduced.dim()), kHessStep);

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(hess_v);
    if (es.eigenvalues().minCoeff() <= 0.0) {
        Eigen::Index worst;
        es.eigenvalues().minCoeff(&worst);
        const VectorXd dir_theta = reduced.theta_jacobian * es.eigenvectors().col(worst);
        throw UnidentifiableBandError(
            "laplace: reduced Hessian not positive definite (unidentifiable band)",
            dir_theta.normalized());
    }
    const MatrixXd cov_v =
        es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
        es.eigenvectors().transpose();
    return LaplacePosterior{
        theta_hat,
        symmetrize(reduced.theta_jacobian * cov_v * reduced.theta_jacobian.transpose())};
}

ModalParams initial_guess(const std::vector<FftLine>& band_lines, int response_order) {
    if (band_lines.size() < 10)
        throw std::invalid_argument("initial_guess: band must contain at least 10 FFT lines");
    const Eigen::Index n = band_lines.front().values.size();
    check_band(band_lines, n);
    const int bins = static_cast<int>(band_lines.size());

    // Smooth the rank-one per-line PSDs so the noise floor (smallest
    // singular value) is estimable and the peak location stabilizes.
    const int half_window = std::min(bins / 2, std::max(static_cast<int>(n), bins / 16));
    std::vector<VectorXd> singulars(static_cast<std::size_t>(bins));
    std::vector<Eigen::VectorXcd> leading(static_cast<std::size_t>(bins));
    Eigen::MatrixXcd psd(n, n);
    for (int k = 0; k < bins; ++k) {
        const int lo = std::max(0, k - half_window);
        const int hi = std::min(bins - 1, k + half_window);
        psd.setZero();
        for (int j = lo; j <= hi; ++j)
            psd += band_lines[static_cast<std::size_t>(j)].values *
                   band_lines[static_cast<std::size_t>(j)].values.adjoint();
        psd /= static_cast<double>(hi - lo + 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(psd);
        singulars[static_cast<std::size_t>(k)] = es.eigenvalues().reverse().cwiseMax(0.0);
        leading[static_cast<std::size_t>(k)] = es.eigenvectors().col(n - 1);
    }

    int peak = 0;
    for (int k = 1; k < bins; ++k)
        if (singulars[static_cast<std::size_t>(k)][0] > singulars[static_cast<std::size_t>(peak)][0])
            peak = k;
    const double peak_sv = singulars[static_cast<std::size_t>(peak)][0];
    if (!(peak_sv > 0.0))
        throw std::runtime_error("initial_guess: band has no energy");
    const double f0 = band_lines[static_cast<std::size_t>(peak)].freq;

    // Phase-align the leading singular vector and take its real part.
    Eigen::VectorXcd v = leading[static_cast<std::size_t>(peak)];
    Eigen::Index strongest;
    v.cwiseAbs().maxCoeff(&strongest);
    v *= std::conj(v[strongest]) / std::abs(v[strongest]);
    VectorXd phi0 = v.real();
    if (phi0.norm() < 1e-12) phi0 = VectorXd::Ones(n);
    phi0.normalize();
    Eigen::Index biggest;
    phi0.cwiseAbs().maxCoeff(&biggest);
    if (phi0[biggest] < 0.0) phi0 = -phi0;

    // Half-power bandwidth of the largest singular value.
    const double half_power = 0.5 * peak_sv;
    auto crossing = [&](int from, int step) -> double {
        for (int k = from + step; k >= 0 && k < bins; k += step) {
            const double cur = singulars[static_cast<std::size_t>(k)][0];
            const double prev = singulars[static_cast<std::size_t>(k - step)][0];
            if (cur < half_power) {
                const double t = (prev - half_power) / std::max(prev - cur, 1e-300);
                return band_lines[static_cast<std::size_t>(k - step)].freq +
                       t * (band_lines[static_cast<std::size_t>(k)].freq -
                            band_lines[static_cast<std::size_t>(k - step)].freq);
            }
        }
        return -1.0;
    };
    const double f_left = crossing(peak, -1);
    const double f_right = crossing(peak, +1);
    double xi0;
    if (f_left > 0.0 && f_right > 0.0)
        xi0 = (f_right - f_left) / (2.0 * f0);
    else
        xi0 = 0.01;  // flat spectrum fallback
    xi0 = std::clamp(xi0, 0.001, 0.1);

    double se0 = 0.0;
    for (int k = 0; k < bins; ++k) se0 += singulars[static_cast<std::size_t>(k)][n - 1];
    se0 /= static_cast<double>(bins);
    se0 = std::clamp(se0, 1e-9 * peak_sv, 0.99 * peak_sv);

    // S₀ chosen so S₀·D(f₀) matches the peak above the noise floor; the
    // amplification at resonance is (2πf₀)^(−2q)/(4ξ₀²).
    double s0 = std::max(peak_sv - se0, 0.01 * peak_sv) * 4.0 * xi0 * xi0;
    if (response_order != 0) s0 *= std::pow(2.0 * kPi * f0, 2.0 * response_order);

    return ModalParams(f0, xi0, std::move(phi0), s0, se0);
}

SplitEvidence split_evidence(const LaplacePosterior& lp, std::string dataset_id) {
    const Eigen::Index n = lp.theta_hat.channels();
    VectorXd lambda(n + 2);
    lambda[0] = lp.theta_hat.f;
    lambda[1] = lp.theta_hat.xi;
    lambda.tail(n) = lp.theta_hat.phi;
    MatrixXd lambda_cov = lp.cov.topLeftCorner(n + 2, n + 2);

    VectorXd eta(2);
    eta << lp.theta_hat.S, lp.theta_hat.Se;
    MatrixXd eta_cov = lp.cov.bottomRightCorner(2, 2);
    return SplitEvidence{DatasetEvidence(lambda, symmetrize(lambda_cov), std::move(dataset_id)),
                         Gaussian(eta, symmetrize(eta_cov))};
}

}  // namespace oma

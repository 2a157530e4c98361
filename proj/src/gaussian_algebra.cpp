#include "oma/gaussian_algebra.hpp"

#include <cmath>
#include <numbers>

namespace oma {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2π)
}

Gaussian::Gaussian(VectorXd mean, MatrixXd cov) : mean_(std::move(mean)) {
    if (cov.rows() != cov.cols() || cov.rows() != mean_.size())
        throw std::invalid_argument("Gaussian: mean/cov dimension mismatch");
    cov_ = symmetrize(cov);
    if (!is_psd(cov_)) throw std::invalid_argument("Gaussian: covariance not PSD");
}

double Gaussian::log_density(const VectorXd& x) const {
    if (x.size() != dim()) throw std::invalid_argument("Gaussian: point dimension mismatch");
    auto llt = safe_llt(cov_, "Gaussian::log_density");
    const VectorXd r = x - mean_;
    const double quad = r.dot(llt.solve(r));
    return -0.5 * (static_cast<double>(dim()) * kLog2Pi + lognormal_det(llt) + quad);
}

double Gaussian::density(const VectorXd& x) const { return std::exp(log_density(x)); }

CorrelationSpec::CorrelationSpec(VectorXd s, MatrixXd r)
    : sigmas(std::move(s)), rhos(std::move(r)) {
    if (rhos.rows() != sigmas.size() || rhos.cols() != sigmas.size())
        throw std::invalid_argument("CorrelationSpec: dimension mismatch");
    if ((sigmas.array() < 0.0).any())
        throw std::invalid_argument("CorrelationSpec: negative standard deviation");
    for (Eigen::Index p = 1; p < dim(); ++p)
        for (Eigen::Index q = 0; q < p; ++q)
            if (!(std::abs(rhos(p, q)) < 1.0))
                throw std::invalid_argument("CorrelationSpec: |rho| must be < 1");
}

ProductFactorization product_factorize(const Gaussian& g0, const Gaussian& g) {
    if (g0.dim() != g.dim())
        throw std::invalid_argument("product_factorize: dimension mismatch");
    const MatrixXd sum = symmetrize(g0.cov() + g.cov());
    auto llt = safe_llt(sum, "product_factorize (Σ₀+Σ)");

    // K = Σ₀(Σ₀+Σ)⁻¹, formed as a solve against the symmetric sum
    const MatrixXd gain = llt.solve(g0.cov()).transpose();
    const MatrixXd omega = symmetrize(g0.cov() - gain * g0.cov());
    const VectorXd zeta = g0.mean() + gain * (g.mean() - g0.mean());

    const VectorXd r = g.mean() - g0.mean();
    const double log_ev =
        -0.5 * (static_cast<double>(g0.dim()) * kLog2Pi + lognormal_det(llt) +
                r.dot(llt.solve(r)));
    return ProductFactorization{log_ev, Gaussian(zeta, omega)};
}

double log_convolve_evidence(const VectorXd& lambda_hat, const MatrixXd& sigma_hat,
                             const MatrixXd& sigma_hyper, const VectorXd& mu_hyper) {
    const Eigen::Index d = lambda_hat.size();
    if (sigma_hat.rows() != d || sigma_hyper.rows() != d || mu_hyper.size() != d ||
        sigma_hat.cols() != d || sigma_hyper.cols() != d)
        throw std::invalid_argument("convolve_evidence: dimension mismatch");
    const MatrixXd sum = symmetrize(sigma_hyper + sigma_hat);
    auto llt = safe_llt(sum, "convolve_evidence (Σ_λλ+Σ̂)");
    const VectorXd r = mu_hyper - lambda_hat;
    return -0.5 * (static_cast<double>(d) * kLog2Pi + lognormal_det(llt) + r.dot(llt.solve(r)));
}

double convolve_evidence(const VectorXd& lambda_hat, const MatrixXd& sigma_hat,
                         const MatrixXd& sigma_hyper, const VectorXd& mu_hyper) {
    return std::exp(log_convolve_evidence(lambda_hat, sigma_hat, sigma_hyper, mu_hyper));
}

MatrixXd cholesky_from_correlation(const CorrelationSpec& spec) {
    const Eigen::Index n = spec.dim();
    MatrixXd corr(n, n);
    for (Eigen::Index p = 0; p < n; ++p)
        for (Eigen::Index q = 0; q < n; ++q) corr(p, q) = spec.rho(p, q);

    MatrixXd lower = MatrixXd::Zero(n, n);
    lower(0, 0) = 1.0;
    for (Eigen::Index r = 1; r < n; ++r) lower(r, 0) = corr(0, r);

    // Column c reuses one solve y = R_c⁻¹·ρ_c against the leading c×c
    // correlation block for the diagonal entry and every row below it.
    for (Eigen::Index c = 1; c < n; ++c) {
        const VectorXd rho_c = corr.col(c).head(c);
        Eigen::LLT<MatrixXd> llt(corr.topLeftCorner(c, c));
        if (llt.info() != Eigen::Success)
            throw std::runtime_error(
                "cholesky_from_correlation: correlation matrix not positive definite");
        const VectorXd y = llt.solve(rho_c);
        const double diag_sq = 1.0 - rho_c.dot(y);
        if (!(diag_sq > 0.0))
            throw std::runtime_error(
                "cholesky_from_correlation: correlation matrix not positive definite");
        lower(c, c) = std::sqrt(diag_sq);
        for (Eigen::Index r = c + 1; r < n; ++r)
            lower(r, c) = (corr(c, r) - corr.col(r).head(c).dot(y)) / lower(c, c);
    }
    return lower;
}

MatrixXd assemble_covariance(const CorrelationSpec& spec) {
    const MatrixXd lower = cholesky_from_correlation(spec);
    const MatrixXd scaled = spec.sigmas.asDiagonal() * lower;
    return symmetrize(scaled * scaled.transpose());
}

}  // namespace oma

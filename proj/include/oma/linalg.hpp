#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oma {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Force exact symmetry after arithmetic construction: (A + Aᵀ)/2.
inline MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

/// PSD test with the fixed relative tolerance used throughout: all
/// eigenvalues ≥ −1e-10·trace/d. An all-zero matrix counts as PSD.
bool is_psd(const MatrixXd& a, double* min_eigenvalue = nullptr);

/// Symmetric PSD square root via eigendecomposition, negative eigenvalues
/// clamped to zero. Tolerates rank-deficient input (unlike LLT).
MatrixXd psd_sqrt(const MatrixXd& a);

/// Eigen-clip: project a symmetric matrix onto the PSD cone.
MatrixXd clip_to_psd(const MatrixXd& a);

/// Count of diagonal-jitter events applied before an inversion anywhere in
/// the library (singular summed covariances get 1e-10·trace/d added).
std::atomic<long>& jitter_event_count();

/// Cholesky factor of a symmetric matrix, retried once with diagonal jitter
/// 1e-10·trace/d when the plain factorization fails. Throws on a matrix that
/// stays non-factorizable (genuinely indefinite).
Eigen::LLT<MatrixXd> safe_llt(const MatrixXd& a, const char* context);

/// log|det| from an LLT factor.
double lognormal_det(const Eigen::LLT<MatrixXd>& llt);

/// Deterministic pairwise-tree reduction. Fixed association order makes the
/// result independent of how terms would be distributed across threads.
template <typename T>
T accumulate_pairwise(std::vector<T> terms) {
    if (terms.empty()) throw std::invalid_argument("accumulate_pairwise: no terms");
    std::size_t n = terms.size();
    while (n > 1) {
        const std::size_t half = n / 2;
        for (std::size_t i = 0; i < half; ++i) terms[i] = terms[2 * i] + terms[2 * i + 1];
        if (n % 2 == 1) terms[half] = terms[n - 1];
        n = half + n % 2;
    }
    return terms[0];
}

/// Solve A x = b for symmetric positive definite A in extended precision.
/// Used where condition numbers near 1e12 (jittered singular evidences) would
/// otherwise push stationarity residuals above the 1e-6 contract.
VectorXd solve_spd_longdouble(const MatrixXd& a, const VectorXd& b);

}  // namespace oma

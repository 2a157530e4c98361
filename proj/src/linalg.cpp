#include "oma/linalg.hpp"

namespace oma {

bool is_psd(const MatrixXd& a, double* min_eigenvalue) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    if (min_eigenvalue) *min_eigenvalue = lo;
    const double tol = 1e-10 * a.trace() / static_cast<double>(a.rows());
    return lo >= -std::abs(tol);
}

MatrixXd psd_sqrt(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
    VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd clip_to_psd(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
    VectorXd d = es.eigenvalues().cwiseMax(0.0);
    return symmetrize(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

std::atomic<long>& jitter_event_count() {
    static std::atomic<long> count{0};
    return count;
}

Eigen::LLT<MatrixXd> safe_llt(const MatrixXd& a, const char* context) {
    Eigen::LLT<MatrixXd> llt(symmetrize(a));
    if (llt.info() == Eigen::Success) return llt;
    const double jitter = 1e-10 * a.trace() / static_cast<double>(a.rows());
    MatrixXd aj = symmetrize(a);
    aj.diagonal().array() += std::abs(jitter);
    llt.compute(aj);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error(std::string("singular covariance in ") + context);
    jitter_event_count().fetch_add(1, std::memory_order_relaxed);
    return llt;
}

double lognormal_det(const Eigen::LLT<MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

VectorXd solve_spd_longdouble(const MatrixXd& a, const VectorXd& b) {
    using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    MatrixXld al = a.cast<long double>();
    al = 0.5L * (al + al.transpose()).eval();
    Eigen::LLT<MatrixXld> llt(al);
    if (llt.info() != Eigen::Success) {
        const long double jitter = 1e-10L * al.trace() / static_cast<long double>(al.rows());
        al.diagonal().array() += jitter < 0 ? -jitter : jitter;
        llt.compute(al);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("singular matrix in extended-precision solve");
        jitter_event_count().fetch_add(1, std::memory_order_relaxed);
    }
    VectorXld x = llt.solve(b.cast<long double>());
    // one refinement pass keeps the residual near extended-precision eps
    x += llt.solve(b.cast<long double>() - al * x);
    return x.cast<double>();
}

}  // namespace oma

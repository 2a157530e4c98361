#include "oma/numdiff.hpp"

#include <cmath>

namespace oma {

namespace {
double step_for(double xi, double rel_step) { return rel_step * std::max(std::abs(xi), 1.0); }
}  // namespace

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double rel_step) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = step_for(x[i], rel_step);
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x, double rel_step) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd hess(n, n);
    const double f0 = f(x);
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double hi = step_for(x[i], rel_step);
        xp[i] = x[i] + hi;
        const double fp = f(xp);
        xp[i] = x[i] - hi;
        const double fm = f(xp);
        xp[i] = x[i];
        hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double hj = step_for(x[j], rel_step);
            xp[i] = x[i] + hi;
            xp[j] = x[j] + hj;
            const double fpp = f(xp);
            xp[j] = x[j] - hj;
            const double fpm = f(xp);
            xp[i] = x[i] - hi;
            xp[j] = x[j] + hj;
            const double fmp = f(xp);
            xp[j] = x[j] - hj;
            const double fmm = f(xp);
            xp[i] = x[i];
            xp[j] = x[j];
            hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }
    return hess;
}

Eigen::MatrixXd fd_jacobian_symmetric(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g,
    const Eigen::VectorXd& x, double rel_step) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd jac(n, n);
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = step_for(x[i], rel_step);
        xp[i] = x[i] + h;
        const Eigen::VectorXd gp = g(xp);
        xp[i] = x[i] - h;
        const Eigen::VectorXd gm = g(xp);
        xp[i] = x[i];
        jac.col(i) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (jac + jac.transpose());
}

}  // namespace oma

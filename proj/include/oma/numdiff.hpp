#pragma once

#include <Eigen/Dense>
#include <functional>

namespace oma {

/// Central finite-difference gradient, per-coordinate step rel_step·max(|x_i|, 1).
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double rel_step = 1e-6);

/// Central second differences of f (4-point off-diagonal, 3-point diagonal),
/// symmetric by construction.
Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x, double rel_step = 1e-4);

/// Central finite differences of a vector-valued function (e.g. a gradient),
/// returning the symmetrized Jacobian.
Eigen::MatrixXd fd_jacobian_symmetric(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g,
    const Eigen::VectorXd& x, double rel_step = 1e-4);

}  // namespace oma

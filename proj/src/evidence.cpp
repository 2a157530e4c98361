#include "oma/evidence.hpp"

#include <stdexcept>

namespace oma {

DatasetEvidence::DatasetEvidence(VectorXd lam, MatrixXd c, std::string id)
    : lambda_hat(std::move(lam)), cov(), dataset_id(std::move(id)) {
    if (lambda_hat.size() < 1) throw std::invalid_argument("DatasetEvidence: empty parameters");
    if (c.rows() != lambda_hat.size() || c.cols() != lambda_hat.size())
        throw std::invalid_argument("DatasetEvidence: covariance dimension mismatch");
    cov = symmetrize(c);
    if (channels() >= 1 && std::abs(mode_shape().norm() - 1.0) > 1e-10)
        throw std::invalid_argument("DatasetEvidence: mode shape must have unit norm");
    if (!is_psd(cov)) throw std::invalid_argument("DatasetEvidence: covariance not PSD");
}

HyperParams::HyperParams(VectorXd m, MatrixXd c) : mu(std::move(m)) {
    if (c.rows() != mu.size() || c.cols() != mu.size())
        throw std::invalid_argument("HyperParams: covariance dimension mismatch");
    cov = symmetrize(c);
    if (!is_psd(cov)) throw std::invalid_argument("HyperParams: covariance not PSD");
}

}  // namespace oma

#include "oma/hierarchical.hpp"

#include <algorithm>
#include <cmath>

namespace oma {

namespace {

struct DatasetTerms {
    MatrixXd precision;  // B_s = (Σ+Σ̂_s)⁻¹
    VectorXd whitened;   // w_s = B_s(μ−λ̂_s)
    double log_det;
    double quad;
};

/// Content-derived accumulation order: together with the pairwise tree this
/// makes every per-dataset sum bit-identical under input permutation.
std::vector<std::size_t> canonical_order(const std::vector<DatasetEvidence>& evidences) {
    std::vector<std::size_t> order(evidences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto key_less = [&](std::size_t a, std::size_t b) {
        const auto& ea = evidences[a];
        const auto& eb = evidences[b];
        for (Eigen::Index i = 0; i < ea.lambda_hat.size(); ++i)
            if (ea.lambda_hat[i] != eb.lambda_hat[i])
                return ea.lambda_hat[i] < eb.lambda_hat[i];
        for (Eigen::Index i = 0; i < ea.cov.size(); ++i)
            if (ea.cov.data()[i] != eb.cov.data()[i]) return ea.cov.data()[i] < eb.cov.data()[i];
        return false;
    };
    std::stable_sort(order.begin(), order.end(), key_less);
    return order;
}

template <typename T, typename PerDataset>
T sum_over_datasets(const std::vector<DatasetEvidence>& evidences, PerDataset&& term) {
    const auto order = canonical_order(evidences);
    std::vector<T> terms;
    terms.reserve(order.size());
    for (const std::size_t s : order) terms.push_back(term(s));
    return accumulate_pairwise(std::move(terms));
}

std::vector<DatasetTerms> per_dataset_terms(const HyperParams& psi,
                                            const std::vector<DatasetEvidence>& evidences) {
    if (evidences.empty()) throw std::invalid_argument("hyper model: no evidences");
    const Eigen::Index d = psi.dim();
    std::vector<DatasetTerms> terms;
    terms.reserve(evidences.size());
    const MatrixXd eye = MatrixXd::Identity(d, d);
    for (const auto& ev : evidences) {
        if (ev.dim() != d) throw std::invalid_argument("hyper model: evidence dimension mismatch");
        auto llt = safe_llt(psi.cov + ev.cov, "hyper model (Σ+Σ̂_s)");
        DatasetTerms t;
        t.precision = symmetrize(llt.solve(eye));
        const VectorXd residual = psi.mu - ev.lambda_hat;
        t.whitened = llt.solve(residual);
        t.log_det = lognormal_det(llt);
        t.quad = residual.dot(t.whitened);
        terms.push_back(std::move(t));
    }
    return terms;
}

void check_same_dim(const std::vector<DatasetEvidence>& evidences) {
    if (evidences.empty()) throw std::invalid_argument("no evidences");
    for (const auto& ev : evidences)
        if (ev.dim() != evidences.front().dim())
            throw std::invalid_argument("evidence dimension mismatch");
}

}  // namespace

EigenbasisChart::EigenbasisChart(MatrixXd b, VectorXd d)
    : basis(std::move(b)), eigenvalues(std::move(d)) {
    if (basis.rows() != basis.cols() || basis.rows() != eigenvalues.size())
        throw std::invalid_argument("EigenbasisChart: dimension mismatch");
    const MatrixXd gram = basis.transpose() * basis;
    if ((gram - MatrixXd::Identity(basis.rows(), basis.cols())).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("EigenbasisChart: basis not orthonormal");
    if ((eigenvalues.array() < 0.0).any())
        throw std::invalid_argument("EigenbasisChart: negative eigenvalues");
}

SigmaBasis SigmaBasis::packed_triangle(Eigen::Index dim) {
    SigmaBasis out;
    out.dim_ = dim;
    out.chart_mode_ = false;
    for (Eigen::Index p = 0; p < dim; ++p) {
        for (Eigen::Index q = p; q < dim; ++q) {
            MatrixXd e = MatrixXd::Zero(dim, dim);
            e(p, q) += 1.0;
            e(q, p) += p == q ? 0.0 : 1.0;
            out.directions_.push_back(std::move(e));
            out.labels_.push_back("sigma(" + std::to_string(p) + "," + std::to_string(q) + ")");
        }
    }
    return out;
}

SigmaBasis SigmaBasis::chart(const EigenbasisChart& chart) {
    SigmaBasis out;
    out.dim_ = chart.dim();
    out.chart_mode_ = true;
    for (Eigen::Index j = 0; j < chart.dim(); ++j) {
        const VectorXd l = chart.basis.col(j);
        out.directions_.push_back(l * l.transpose());
        out.labels_.push_back("eig(" + std::to_string(j) + ")");
    }
    return out;
}

VectorXd SigmaBasis::coordinates_of(const MatrixXd& sigma) const {
    VectorXd coords(count());
    if (chart_mode_) {
        for (Eigen::Index a = 0; a < count(); ++a)
            coords[a] = (directions_[static_cast<std::size_t>(a)].cwiseProduct(sigma)).sum();
    } else {
        Eigen::Index a = 0;
        for (Eigen::Index p = 0; p < dim_; ++p)
            for (Eigen::Index q = p; q < dim_; ++q) coords[a++] = sigma(p, q);
    }
    return coords;
}

MatrixXd SigmaBasis::matrix_of(const VectorXd& coords) const {
    if (coords.size() != count())
        throw std::invalid_argument("SigmaBasis: coordinate count mismatch");
    MatrixXd sigma = MatrixXd::Zero(dim_, dim_);
    if (chart_mode_) {
        for (Eigen::Index a = 0; a < count(); ++a)
            sigma += coords[a] * directions_[static_cast<std::size_t>(a)];
    } else {
        Eigen::Index a = 0;
        for (Eigen::Index p = 0; p < dim_; ++p)
            for (Eigen::Index q = p; q < dim_; ++q) {
                sigma(p, q) = coords[a];
                sigma(q, p) = coords[a];
                ++a;
            }
    }
    return symmetrize(sigma);
}

std::string SigmaBasis::label(Eigen::Index a) const {
    return labels_[static_cast<std::size_t>(a)];
}

PriorBox::PriorBox(VectorXd l, VectorXd h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size() || (hi.array() <= lo.array()).any())
        throw std::invalid_argument("PriorBox: need lo < hi per coordinate");
}

std::vector<DatasetEvidence> align_mode_signs(std::vector<DatasetEvidence> evidences) {
    check_same_dim(evidences);
    if (evidences.front().channels() < 1)
        throw std::invalid_argument("align_mode_signs: evidences carry no mode shape");
    const VectorXd ref = evidences.front().mode_shape();
    const Eigen::Index d = evidences.front().dim();
    for (auto& ev : evidences) {
        const double dot = ev.mode_shape().dot(ref);
        if (std::abs(dot) < 0.2)
            throw std::runtime_error("align_mode_signs: near-orthogonal shapes for dataset '" +
                                     ev.dataset_id + "' — probable mode mismatch");
        if (dot < 0.0) {
            VectorXd flip = VectorXd::Ones(d);
            flip.tail(d - 2).array() = -1.0;
            ev.lambda_hat = flip.cwiseProduct(ev.lambda_hat);
            ev.cov = symmetrize(flip.asDiagonal() * ev.cov * flip.asDiagonal());
        }
    }
    return evidences;
}

double hyper_nll(const HyperParams& psi, const std::vector<DatasetEvidence>& evidences,
                 const PriorBox* box, const SigmaBasis* basis) {
    if (box) {
        if (!basis)
            throw std::invalid_argument("hyper_nll: box given without a Σ-parameterization");
        VectorXd packed(psi.dim() + basis->count());
        packed.head(psi.dim()) = psi.mu;
        packed.tail(basis->count()) = basis->coordinates_of(psi.cov);
        if (!box->contains(packed)) return std::numeric_limits<double>::infinity();
    }
    const auto terms = per_dataset_terms(psi, evidences);
    const double log_dets = sum_over_datasets<double>(
        evidences, [&](std::size_t s) { return terms[s].log_det; });
    const double quads =
        sum_over_datasets<double>(evidences, [&](std::size_t s) { return terms[s].quad; });
    return 0.5 * log_dets + 0.5 * quads;
}

HyperGradient hyper_gradient(const HyperParams& psi,
                             const std::vector<DatasetEvidence>& evidences) {
    const auto terms = per_dataset_terms(psi, evidences);
    const VectorXd mu_grad = sum_over_datasets<VectorXd>(
        evidences, [&](std::size_t s) { return terms[s].whitened; });
    const MatrixXd sigma_grad = sum_over_datasets<MatrixXd>(evidences, [&](std::size_t s) {
        return MatrixXd(0.5 * (terms[s].precision -
                               terms[s].whitened * terms[s].whitened.transpose()));
    });
    return HyperGradient{mu_grad, symmetrize(sigma_grad)};
}

VectorXd pack_gradient(const HyperGradient& grad, const SigmaBasis& basis) {
    VectorXd g(basis.count());
    for (Eigen::Index a = 0; a < basis.count(); ++a)
        g[a] = (grad.sigma.cwiseProduct(basis.direction(a))).sum();
    return g;
}

MatrixXd hyper_hessian(const HyperParams& psi, const std::vector<DatasetEvidence>& evidences,
                       const SigmaBasis& basis) {
    const auto terms = per_dataset_terms(psi, evidences);
    const Eigen::Index d = psi.dim();
    const Eigen::Index m = basis.count();
    const Eigen::Index total = d + m;

    std::vector<MatrixXd> projected(static_cast<std::size_t>(m));  // B·E_α per direction
    std::vector<VectorXd> pushed(static_cast<std::size_t>(m));     // E_α·w
    auto block_for = [&](std::size_t s) {
        const auto& t = terms[s];
        for (Eigen::Index a = 0; a < m; ++a) {
            projected[static_cast<std::size_t>(a)] = t.precision * basis.direction(a);
            pushed[static_cast<std::size_t>(a)] = basis.direction(a) * t.whitened;
        }
        MatrixXd h = MatrixXd::Zero(total, total);
        h.topLeftCorner(d, d) = t.precision;
        for (Eigen::Index a = 0; a < m; ++a) {
            const VectorXd cross = -t.precision * pushed[static_cast<std::size_t>(a)];
            h.block(0, d + a, d, 1) = cross;
            h.block(d + a, 0, 1, d) = cross.transpose();
            for (Eigen::Index b = a; b < m; ++b) {
                const double trace_term =
                    (projected[static_cast<std::size_t>(a)].cwiseProduct(
                         projected[static_cast<std::size_t>(b)].transpose()))
                        .sum();
                const double quad_term =
                    pushed[static_cast<std::size_t>(a)]
                        .dot(projected[static_cast<std::size_t>(b)] * t.whitened);
                const double value = -0.5 * trace_term + quad_term;
                h(d + a, d + b) = value;
                h(d + b, d + a) = value;
            }
        }
        return h;
    };
    return symmetrize(sum_over_datasets<MatrixXd>(evidences, block_for));
}

MatrixXd hyper_hessian(const HyperParams& psi, const std::vector<DatasetEvidence>& evidences) {
    return hyper_hessian(psi, evidences, SigmaBasis::packed_triangle(psi.dim()));
}

HyperParams initial_hyper(const std::vector<DatasetEvidence>& evidences) {
    check_same_dim(evidences);
    if (evidences.size() < 2) throw std::invalid_argument("initial_hyper: need N_D >= 2");
    const double inv_nd = 1.0 / static_cast<double>(evidences.size());

    const VectorXd mean =
        inv_nd * sum_over_datasets<VectorXd>(
                     evidences, [&](std::size_t s) { return evidences[s].lambda_hat; });
    const MatrixXd scatter =
        inv_nd * sum_over_datasets<MatrixXd>(evidences, [&](std::size_t s) {
            const VectorXd r = mean - evidences[s].lambda_hat;
            return MatrixXd(r * r.transpose());
        });
    const MatrixXd mean_cov = inv_nd * sum_over_datasets<MatrixXd>(
                                           evidences, [&](std::size_t s) {
                                               return evidences[s].cov;
                                           });
    return HyperParams(mean, clip_to_psd(scatter - mean_cov));
}

EigenbasisChart eigenbasis_reduce(const MatrixXd& sigma_bar) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(sigma_bar));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eigenbasis_reduce: eigendecomposition failed");
    const Eigen::Index d = sigma_bar.rows();
    MatrixXd basis(d, d);
    VectorXd values(d);
    for (Eigen::Index j = 0; j < d; ++j) {  // descending
        basis.col(j) = es.eigenvectors().col(d - 1 - j);
        values[j] = std::max(es.eigenvalues()[d - 1 - j], 0.0);
        Eigen::Index strongest;
        basis.col(j).cwiseAbs().maxCoeff(&strongest);
        if (basis(strongest, j) < 0.0) basis.col(j) = -basis.col(j);
    }
    return EigenbasisChart(std::move(basis), std::move(values));
}

MuUpdate weighted_mu_update(const std::vector<DatasetEvidence>& evidences,
                            const MatrixXd& sigma) {
    check_same_dim(evidences);
    const Eigen::Index d = evidences.front().dim();

    // Identified evidences carry exact null directions (unit-norm shape), so
    // the summed precisions reach condition numbers ~1e9 after jitter; the
    // stationarity contract on grad_mu needs these solves in extended
    // precision.
    using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    const MatrixXld eye = MatrixXld::Identity(d, d);
    std::vector<MatrixXld> precisions;
    precisions.reserve(evidences.size());
    for (const auto& ev : evidences) {
        MatrixXld a = (sigma + ev.cov).cast<long double>();
        a = 0.5L * (a + a.transpose()).eval();
        Eigen::LLT<MatrixXld> llt(a);
        if (llt.info() != Eigen::Success) {
            const long double jitter = 1e-10L * a.trace() / static_cast<long double>(d);
            a.diagonal().array() += jitter < 0 ? -jitter : jitter;
            llt.compute(a);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("singular covariance in weighted_mu_update (Σ+Σ̂_s)");
            jitter_event_count().fetch_add(1, std::memory_order_relaxed);
        }
        MatrixXld b = llt.solve(eye);
        precisions.push_back(0.5L * (b + b.transpose()).eval());
    }

    const auto order = canonical_order(evidences);
    std::vector<MatrixXld> w_terms;
    std::vector<VectorXld> b_terms;
    for (const std::size_t s : order) {
        w_terms.push_back(precisions[s]);
        b_terms.push_back(precisions[s] * evidences[s].lambda_hat.cast<long double>());
    }
    const MatrixXld total = accumulate_pairwise(std::move(w_terms));
    const VectorXld rhs = accumulate_pairwise(std::move(b_terms));

    Eigen::LLT<MatrixXld> total_llt(total);
    if (total_llt.info() != Eigen::Success)
        throw std::runtime_error("singular precision sum in weighted_mu_update");
    VectorXld mu = total_llt.solve(rhs);
    mu += total_llt.solve(rhs - total * mu);

    MuUpdate out;
    out.mu = mu.cast<double>();
    out.weights.reserve(evidences.size());
    for (const auto& p : precisions)
        out.weights.push_back(total_llt.solve(p).cast<double>());
    out.precision_scale =
        static_cast<double>(total.cwiseAbs().rowwise().sum().maxCoeff());
    return out;
}

StationarityCheck stationarity_check(const std::vector<DatasetEvidence>& evidences,
                                     const HyperParams& psi) {
    using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    constexpr long double kEps = 1.0842e-19L;  // 64-bit mantissa
    const Eigen::Index d = psi.dim();
    const auto order = canonical_order(evidences);
    std::vector<VectorXld> terms;
    long double bound = 0.0L;
    for (const std::size_t s : order) {
        MatrixXld a = (psi.cov + evidences[s].cov).cast<long double>();
        a = 0.5L * (a + a.transpose()).eval();
        Eigen::LLT<MatrixXld> llt(a);
        if (llt.info() != Eigen::Success) {
            const long double jitter = 1e-10L * a.trace() / static_cast<long double>(d);
            a.diagonal().array() += jitter < 0 ? -jitter : jitter;
            llt.compute(a);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("singular covariance in stationarity check");
        }
        const VectorXld w = llt.solve((psi.mu - evidences[s].lambda_hat).cast<long double>());
        const MatrixXld inv = llt.solve(MatrixXld::Identity(d, d));
        const long double norm_a = a.cwiseAbs().rowwise().sum().maxCoeff();
        const long double norm_inv = inv.cwiseAbs().rowwise().sum().maxCoeff();
        bound += kEps * norm_a * norm_inv * w.norm();
        terms.push_back(w);
    }
    StationarityCheck out;
    out.residual = accumulate_pairwise(std::move(terms)).cast<double>();
    out.error_bound = static_cast<double>(8.0L * bound);
    return out;
}

MapResult map_estimate(const std::vector<DatasetEvidence>& evidences,
                       const std::optional<EigenbasisChart>& chart, const MapOptions& options) {
    check_same_dim(evidences);
    if (evidences.size() < 2) throw std::invalid_argument("map_estimate: need N_D >= 2");
    const Eigen::Index d = evidences.front().dim();

    const HyperParams start = initial_hyper(evidences);
    std::optional<EigenbasisChart> engaged = chart;
    if (!engaged && options.use_chart) engaged = eigenbasis_reduce(start.cov);
    const SigmaBasis basis =
        engaged ? SigmaBasis::chart(*engaged) : SigmaBasis::packed_triangle(d);

    VectorXd mu = start.mu;
    VectorXd coords = basis.coordinates_of(engaged ? engaged->covariance() : start.cov);
    if (engaged) coords = coords.cwiseMax(0.0);
    auto sigma_of = [&](const VectorXd& c) {
        return engaged ? basis.matrix_of(c.cwiseMax(0.0)) : clip_to_psd(basis.matrix_of(c));
    };

    MapResult result;
    const Eigen::Index m = basis.count();
    double value = hyper_nll(HyperParams(mu, sigma_of(coords)), evidences);
    bool converged = false;
    int iter = 0;
    for (; iter < options.max_outer_iterations && !converged; ++iter) {
        MatrixXd sigma = sigma_of(coords);
        const VectorXd mu_prev = mu;
        mu = weighted_mu_update(evidences, sigma).mu;
        value = hyper_nll(HyperParams(mu, sigma), evidences);

        // joint damped-Newton step on (μ, Σ-coordinates); pure alternation
        // stalls because the mode-shape block couples μ and Σ strongly
        const HyperParams psi(mu, sigma);
        const auto grad_parts = hyper_gradient(psi, evidences);
        VectorXd grad(d + m);
        grad.head(d) = grad_parts.mu;
        grad.tail(m) = pack_gradient(grad_parts, basis);
        const MatrixXd hess = hyper_hessian(psi, evidences, basis);

        // Jacobi balancing: eigenvalue coordinates near the zero bound carry
        // curvatures ~1/d², far beyond double-precision solvability raw
        const VectorXd balance =
            hess.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        MatrixXd balanced = balance.asDiagonal() * hess * balance.asDiagonal();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(balanced);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
        if (lo < 1e-8 * std::max(hi, 1.0))
            balanced.diagonal().array() += -std::min(lo, 0.0) + 1e-8 * std::max(hi, 1.0);
        const VectorXd direction =
            balance.asDiagonal() *
            Eigen::LDLT<MatrixXd>(balanced).solve(-(balance.asDiagonal() * grad).eval());

        double step = 1.0;
        VectorXd mu_next = mu;
        VectorXd coords_next = coords;
        double value_next = value;
        bool decreased = false;
        for (int ls = 0; ls < 60; ++ls) {
            const VectorXd mu_trial = mu + step * direction.head(d);
            VectorXd trial = coords + step * direction.tail(m);
            if (engaged) trial = trial.cwiseMax(0.0);
            const MatrixXd sigma_trial = sigma_of(trial);
            if (!engaged) trial = basis.coordinates_of(sigma_trial);  // track PSD projection
            const double trial_value = hyper_nll(HyperParams(mu_trial, sigma_trial), evidences);
            if (std::isfinite(trial_value) && trial_value <= value + 1e-300) {
                mu_next = mu_trial;
                coords_next = trial;
                value_next = trial_value;
                decreased = true;
                break;
            }
            step *= 0.5;
        }

        const double step_norm = std::sqrt((coords_next - coords).squaredNorm() +
                                           (mu_next - mu_prev).squaredNorm());
        const double drop = value - value_next;
        mu = mu_next;
        coords = coords_next;
        value = value_next;
        if ((!decreased || drop < options.objective_tol * std::max(1.0, std::abs(value))) &&
            step_norm < options.step_tol)
            converged = true;
    }

    MatrixXd sigma = sigma_of(coords);
    const MuUpdate final_update = weighted_mu_update(evidences, sigma);
    mu = final_update.mu;
    if (options.mu_box) {
        for (Eigen::Index i = 0; i < d; ++i) {
            const double clamped = std::clamp(mu[i], options.mu_box->lo[i], options.mu_box->hi[i]);
            if (clamped != mu[i]) result.mu_box_clamped = true;
            mu[i] = clamped;
        }
    }
    const HyperParams psi(mu, sigma);
    result.psi = psi;
    result.iterations = iter;
    result.final_nll = hyper_nll(psi, evidences);
    const StationarityCheck stationarity = stationarity_check(evidences, psi);
    result.grad_mu_norm = stationarity.residual.norm();
    result.grad_mu_tolerance = std::max(options.grad_mu_tol, stationarity.error_bound);
    result.converged = converged && result.grad_mu_norm < result.grad_mu_tolerance;

    const double scale = coords.cwiseAbs().maxCoeff();
    for (Eigen::Index a = 0; a < coords.size(); ++a)
        if (engaged && coords[a] <= std::max(1e-14 * scale, 0.0))
            result.clamped_coordinates.push_back(a);
    result.at_zero_boundary =
        engaged ? static_cast<Eigen::Index>(result.clamped_coordinates.size()) == coords.size()
                : sigma.cwiseAbs().maxCoeff() == 0.0;
    if (engaged)
        result.chart = EigenbasisChart(engaged->basis, coords.cwiseMax(0.0));
    return result;
}

Gaussian dataset_conditional(std::size_t r, const std::vector<DatasetEvidence>& evidences,
                             const HyperParams& psi_hat) {
    if (r >= evidences.size()) throw std::invalid_argument("dataset_conditional: bad index");
    const DatasetEvidence& ev = evidences[r];
    if (ev.dim() != psi_hat.dim())
        throw std::invalid_argument("dataset_conditional: dimension mismatch");
    auto llt = safe_llt(ev.cov + psi_hat.cov, "dataset_conditional (Σ̂_r+Σ̂_λλ)");
    const MatrixXd gain = llt.solve(ev.cov).transpose();
    const VectorXd mean = ev.lambda_hat + gain * (psi_hat.mu - ev.lambda_hat);
    const MatrixXd cov = clip_to_psd(ev.cov - gain * ev.cov);
    return Gaussian(mean, cov);
}

PredictiveResult predictive(const HyperParams& psi_hat) {
    const bool degenerate = psi_hat.cov.cwiseAbs().maxCoeff() == 0.0;
    return PredictiveResult{Gaussian(psi_hat.mu, psi_hat.cov), degenerate};
}

HyperPosteriorLaplace hyper_laplace(const HyperParams& psi_hat,
                                    const std::vector<DatasetEvidence>& evidences,
                                    const SigmaBasis& basis,
                                    const std::vector<Eigen::Index>& boundary_coordinates) {
    const Eigen::Index d = psi_hat.dim();
    const MatrixXd full = hyper_hessian(psi_hat, evidences, basis);

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < d; ++i) keep.push_back(i);
    for (Eigen::Index a = 0; a < basis.count(); ++a) {
        const bool clamped = std::find(boundary_coordinates.begin(), boundary_coordinates.end(),
                                       a) != boundary_coordinates.end();
        if (!clamped) keep.push_back(d + a);
    }
    const Eigen::Index active = static_cast<Eigen::Index>(keep.size());
    MatrixXd hess(active, active);
    for (Eigen::Index i = 0; i < active; ++i)
        for (Eigen::Index j = 0; j < active; ++j) hess(i, j) = full(keep[i], keep[j]);

    HyperPosteriorLaplace out;
    out.boundary_coordinates = boundary_coordinates;
    const VectorXd sigma_coords = basis.coordinates_of(psi_hat.cov);
    out.psi_hat.resize(active);
    out.labels.reserve(static_cast<std::size_t>(active));
    for (Eigen::Index i = 0; i < active; ++i) {
        if (keep[i] < d) {
            out.psi_hat[i] = psi_hat.mu[keep[i]];
            out.labels.push_back("mu(" + std::to_string(keep[i]) + ")");
        } else {
            out.psi_hat[i] = sigma_coords[keep[i] - d];
            out.labels.push_back(basis.label(keep[i] - d));
        }
    }

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(hess);
    if (es.eigenvalues().minCoeff() <= 0.0) {
        out.positive_definite = false;
        Eigen::Index worst;
        es.eigenvalues().minCoeff(&worst);
        out.offending_direction = es.eigenvectors().col(worst);
        out.cov = MatrixXd::Zero(active, active);
        return out;
    }
    out.cov = symmetrize(es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose());
    return out;
}

HyperPosteriorLaplace hyper_laplace(const HyperParams& psi_hat,
                                    const std::vector<DatasetEvidence>& evidences) {
    return hyper_laplace(psi_hat, evidences, SigmaBasis::packed_triangle(psi_hat.dim()));
}

}  // namespace oma

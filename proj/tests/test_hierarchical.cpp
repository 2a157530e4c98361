#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oma/hierarchical.hpp"
#include "oma/numdiff.hpp"
#include "test_helpers.hpp"

using namespace oma;
using namespace oma::testing;

namespace {

DatasetEvidence scalar_evidence(double lambda, double var, const std::string& id = "") {
    return DatasetEvidence((Eigen::VectorXd(1) << lambda).finished(),
                           (Eigen::MatrixXd(1, 1) << var).finished(), id);
}

/// Random evidences of generic dimension; for d ≥ 3 the tail block is
/// normalized to satisfy the mode-shape invariant.
std::vector<DatasetEvidence> random_evidences(Rng& rng, Eigen::Index d, int count,
                                              double cov_scale = 0.3) {
    std::vector<DatasetEvidence> out;
    for (int s = 0; s < count; ++s) {
        Eigen::VectorXd lambda = random_vector(rng, d);
        if (d >= 3) lambda.tail(d - 2).normalize();
        out.emplace_back(lambda, random_spd(rng, d, cov_scale), "ds" + std::to_string(s));
    }
    return out;
}

/// Evidences with a genuine mode-shape block: λ = (f, ξ, φ) with ‖φ‖ = 1 and
/// a rank-deficient φ-block, as the identification stage produces.
std::vector<DatasetEvidence> modal_evidences(Rng& rng, Eigen::Index n, int count,
                                             double id_scale = 1e-3) {
    std::vector<DatasetEvidence> out;
    for (int s = 0; s < count; ++s) {
        Eigen::VectorXd lambda(n + 2);
        lambda[0] = 4.2 + 0.03 * rng.normal();
        lambda[1] = 0.05 + 0.003 * rng.normal();
        Eigen::VectorXd phi = Eigen::VectorXd::Ones(n) + 0.05 * random_vector(rng, n);
        lambda.tail(n) = phi / phi.norm();
        // covariance whose φ-block annihilates φ̂
        Eigen::MatrixXd cov = random_spd(rng, n + 2, id_scale);
        Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(n + 2, n + 2);
        proj.bottomRightCorner(n, n) -=
            lambda.tail(n) * lambda.tail(n).transpose();
        cov = symmetrize(proj * cov * proj.transpose());
        out.emplace_back(lambda, cov, "mds" + std::to_string(s));
    }
    return out;
}

VectorXd pack_psi(const HyperParams& psi, const SigmaBasis& basis) {
    VectorXd x(psi.dim() + basis.count());
    x.head(psi.dim()) = psi.mu;
    x.tail(basis.count()) = basis.coordinates_of(psi.cov);
    return x;
}

HyperParams unpack_psi(const VectorXd& x, Eigen::Index d, const SigmaBasis& basis) {
    return HyperParams(x.head(d), clip_to_psd(basis.matrix_of(x.tail(basis.count()))));
}

}  // namespace

TEST_CASE("align_mode_signs: aligned shapes pass through unchanged") {
    Rng rng(2);
    auto evidences = modal_evidences(rng, 3, 4);
    const auto aligned = align_mode_signs(evidences);
    for (std::size_t s = 0; s < evidences.size(); ++s) {
        CHECK((aligned[s].lambda_hat - evidences[s].lambda_hat).norm() == 0.0);
        CHECK((aligned[s].cov - evidences[s].cov).norm() == 0.0);
    }
}

TEST_CASE("align_mode_signs: a negated shape is restored exactly") {
    Rng rng(3);
    auto evidences = modal_evidences(rng, 3, 3);
    auto flipped = evidences;
    Eigen::VectorXd flip = Eigen::VectorXd::Ones(5);
    flip.tail(3).array() = -1.0;
    flipped[1] = DatasetEvidence(flip.cwiseProduct(evidences[1].lambda_hat),
                                 flip.asDiagonal() * evidences[1].cov * flip.asDiagonal(),
                                 evidences[1].dataset_id);
    const auto aligned = align_mode_signs(flipped);
    CHECK((aligned[1].lambda_hat - evidences[1].lambda_hat).norm() < 1e-15);
    CHECK(rel_frobenius(aligned[1].cov, evidences[1].cov) < 1e-14);
}

TEST_CASE("align_mode_signs: congruence preserves densities") {
    Rng rng(5);
    auto evidences = modal_evidences(rng, 2, 2, 1e-2);
    // make the second evidence sign-flipped relative to the first
    Eigen::VectorXd flip = Eigen::VectorXd::Ones(4);
    flip.tail(2).array() = -1.0;
    const DatasetEvidence original = evidences[1];
    evidences[1] = DatasetEvidence(flip.cwiseProduct(original.lambda_hat),
                                   flip.asDiagonal() * original.cov * flip.asDiagonal(),
                                   original.dataset_id);
    const auto aligned = align_mode_signs(evidences);

    Eigen::MatrixXd jitter = 1e-9 * Eigen::MatrixXd::Identity(4, 4);
    const Gaussian before(evidences[1].lambda_hat, evidences[1].cov + jitter);
    const Gaussian after(aligned[1].lambda_hat, aligned[1].cov + jitter);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd x = random_vector(rng, 4);
        CHECK(std::abs(before.log_density(x) - after.log_density(flip.cwiseProduct(x))) < 1e-8);
    }
}

TEST_CASE("align_mode_signs: near-orthogonal shapes signal mode mismatch") {
    Rng rng(7);
    auto evidences = modal_evidences(rng, 2, 2);
    Eigen::VectorXd lambda = evidences[1].lambda_hat;
    Eigen::VectorXd shape(2);
    shape << evidences[0].mode_shape()[1], -evidences[0].mode_shape()[0];
    lambda.tail(2) = shape.normalized();
    evidences[1] = DatasetEvidence(lambda, evidences[1].cov, "orthogonal");
    CHECK_THROWS_AS(align_mode_signs(evidences), std::runtime_error);
}

TEST_CASE("hyper_nll: identity covariance at the data point") {
    const std::vector<DatasetEvidence> evidences{DatasetEvidence(
        Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), "a")};
    const HyperParams psi(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2));
    CHECK(std::abs(hyper_nll(psi, evidences)) < 1e-14);
}

TEST_CASE("hyper_nll: scalar hand value") {
    const std::vector<DatasetEvidence> evidences{scalar_evidence(0.0, 1.0),
                                                 scalar_evidence(2.0, 1.0)};
    const HyperParams psi((Eigen::VectorXd(1) << 1.0).finished(),
                          Eigen::MatrixXd::Zero(1, 1));
    CHECK(rel_err(hyper_nll(psi, evidences), 1.0) < 1e-14);
}

TEST_CASE("hyper_nll: exp(-L) proportional to the product of evidence convolutions") {
    Rng rng(11);
    const auto evidences = random_evidences(rng, 3, 5);
    double reference = std::numeric_limits<double>::quiet_NaN();
    for (int trial = 0; trial < 10; ++trial) {
        const HyperParams psi(random_vector(rng, 3), random_spd(rng, 3, 0.5));
        double log_product = 0.0;
        for (const auto& ev : evidences)
            log_product += log_convolve_evidence(ev.lambda_hat, ev.cov, psi.cov, psi.mu);
        const double offset = log_product + hyper_nll(psi, evidences);
        if (trial == 0) reference = offset;
        CHECK(std::abs(offset - reference) < 1e-10);  // constant across ψ
    }
    // and the constant is the dropped (2π)^(dN_D/2) normalization
    CHECK(rel_err(-reference, 0.5 * 3 * 5 * std::log(2.0 * std::numbers::pi)) < 1e-12);
}

TEST_CASE("hyper_gradient: zero at the weighted mean") {
    Rng rng(13);
    const auto evidences = random_evidences(rng, 4, 6);
    const Eigen::MatrixXd sigma = random_spd(rng, 4, 0.2);
    const auto update = weighted_mu_update(evidences, sigma);
    const auto grad = hyper_gradient(HyperParams(update.mu, sigma), evidences);
    CHECK(grad.mu.norm() < 1e-10);
    // the per-dataset weighting matrices sum to the identity
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(4, 4);
    for (const auto& w : update.weights) sum += w;
    CHECK(rel_frobenius(sum, Eigen::MatrixXd::Identity(4, 4)) < 1e-10);
}

TEST_CASE("hyper_gradient: scalar hand value of the covariance derivative") {
    const std::vector<DatasetEvidence> evidences{scalar_evidence(-1.0, 1.0),
                                                 scalar_evidence(1.0, 1.0)};
    const HyperParams psi(Eigen::VectorXd::Zero(1),
                          (Eigen::MatrixXd(1, 1) << 1.0).finished());
    const auto grad = hyper_gradient(psi, evidences);
    CHECK(rel_err(grad.sigma(0, 0), 0.25) < 1e-14);
}

TEST_CASE("hyper_gradient: matches finite differences of hyper_nll") {
    Rng rng(17);
    const Eigen::Index d = 4;
    const auto evidences = random_evidences(rng, d, 6);
    for (const bool chart_mode : {false, true}) {
        const HyperParams psi(random_vector(rng, d), random_spd(rng, d, 0.4));
        const SigmaBasis basis = chart_mode
                                     ? SigmaBasis::chart(eigenbasis_reduce(psi.cov))
                                     : SigmaBasis::packed_triangle(d);
        const auto grad = hyper_gradient(psi, evidences);
        VectorXd packed(d + basis.count());
        packed.head(d) = grad.mu;
        packed.tail(basis.count()) = pack_gradient(grad, basis);

        const VectorXd x0 = pack_psi(psi, basis);
        auto f = [&](const VectorXd& x) {
            return hyper_nll(unpack_psi(x, d, basis), evidences);
        };
        const VectorXd fd = fd_gradient(f, x0, 1e-6);
        CHECK((packed - fd).norm() / fd.norm() < 1e-6);
    }
}

TEST_CASE("hyper_hessian: equal unit precisions give N_D times identity") {
    std::vector<DatasetEvidence> evidences;
    for (int s = 0; s < 3; ++s)
        evidences.emplace_back((Eigen::VectorXd(2) << 0.1 * s, -0.2 * s).finished(),
                               Eigen::MatrixXd::Identity(2, 2), "e" + std::to_string(s));
    const HyperParams psi(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2));
    const Eigen::MatrixXd hess = hyper_hessian(psi, evidences);
    CHECK(rel_frobenius(hess.topLeftCorner(2, 2), 3.0 * Eigen::MatrixXd::Identity(2, 2)) <
          1e-12);
}

TEST_CASE("hyper_hessian: matches finite differences of the gradient") {
    Rng rng(19);
    const Eigen::Index d = 3;
    const auto evidences = random_evidences(rng, d, 4);
    for (const bool chart_mode : {false, true}) {
        const HyperParams psi(random_vector(rng, d), random_spd(rng, d, 0.4));
        const SigmaBasis basis = chart_mode
                                     ? SigmaBasis::chart(eigenbasis_reduce(psi.cov))
                                     : SigmaBasis::packed_triangle(d);
        const Eigen::MatrixXd hess = hyper_hessian(psi, evidences, basis);

        auto packed_grad = [&](const VectorXd& x) {
            const HyperParams p = unpack_psi(x, d, basis);
            const auto grad = hyper_gradient(p, evidences);
            VectorXd g(d + basis.count());
            g.head(d) = grad.mu;
            g.tail(basis.count()) = pack_gradient(grad, basis);
            return g;
        };
        const Eigen::MatrixXd fd = fd_jacobian_symmetric(packed_grad, pack_psi(psi, basis), 1e-5);
        CHECK(rel_frobenius(hess, fd) < 1e-4);
    }
}

TEST_CASE("initial_hyper: identical evidences collapse to zero scatter") {
    Rng rng(23);
    Eigen::VectorXd a = random_vector(rng, 3);
    a.tail(1).normalize();
    const Eigen::MatrixXd v = random_spd(rng, 3, 0.2);
    std::vector<DatasetEvidence> evidences(4, DatasetEvidence(a, v, "same"));
    const HyperParams start = initial_hyper(evidences);
    CHECK((start.mu - a).norm() < 1e-14);
    CHECK(start.cov.cwiseAbs().maxCoeff() < 1e-14);  // clip(−V) = 0
}

TEST_CASE("initial_hyper: scalar hand values") {
    const std::vector<DatasetEvidence> evidences{scalar_evidence(0.0, 0.5),
                                                 scalar_evidence(2.0, 0.5)};
    const HyperParams start = initial_hyper(evidences);
    CHECK(start.mu[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(start.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("initial_hyper: zero identification covariance recovers the ensemble scatter") {
    Rng rng(29);
    std::vector<DatasetEvidence> evidences;
    const Eigen::Index d = 3;
    std::vector<Eigen::VectorXd> lambdas;
    for (int s = 0; s < 7; ++s) {
        Eigen::VectorXd lambda = random_vector(rng, d);
        lambda.tail(d - 2).normalize();
        lambdas.push_back(lambda);
        evidences.emplace_back(lambdas.back(), Eigen::MatrixXd::Zero(d, d), "");
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& l : lambdas) mean += l;
    mean /= 7.0;
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
    for (const auto& l : lambdas) scatter += (mean - l) * (mean - l).transpose();
    scatter /= 7.0;
    const HyperParams start = initial_hyper(evidences);
    CHECK((start.mu - mean).norm() < 1e-12);
    CHECK(rel_frobenius(start.cov, scatter) < 1e-12);
}

TEST_CASE("eigenbasis_reduce: diagonal input sorts eigenvalues descending") {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(3, 3);
    sigma.diagonal() << 0.2, 0.9, 0.4;
    const auto chart = eigenbasis_reduce(sigma);
    CHECK(chart.eigenvalues[0] == doctest::Approx(0.9));
    CHECK(chart.eigenvalues[1] == doctest::Approx(0.4));
    CHECK(chart.eigenvalues[2] == doctest::Approx(0.2));
    // each basis column is a signed unit coordinate vector
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(chart.basis.col(j).cwiseAbs().maxCoeff() == doctest::Approx(1.0));
        CHECK(chart.basis.col(j).maxCoeff() == doctest::Approx(1.0));  // sign fixed positive
    }
}

TEST_CASE("eigenbasis_reduce: reconstructs the input and counts unknowns") {
    Rng rng(31);
    const Eigen::Index d = 5;  // n + 2 with n = 3
    const Eigen::MatrixXd sigma = random_spd(rng, d, 0.3);
    const auto chart = eigenbasis_reduce(sigma);
    CHECK(rel_frobenius(chart.covariance(), sigma) < 1e-10);
    const Eigen::Index charted_unknowns = d + chart.dim();
    const Eigen::Index full_unknowns = d + d * (d + 1) / 2;
    CHECK(charted_unknowns == 2 * d);                  // 2(n+2)
    CHECK(full_unknowns == (d) * (d + 3) / 2);         // (n+2)(n+5)/2
    CHECK(SigmaBasis::packed_triangle(d).count() == d * (d + 1) / 2);
}

TEST_CASE("map_estimate: equal covariances give uniform weights and the ensemble mean") {
    Rng rng(37);
    const Eigen::Index d = 3;
    const Eigen::MatrixXd shared = random_spd(rng, d, 0.2);
    std::vector<DatasetEvidence> evidences;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int s = 0; s < 5; ++s) {
        Eigen::VectorXd lambda = random_vector(rng, d);
        lambda.tail(d - 2).normalize();
        evidences.emplace_back(lambda, shared, "");
        mean += evidences.back().lambda_hat;
    }
    mean /= 5.0;
    const auto update = weighted_mu_update(evidences, random_spd(rng, d, 0.1));
    for (const auto& w : update.weights)
        CHECK(rel_frobenius(w, Eigen::MatrixXd::Identity(d, d) / 5.0) < 1e-10);
    CHECK((update.mu - mean).norm() < 1e-10);
}

TEST_CASE("map_estimate: zero identification covariance lands on mean and scatter") {
    Rng rng(41);
    const Eigen::Index d = 3;
    std::vector<DatasetEvidence> evidences;
    for (int s = 0; s < 8; ++s) {
        Eigen::VectorXd lambda = random_vector(rng, d);
        lambda.tail(d - 2).normalize();
        evidences.emplace_back(lambda, Eigen::MatrixXd::Zero(d, d), "");
    }
    const HyperParams start = initial_hyper(evidences);  // = (mean, scatter) exactly

    for (const bool chart_mode : {true, false}) {
        MapOptions options;
        options.use_chart = chart_mode;
        const auto result = map_estimate(evidences, std::nullopt, options);
        CHECK(result.converged);
        CHECK((result.psi.mu - start.mu).norm() < 1e-8);
        CHECK(rel_frobenius(result.psi.cov, start.cov) < 1e-8);
        CHECK(result.grad_mu_norm < 1e-6);
    }
}

TEST_CASE("map_estimate: synthetic hyper recovery within Laplace bounds") {
    Rng rng(43);
    const Eigen::Index n = 2, d = n + 2;
    // population truth
    Eigen::VectorXd mu_true(d);
    Eigen::VectorXd phi = Eigen::VectorXd::Ones(n).normalized();
    mu_true << 4.2, 0.05, phi;
    Eigen::MatrixXd cov_true = Eigen::MatrixXd::Zero(d, d);
    cov_true.diagonal() << 0.035 * 0.035, 0.005 * 0.005, 4e-6, 4e-6;

    std::vector<DatasetEvidence> evidences;
    for (int s = 0; s < 24; ++s) {
        const Eigen::VectorXd lambda =
            mu_true + psd_sqrt(cov_true) * random_vector(rng, d);
        const Eigen::MatrixXd id_cov = random_spd(rng, d, 2e-5);
        const Eigen::VectorXd lambda_hat = lambda + psd_sqrt(id_cov) * random_vector(rng, d);
        evidences.emplace_back(
            (Eigen::VectorXd(d) << lambda_hat.head(2), lambda_hat.tail(n).normalized())
                .finished(),
            id_cov, "s" + std::to_string(s));
    }
    const auto result = map_estimate(evidences);
    REQUIRE(result.converged);
    const auto laplace = hyper_laplace(result.psi, evidences,
                                       SigmaBasis::chart(*result.chart),
                                       result.clamped_coordinates);
    REQUIRE(laplace.positive_definite);
    const VectorXd sd = laplace.standard_deviations();
    for (Eigen::Index i = 0; i < d; ++i)
        CHECK(std::abs(result.psi.mu[i] - mu_true[i]) < 4.0 * sd[i] + 1e-6);
}

TEST_CASE("map_estimate: identical evidences hit the zero-variability boundary") {
    Rng rng(47);
    Eigen::VectorXd a = random_vector(rng, 3);
    a.tail(1).normalize();
    const Eigen::MatrixXd v = random_spd(rng, 3, 0.1);
    std::vector<DatasetEvidence> evidences(5, DatasetEvidence(a, v, "dup"));
    const auto result = map_estimate(evidences);
    CHECK(result.at_zero_boundary);
    CHECK(result.psi.cov.cwiseAbs().maxCoeff() == 0.0);
    CHECK((result.psi.mu - a).norm() < 1e-10);
    const auto pred = predictive(result.psi);
    CHECK(pred.degenerate);
}

TEST_CASE("dataset_conditional: zero hyper covariance means complete shrinkage") {
    Rng rng(53);
    const auto evidences = random_evidences(rng, 3, 4);
    const HyperParams psi(random_vector(rng, 3), Eigen::MatrixXd::Zero(3, 3));
    const Gaussian cond = dataset_conditional(1, evidences, psi);
    CHECK((cond.mean() - psi.mu).norm() < 1e-10);
    CHECK(cond.cov().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("dataset_conditional: huge hyper covariance means no pooling") {
    const std::vector<DatasetEvidence> evidences{scalar_evidence(0.7, 1.0)};
    const HyperParams psi((Eigen::VectorXd(1) << -5.0).finished(),
                          (Eigen::MatrixXd(1, 1) << 1e6).finished());
    const Gaussian cond = dataset_conditional(0, evidences, psi);
    CHECK(std::abs(cond.mean()[0] - 0.7) < 1e-5);
    CHECK(std::abs(cond.cov()(0, 0) - 1.0) < 1e-5);
}

TEST_CASE("dataset_conditional: never exceeds the dataset covariance (PSD order)") {
    Rng rng(59);
    const auto evidences = random_evidences(rng, 4, 6);
    const HyperParams psi(random_vector(rng, 4), random_spd(rng, 4, 0.3));
    for (std::size_t r = 0; r < evidences.size(); ++r) {
        const Gaussian cond = dataset_conditional(r, evidences, psi);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(evidences[r].cov - cond.cov(),
                                                          Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("predictive: returns the hyper Gaussian verbatim") {
    Rng rng(61);
    const HyperParams psi(random_vector(rng, 3), random_spd(rng, 3, 0.2));
    const auto pred = predictive(psi);
    CHECK(!pred.degenerate);
    CHECK((pred.dist.mean() - psi.mu).norm() == 0.0);
    CHECK(rel_frobenius(pred.dist.cov(), psi.cov) < 1e-15);
}

TEST_CASE("hyper_laplace: scalar case matches hand-computed curvature") {
    // d = 1, packed (μ, Σ): analytic Hessian blocks at (μ, s):
    //   H_μμ = Σ 1/A, H_μΣ = −Σ e/A², H_ΣΣ = Σ [−1/(2A²) + e²/A³], A = s+v, e = μ−λ̂
    const std::vector<DatasetEvidence> evidences{scalar_evidence(0.4, 0.5),
                                                 scalar_evidence(-0.6, 0.25)};
    const double mu = 0.1, s = 0.8;
    const HyperParams psi((Eigen::VectorXd(1) << mu).finished(),
                          (Eigen::MatrixXd(1, 1) << s).finished());
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(2, 2);
    for (const auto& ev : evidences) {
        const double a = s + ev.cov(0, 0);
        const double e = mu - ev.lambda_hat[0];
        want(0, 0) += 1.0 / a;
        want(0, 1) += -e / (a * a);
        want(1, 1) += -0.5 / (a * a) + e * e / (a * a * a);
    }
    want(1, 0) = want(0, 1);
    const Eigen::MatrixXd hess = hyper_hessian(psi, evidences);
    CHECK(rel_frobenius(hess, want) < 1e-12);

    const auto laplace = hyper_laplace(psi, evidences);
    if (laplace.positive_definite)
        CHECK(rel_frobenius(laplace.cov, want.inverse()) < 1e-10);
}

TEST_CASE("hyper_laplace: indefinite Hessian is flagged with a direction") {
    // all residuals zero: the Σ-block of the Hessian is negative definite
    const std::vector<DatasetEvidence> evidences{scalar_evidence(0.0, 1.0),
                                                 scalar_evidence(0.0, 1.0)};
    const HyperParams psi(Eigen::VectorXd::Zero(1),
                          (Eigen::MatrixXd(1, 1) << 1.0).finished());
    const auto laplace = hyper_laplace(psi, evidences);
    CHECK(!laplace.positive_definite);
    CHECK(laplace.offending_direction.size() == 2);
    CHECK(std::abs(laplace.offending_direction[1]) > 0.9);  // the Σ coordinate
}

TEST_CASE("hierarchy outputs are permutation invariant") {
    Rng rng(67);
    auto evidences = random_evidences(rng, 3, 6);
    const auto base = map_estimate(evidences);
    std::reverse(evidences.begin(), evidences.end());
    const auto flipped = map_estimate(evidences);
    CHECK((base.psi.mu - flipped.psi.mu).norm() < 1e-12 * (1.0 + base.psi.mu.norm()));
    CHECK(rel_frobenius(base.psi.cov, flipped.psi.cov) < 1e-10);
}

TEST_CASE("numdiff: quadratic toy recovers the analytic inverse curvature") {
    // L(θ) = (θ − a)²/(2v): the finite-difference machinery behind the
    // Laplace covariances must return cov = v exactly
    const double a = 0.7, v = 0.34;
    auto quadratic = [&](const Eigen::VectorXd& x) {
        return (x[0] - a) * (x[0] - a) / (2.0 * v);
    };
    const Eigen::MatrixXd hess =
        fd_hessian(quadratic, (Eigen::VectorXd(1) << a).finished(), 1e-3);
    CHECK(rel_err(1.0 / hess(0, 0), v) < 1e-8);
}

TEST_CASE("predictive: 95% intervals cover fresh draws at the nominal rate") {
    Rng rng(71);
    const Eigen::Index n = 2, d = n + 2;
    Eigen::VectorXd mu_true(d);
    mu_true << 4.2, 0.05, Eigen::VectorXd::Ones(n).normalized();
    Eigen::MatrixXd cov_true = Eigen::MatrixXd::Zero(d, d);
    cov_true.diagonal() << 0.035 * 0.035, 0.005 * 0.005, 9e-6, 9e-6;

    std::vector<DatasetEvidence> evidences;
    for (int s = 0; s < 40; ++s) {
        const Eigen::VectorXd lambda = mu_true + psd_sqrt(cov_true) * random_vector(rng, d);
        const Eigen::MatrixXd id_cov = random_spd(rng, d, 1e-5);
        Eigen::VectorXd lambda_hat = lambda + psd_sqrt(id_cov) * random_vector(rng, d);
        lambda_hat.tail(n).normalize();
        evidences.emplace_back(lambda_hat, id_cov, "");
    }
    const auto result = map_estimate(evidences);
    const auto pred = predictive(result.psi);
    const double center = pred.dist.mean()[0];
    const double sd = std::sqrt(pred.dist.cov()(0, 0));

    int covered = 0;
    const int fresh = 200;
    for (int i = 0; i < fresh; ++i) {
        const double f = mu_true[0] + std::sqrt(cov_true(0, 0)) * rng.normal();
        if (std::abs(f - center) <= 1.96 * sd) ++covered;
    }
    const double rate = covered / static_cast<double>(fresh);
    CHECK(rate >= 0.88);
    CHECK(rate <= 0.99);
}

TEST_CASE("hyper_laplace: SDs shrink like one over sqrt(N_D)") {
    const Eigen::Index d = 4;
    auto make_evidences = [&](int count, std::uint64_t seed) {
        Rng rng(seed);
        Eigen::VectorXd mu_true(d);
        mu_true << 4.2, 0.05, Eigen::VectorXd::Ones(2).normalized();
        Eigen::MatrixXd cov_true = Eigen::MatrixXd::Zero(d, d);
        cov_true.diagonal() << 1.2e-3, 2.5e-5, 1.6e-5, 1.6e-5;
        std::vector<DatasetEvidence> out;
        for (int s = 0; s < count; ++s) {
            const Eigen::VectorXd lambda =
                mu_true + psd_sqrt(cov_true) * random_vector(rng, d);
            const Eigen::MatrixXd id_cov = random_spd(rng, d, 5e-6);
            Eigen::VectorXd lambda_hat = lambda + psd_sqrt(id_cov) * random_vector(rng, d);
            lambda_hat.tail(2).normalize();
            out.emplace_back(lambda_hat, id_cov, "");
        }
        return out;
    };
    auto sd_mu_f = [&](int count, std::uint64_t seed) {
        const auto evidences = make_evidences(count, seed);
        const auto map = map_estimate(evidences);
        const auto hp = hyper_laplace(map.psi, evidences, SigmaBasis::chart(*map.chart),
                                      map.clamped_coordinates);
        REQUIRE(hp.positive_definite);
        return hp.standard_deviations()[0];
    };
    // average the ratio over a few draws to tame sampling noise
    double ratio = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed)
        ratio += sd_mu_f(80, 100 + seed) / sd_mu_f(40, 100 + seed);
    ratio /= 4.0;
    CHECK(ratio > (1.0 / std::sqrt(2.0)) * 0.85);
    CHECK(ratio < (1.0 / std::sqrt(2.0)) * 1.15);
}

#include "oma/tmcmc.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "oma/rng.hpp"

namespace oma {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// CoV of incremental weights exp(dp·shifted) for a candidate exponent step.
double weight_cov(const std::vector<double>& log_like, double dp) {
    const double peak = *std::max_element(log_like.begin(), log_like.end());
    double sum = 0.0, sum_sq = 0.0;
    for (const double ll : log_like) {
        const double w = std::isfinite(ll) ? std::exp(dp * (ll - peak)) : 0.0;
        sum += w;
        sum_sq += w * w;
    }
    const double n = static_cast<double>(log_like.size());
    const double mean = sum / n;
    const double var = std::max(sum_sq / n - mean * mean, 0.0);
    return mean > 0.0 ? std::sqrt(var) / mean : std::numeric_limits<double>::infinity();
}
}  // namespace

HyperParameterization HyperParameterization::chart(EigenbasisChart chart) {
    HyperParameterization out;
    out.dim_ = chart.dim();
    out.count_ = 2 * chart.dim();
    out.chart_ = std::move(chart);
    return out;
}

HyperParameterization HyperParameterization::correlation(Eigen::Index dim) {
    HyperParameterization out;
    out.dim_ = dim;
    out.count_ = dim + dim + dim * (dim - 1) / 2;
    return out;
}

HyperParams HyperParameterization::decode(const VectorXd& x) const {
    if (x.size() != count_) throw std::invalid_argument("HyperParameterization: bad coordinate count");
    const VectorXd mu = x.head(dim_);
    if (chart_) {
        const VectorXd eig = x.segment(dim_, dim_).cwiseMax(0.0);
        return HyperParams(mu, symmetrize(chart_->basis * eig.asDiagonal() *
                                          chart_->basis.transpose()));
    }
    const VectorXd sigmas = x.segment(dim_, dim_);
    MatrixXd rhos = MatrixXd::Zero(dim_, dim_);
    Eigen::Index k = 2 * dim_;
    for (Eigen::Index p = 1; p < dim_; ++p)
        for (Eigen::Index q = 0; q < p; ++q) rhos(p, q) = x[k++];
    return HyperParams(mu, assemble_covariance(CorrelationSpec(sigmas, rhos)));
}

VectorXd HyperParameterization::encode(const HyperParams& psi) const {
    VectorXd x(count_);
    x.head(dim_) = psi.mu;
    if (chart_) {
        x.segment(dim_, dim_) = SigmaBasis::chart(*chart_).coordinates_of(psi.cov);
        return x;
    }
    const VectorXd sd = psi.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    x.segment(dim_, dim_) = sd;
    Eigen::Index k = 2 * dim_;
    for (Eigen::Index p = 1; p < dim_; ++p)
        for (Eigen::Index q = 0; q < p; ++q) {
            const double denom = sd[p] * sd[q];
            x[k++] = denom > 0.0 ? std::clamp(psi.cov(p, q) / denom, -0.999, 0.999) : 0.0;
        }
    return x;
}

std::string HyperParameterization::label(Eigen::Index i) const {
    if (i < dim_) return "mu(" + std::to_string(i) + ")";
    if (chart_) return "eig(" + std::to_string(i - dim_) + ")";
    if (i < 2 * dim_) return "sigma(" + std::to_string(i - dim_) + ")";
    Eigen::Index k = 2 * dim_;
    for (Eigen::Index p = 1; p < dim_; ++p)
        for (Eigen::Index q = 0; q < p; ++q, ++k)
            if (k == i) return "rho(" + std::to_string(p) + "," + std::to_string(q) + ")";
    throw std::invalid_argument("HyperParameterization: label index out of range");
}

PriorBox default_prior_box(const HyperParameterization& param, double f_max) {
    const Eigen::Index d = param.dim();
    const Eigen::Index n = d - 2;
    VectorXd lo(param.parameter_count()), hi(param.parameter_count());
    lo[0] = 0.0;
    hi[0] = f_max;
    lo[1] = 0.0;
    hi[1] = 0.1;
    for (Eigen::Index i = 0; i < n; ++i) {
        lo[2 + i] = -1.0;
        hi[2 + i] = 1.0;
    }
    if (param.is_chart()) {
        for (Eigen::Index i = 0; i < d; ++i) {
            lo[d + i] = 0.0;
            hi[d + i] = 0.1;
        }
    } else {
        for (Eigen::Index i = 0; i < d; ++i) {
            lo[d + i] = 0.0;
            hi[d + i] = std::sqrt(0.1);
        }
        for (Eigen::Index i = 2 * d; i < param.parameter_count(); ++i) {
            lo[i] = -1.0;
            hi[i] = 1.0;
        }
    }
    return PriorBox(std::move(lo), std::move(hi));
}

HyperSampleSet sample_hyper(const std::vector<DatasetEvidence>& evidences,
                            const PriorBox& prior_box, const HyperParameterization& param,
                            std::uint64_t seed, const TmcmcOptions& options) {
    if (options.sample_count < 100)
        throw std::invalid_argument("sample_hyper: need N_s >= 100");
    if (prior_box.dim() != param.parameter_count())
        throw std::invalid_argument("sample_hyper: prior box does not match parameterization");
    const int n_s = options.sample_count;

    // N_D = 0: the target degenerates to the uniform prior over the box
    auto log_likelihood = [&](const VectorXd& x) -> double {
        if (!prior_box.contains(x)) return kNegInf;
        if (evidences.empty()) return 0.0;
        try {
            return -hyper_nll(param.decode(x), evidences);
        } catch (const std::exception&) {
            return kNegInf;  // non-PD correlation or singular sum
        }
    };

    std::vector<VectorXd> samples(static_cast<std::size_t>(n_s));
    std::vector<double> log_like(static_cast<std::size_t>(n_s));
    {
        Rng rng = Rng::stream(seed, 0x5EED, 0);
        for (int i = 0; i < n_s; ++i) {
            VectorXd x(prior_box.dim());
            for (Eigen::Index c = 0; c < prior_box.dim(); ++c)
                x[c] = rng.uniform(prior_box.lo[c], prior_box.hi[c]);
            samples[static_cast<std::size_t>(i)] = std::move(x);
            log_like[static_cast<std::size_t>(i)] =
                log_likelihood(samples[static_cast<std::size_t>(i)]);
        }
    }
    if (std::none_of(log_like.begin(), log_like.end(),
                     [](double v) { return std::isfinite(v); }))
        throw std::runtime_error(
            "sample_hyper: degenerate stage — prior box excludes all likelihood mass");

    std::vector<double> exponents{0.0};
    double exponent = 0.0;
    int stage = 0;
    while (exponent < 1.0) {
        if (++stage > options.max_stages)
            throw std::runtime_error("sample_hyper: tempering failed to reach exponent 1");

        // exponent step with incremental-weight CoV ≈ target, else jump to 1
        double dp = 1.0 - exponent;
        if (weight_cov(log_like, dp) > options.target_weight_cov) {
            double lo = 0.0, hi = dp;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                (weight_cov(log_like, mid) > options.target_weight_cov ? hi : lo) = mid;
            }
            dp = 0.5 * (lo + hi);
        }
        const double next_exponent = std::min(exponent + dp, 1.0);

        const double peak = *std::max_element(log_like.begin(), log_like.end());
        std::vector<double> weights(static_cast<std::size_t>(n_s));
        double total = 0.0;
        for (int i = 0; i < n_s; ++i) {
            const double ll = log_like[static_cast<std::size_t>(i)];
            weights[static_cast<std::size_t>(i)] =
                std::isfinite(ll) ? std::exp(dp * (ll - peak)) : 0.0;
            total += weights[static_cast<std::size_t>(i)];
        }
        if (!(total > 0.0))
            throw std::runtime_error("sample_hyper: degenerate stage — all weights zero");

        // weighted mean/covariance for the within-stage proposal
        const Eigen::Index dim = prior_box.dim();
        VectorXd w_mean = VectorXd::Zero(dim);
        for (int i = 0; i < n_s; ++i)
            w_mean += weights[static_cast<std::size_t>(i)] * samples[static_cast<std::size_t>(i)];
        w_mean /= total;
        MatrixXd w_cov = MatrixXd::Zero(dim, dim);
        for (int i = 0; i < n_s; ++i) {
            const VectorXd r = samples[static_cast<std::size_t>(i)] - w_mean;
            w_cov += weights[static_cast<std::size_t>(i)] * (r * r.transpose());
        }
        w_cov = symmetrize(w_cov / total);
        const MatrixXd proposal_root =
            options.proposal_scale * psd_sqrt(w_cov);

        // multinomial resampling into per-lead multiplicities
        std::vector<double> cumulative(weights.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            cumulative[i] = acc;
        }
        Rng resample_rng = Rng::stream(seed, 0xAE5A, static_cast<std::uint64_t>(stage));
        std::vector<int> multiplicity(weights.size(), 0);
        for (int i = 0; i < n_s; ++i) {
            const double u = resample_rng.uniform01() * total;
            const std::size_t pick = static_cast<std::size_t>(
                std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
            ++multiplicity[std::min(pick, weights.size() - 1)];
        }

        // each lead runs a persistent Metropolis chain at the new exponent,
        // emitting one sample per multiplicity count: heavily-weighted leads
        // walk deep chains, which is what migrates the population. Chains are
        // independent per lead (stream keyed by stage and lead), so any
        // scheduling reproduces the same samples. Box violations reject.
        std::vector<VectorXd> next_samples;
        std::vector<double> next_log_like;
        next_samples.reserve(static_cast<std::size_t>(n_s));
        next_log_like.reserve(static_cast<std::size_t>(n_s));
        for (std::size_t lead = 0; lead < multiplicity.size(); ++lead) {
            if (multiplicity[lead] == 0) continue;
            Rng chain_rng = Rng::stream(seed + static_cast<std::uint64_t>(stage) * 0x10001,
                                        0xC4A1, static_cast<std::uint64_t>(lead));
            VectorXd x = samples[lead];
            double ll = log_like[lead];
            for (int emit = 0; emit < multiplicity[lead]; ++emit) {
                for (int step = 0; step < options.mh_steps_per_sample; ++step) {
                    VectorXd z(dim);
                    for (Eigen::Index c = 0; c < dim; ++c) z[c] = chain_rng.normal();
                    const VectorXd cand = x + proposal_root * z;
                    const double cand_ll = log_likelihood(cand);
                    if (!std::isfinite(cand_ll)) continue;
                    const double log_accept = next_exponent * (cand_ll - ll);
                    if (log_accept >= 0.0 || chain_rng.uniform01() < std::exp(log_accept)) {
                        x = cand;
                        ll = cand_ll;
                    }
                }
                next_samples.push_back(x);
                next_log_like.push_back(ll);
            }
        }

        samples = std::move(next_samples);
        log_like = std::move(next_log_like);
        exponent = next_exponent;
        exponents.push_back(exponent);
    }

    HyperSampleSet out;
    out.samples = std::move(samples);
    out.log_target_values = std::move(log_like);
    out.stage_exponents = std::move(exponents);
    out.rng_seed = seed;
    out.parameterization = param;
    return out;
}

MixtureMoments mixture_conditional(const HyperSampleSet& sample_set,
                                   const DatasetEvidence& evidence_r) {
    if (sample_set.size() == 0) throw std::invalid_argument("mixture_conditional: empty samples");
    const Eigen::Index d = evidence_r.dim();
    MixtureMoments out;
    out.mixture.components.reserve(sample_set.size());
    VectorXd mean_acc = VectorXd::Zero(d);
    MatrixXd second_acc = MatrixXd::Zero(d, d);
    for (std::size_t m = 0; m < sample_set.size(); ++m) {
        const HyperParams psi = sample_set.decode(m);
        auto llt = safe_llt(evidence_r.cov + psi.cov, "mixture_conditional (Σ̂_r+Σ^(m))");
        const MatrixXd gain = llt.solve(evidence_r.cov).transpose();
        const VectorXd mean =
            evidence_r.lambda_hat + gain * (psi.mu - evidence_r.lambda_hat);
        const MatrixXd cov = clip_to_psd(evidence_r.cov - gain * evidence_r.cov);
        mean_acc += mean;
        second_acc += mean * mean.transpose() + cov;
        out.mixture.components.emplace_back(mean, cov);
    }
    const double inv = 1.0 / static_cast<double>(sample_set.size());
    out.mean = inv * mean_acc;
    out.cov = symmetrize(inv * second_acc - out.mean * out.mean.transpose());
    return out;
}

MixtureMoments mixture_predictive(const HyperSampleSet& sample_set) {
    if (sample_set.size() == 0) throw std::invalid_argument("mixture_predictive: empty samples");
    const Eigen::Index d = sample_set.decode(0).dim();
    MixtureMoments out;
    out.mixture.components.reserve(sample_set.size());
    VectorXd mean_acc = VectorXd::Zero(d);
    MatrixXd second_acc = MatrixXd::Zero(d, d);
    for (std::size_t m = 0; m < sample_set.size(); ++m) {
        const HyperParams psi = sample_set.decode(m);
        mean_acc += psi.mu;
        second_acc += psi.mu * psi.mu.transpose() + psi.cov;
        out.mixture.components.emplace_back(psi.mu, psi.cov);
    }
    const double inv = 1.0 / static_cast<double>(sample_set.size());
    out.mean = inv * mean_acc;
    out.cov = symmetrize(inv * second_acc - out.mean * out.mean.transpose());
    return out;
}

std::function<double(double, double)> diagonal_pairwise_target(
    const std::vector<DatasetEvidence>& evidences, Eigen::Index p,
    std::pair<double, double> mu_bounds, std::pair<double, double> var_bounds) {
    if (evidences.empty()) throw std::invalid_argument("diagonal_pairwise_target: no evidences");
    std::vector<double> centers, variances;
    for (const auto& ev : evidences) {
        if (p < 0 || p >= ev.dim())
            throw std::invalid_argument("diagonal_pairwise_target: coordinate out of range");
        MatrixXd off = ev.cov;
        off.diagonal().setZero();
        if (off.cwiseAbs().maxCoeff() > 1e-12 * ev.cov.trace())
            throw std::invalid_argument(
                "diagonal_pairwise_target: evidence covariance not diagonal — use the full target");
        centers.push_back(ev.lambda_hat[p]);
        variances.push_back(ev.cov(p, p));
    }
    return [centers, variances, mu_bounds, var_bounds](double mu_p, double var_p) {
        if (mu_p <= mu_bounds.first || mu_p >= mu_bounds.second || var_p <= var_bounds.first ||
            var_p >= var_bounds.second)
            return kNegInf;
        double total = 0.0;
        for (std::size_t s = 0; s < centers.size(); ++s) {
            const double v = var_p + variances[s];
            const double r = mu_p - centers[s];
            total += -0.5 * (std::log(2.0 * std::numbers::pi * v) + r * r / v);
        }
        return total;
    };
}

}  // namespace oma

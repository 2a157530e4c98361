#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "oma/hierarchical.hpp"
#include "oma/modal_likelihood.hpp"
#include "oma/project_io.hpp"
#include "oma/spectral.hpp"
#include "oma/synth.hpp"
#include "oma/tmcmc.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace oma;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitComputation = 3;

struct CliError : std::runtime_error {
    CliError(int code_, const std::string& msg) : std::runtime_error(msg), code(code_) {}
    int code;
};

struct ProjectConfig {
    std::vector<std::string> dataset_files;
    std::vector<FrequencyBand> bands;
    std::string out_dir = "out";
    std::string algorithm = "laplace";
    int sample_count = 2000;
    std::uint64_t seed = 0;
    bool chart = true;
    int threads = 1;
    bool normalize_mode_shape = false;
    double prior_f_max = 25.0;
};

ProjectConfig load_project(const ConfigFile& cfg) {
    ProjectConfig out;
    if (cfg.has("project", "datasets"))
        out.dataset_files = cfg.get_list("project", "datasets");
    if (cfg.has("project", "dataset_dir")) {
        std::vector<std::string> found;
        for (const auto& entry : fs::directory_iterator(cfg.get("project", "dataset_dir")))
            if (entry.path().extension() == ".csv") found.push_back(entry.path().string());
        std::sort(found.begin(), found.end());
        out.dataset_files.insert(out.dataset_files.end(), found.begin(), found.end());
    }
    out.out_dir = cfg.get_or("project", "out_dir", "out");
    for (const auto& section : cfg.sections_matching("band")) {
        out.bands.emplace_back(cfg.get_double(section, "f_lb"), cfg.get_double(section, "f_ub"));
    }
    std::sort(out.bands.begin(), out.bands.end(),
              [](const FrequencyBand& a, const FrequencyBand& b) { return a.f_lb < b.f_lb; });
    for (std::size_t i = 1; i < out.bands.size(); ++i)
        if (out.bands[i].f_lb <= out.bands[i - 1].f_ub)
            throw CliError(kExitConfig, "config: bands overlap");
    out.algorithm = cfg.get_or("algorithm", "method", "laplace");
    if (out.algorithm != "laplace" && out.algorithm != "tmcmc")
        throw CliError(kExitConfig, "config: algorithm must be laplace or tmcmc");
    out.sample_count = static_cast<int>(cfg.get_int_or("algorithm", "ns", 2000));
    out.seed = static_cast<std::uint64_t>(cfg.get_int_or("algorithm", "seed", 0));
    out.chart = cfg.get_flag_or("algorithm", "chart", true);
    out.threads = static_cast<int>(cfg.get_int_or("algorithm", "threads", 1));
    out.normalize_mode_shape = cfg.get_flag_or("algorithm", "normalize_mode_shape", false);
    out.prior_f_max = cfg.get_double_or("prior", "f_max", 25.0);
    return out;
}

std::vector<TimeHistory> load_datasets(const ProjectConfig& project) {
    if (project.dataset_files.empty())
        throw CliError(kExitConfig, "config: no datasets listed");
    std::vector<TimeHistory> records;
    records.reserve(project.dataset_files.size());
    for (const auto& path : project.dataset_files) {
        try {
            records.push_back(read_record_csv(path));
        } catch (const std::exception& ex) {
            throw CliError(kExitConfig, ex.what());
        }
    }
    for (const auto& r : records) {
        if (r.channels() != records.front().channels() || r.dt != records.front().dt)
            throw CliError(kExitConfig, "datasets disagree on channel count or dt");
    }
    for (const auto& band : project.bands)
        if (band.f_ub >= records.front().nyquist())
            throw CliError(kExitConfig, "config: band exceeds the Nyquist frequency");
    return records;
}

json vector_to_json(const VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

json matrix_to_json(const MatrixXd& m) {  // row-major, full
    json arr = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
    return arr;
}

VectorXd vector_from_json(const json& arr) {
    VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i];
    return v;
}

MatrixXd matrix_from_json(const json& arr, Eigen::Index rows) {
    MatrixXd m(rows, rows);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < rows; ++c)
            m(r, c) = arr[static_cast<std::size_t>(r * rows + c)];
    return m;
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw CliError(kExitComputation, "cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

std::string dataset_label(const std::string& file) {
    return fs::path(file).stem().string();
}

// ---------------------------------------------------------------- spectrum

int cmd_spectrum(const ProjectConfig& project) {
    const auto records = load_datasets(project);
    const auto spectrum = singular_value_spectrum(records);
    fs::create_directories(project.out_dir);
    const fs::path path = fs::path(project.out_dir) / "spectrum.csv";
    std::ofstream out(path);
    if (!out) throw CliError(kExitComputation, "cannot write " + path.string());
    out << "freq_hz";
    for (Eigen::Index c = 0; c < spectrum.values.cols(); ++c) out << ",sv_" << (c + 1);
    out << "\n";
    for (std::size_t k = 0; k < spectrum.freqs.size(); ++k) {
        out << format_double(spectrum.freqs[k]);
        for (Eigen::Index c = 0; c < spectrum.values.cols(); ++c)
            out << ',' << format_double(spectrum.values(static_cast<Eigen::Index>(k), c));
        out << "\n";
    }
    std::cout << "spectrum: " << path.string() << " (" << spectrum.freqs.size() << " bins, "
              << spectrum.values.cols() << " singular values)\n";
    return kExitOk;
}

// ---------------------------------------------------------------- identify

struct IdentifyOutcome {
    json record;       // evidence record (empty when hard-failed)
    std::string file;  // written path ("" when hard-failed)
    std::string error;
    bool ok = false;
    bool converged = false;
};

IdentifyOutcome identify_one(const TimeHistory& record, const std::string& label,
                             const FrequencyBand& band, int band_index,
                             const std::string& out_dir) {
    IdentifyOutcome outcome;
    try {
        const auto lines = band_select(scaled_fft(record), band);
        const auto start = initial_guess(lines, record.response_order);
        const auto fit = mpv(lines, start, record.response_order);

        json doc;
        doc["dataset_id"] = label;
        doc["band"] = {{"f_lb", band.f_lb}, {"f_ub", band.f_ub}};
        doc["theta_hat"] = {{"f", fit.theta.f},
                            {"xi", fit.theta.xi},
                            {"phi", vector_to_json(fit.theta.phi)},
                            {"S", fit.theta.S},
                            {"Se", fit.theta.Se}};
        if (fit.converged) {
            const auto posterior = laplace(fit.theta, lines, record.response_order);
            doc["covariance"] = matrix_to_json(posterior.cov);
        } else {
            doc["covariance"] =
                matrix_to_json(MatrixXd::Zero(fit.theta.channels() + 4,
                                              fit.theta.channels() + 4));
        }
        doc["converged"] = fit.converged;
        doc["iterations"] = fit.iterations;
        doc["final_nll"] = fit.final_nll;

        const fs::path file =
            fs::path(out_dir) / ("evidence_mode" + std::to_string(band_index) + "_" + label +
                                 ".json");
        write_json(file, doc);
        outcome.record = std::move(doc);
        outcome.file = file.string();
        outcome.ok = true;
        outcome.converged = fit.converged;
        if (!fit.converged) outcome.error = "identification did not converge";
    } catch (const std::exception& ex) {
        outcome.error = ex.what();
    }
    return outcome;
}

int cmd_identify(const ProjectConfig& project) {
    if (project.bands.empty()) throw CliError(kExitConfig, "config: no bands configured");
    if (project.dataset_files.empty())
        throw CliError(kExitConfig, "config: no datasets listed");
    fs::create_directories(project.out_dir);

    // fault isolation: a dataset that fails to parse is reported, not fatal
    std::vector<std::optional<TimeHistory>> records(project.dataset_files.size());
    std::vector<std::string> read_errors(project.dataset_files.size());
    for (std::size_t i = 0; i < project.dataset_files.size(); ++i) {
        try {
            records[i] = read_record_csv(project.dataset_files[i]);
        } catch (const std::exception& ex) {
            read_errors[i] = ex.what();
        }
    }

    const int n_jobs = static_cast<int>(records.size());
    std::vector<std::vector<IdentifyOutcome>> outcomes(
        static_cast<std::size_t>(n_jobs),
        std::vector<IdentifyOutcome>(project.bands.size()));

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int job = next.fetch_add(1); job < n_jobs; job = next.fetch_add(1)) {
            const auto& maybe = records[static_cast<std::size_t>(job)];
            if (!maybe) continue;
            const std::string label =
                dataset_label(project.dataset_files[static_cast<std::size_t>(job)]);
            for (std::size_t b = 0; b < project.bands.size(); ++b)
                outcomes[static_cast<std::size_t>(job)][b] = identify_one(
                    *maybe, label, project.bands[b], static_cast<int>(b + 1), project.out_dir);
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::max(1, project.threads);
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    json report;
    report["datasets"] = static_cast<int>(records.size());
    report["bands"] = static_cast<int>(project.bands.size());
    json modes = json::array();
    int succeeded = 0, attempted = 0;
    json failures = json::array();
    for (std::size_t b = 0; b < project.bands.size(); ++b) {
        json mode;
        mode["index"] = static_cast<int>(b + 1);
        mode["band"] = {{"f_lb", project.bands[b].f_lb}, {"f_ub", project.bands[b].f_ub}};
        json files = json::array();
        for (std::size_t i = 0; i < records.size(); ++i) {
            ++attempted;
            if (!records[i]) {
                failures.push_back({{"dataset", project.dataset_files[i]},
                                    {"band", static_cast<int>(b + 1)},
                                    {"error", read_errors[i]}});
                continue;
            }
            const auto& outcome = outcomes[i][b];
            if (outcome.ok) {
                files.push_back(outcome.file);
                if (outcome.converged)
                    ++succeeded;
                else
                    failures.push_back({{"dataset", project.dataset_files[i]},
                                        {"band", static_cast<int>(b + 1)},
                                        {"error", outcome.error}});
            } else {
                failures.push_back({{"dataset", project.dataset_files[i]},
                                    {"band", static_cast<int>(b + 1)},
                                    {"error", outcome.error}});
            }
        }
        mode["records"] = files;
        modes.push_back(mode);
    }
    report["modes"] = modes;
    report["converged"] = succeeded;
    report["failures"] = failures;
    write_json(fs::path(project.out_dir) / "evidence_manifest.json", report);

    std::cout << "identify: " << succeeded << "/" << attempted << " converged";
    if (!failures.empty()) std::cout << " (" << failures.size() << " warnings)";
    std::cout << "\n";
    if (succeeded == 0) throw CliError(kExitComputation, "identification failed for all inputs");
    return kExitOk;
}

// -------------------------------------------------------------------- fuse

struct LoadedEvidence {
    DatasetEvidence evidence;
    bool converged = false;
};

std::optional<LoadedEvidence> read_evidence_file(const std::string& path,
                                                 std::vector<std::string>& warnings) {
    std::ifstream in(path);
    if (!in) {
        warnings.push_back("cannot read evidence file " + path);
        return std::nullopt;
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        warnings.push_back("evidence file is not valid JSON: " + path);
        return std::nullopt;
    }
    try {
        const auto& theta = doc.at("theta_hat");
        const VectorXd phi = vector_from_json(theta.at("phi"));
        const Eigen::Index dim = phi.size() + 4;
        const MatrixXd cov = matrix_from_json(doc.at("covariance"), dim);
        VectorXd lambda(phi.size() + 2);
        lambda << theta.at("f").get<double>(), theta.at("xi").get<double>(), phi;
        LoadedEvidence loaded{
            DatasetEvidence(lambda, cov.topLeftCorner(phi.size() + 2, phi.size() + 2),
                            doc.at("dataset_id").get<std::string>()),
            doc.at("converged").get<bool>()};
        return loaded;
    } catch (const std::exception& ex) {
        warnings.push_back("evidence file " + path + ": " + ex.what());
        return std::nullopt;
    }
}

/// Tolerant sign alignment: mismatching datasets are dropped with a warning
/// instead of aborting the whole mode.
std::vector<DatasetEvidence> align_tolerant(std::vector<DatasetEvidence> evidences,
                                            std::vector<std::string>& warnings) {
    std::vector<DatasetEvidence> kept;
    for (auto& ev : evidences) {
        if (kept.empty()) {
            kept.push_back(std::move(ev));
            continue;
        }
        const double dot = ev.mode_shape().dot(kept.front().mode_shape());
        if (std::abs(dot) < 0.2) {
            warnings.push_back("dataset '" + ev.dataset_id +
                               "' mode shape nearly orthogonal to the reference; dropped");
            continue;
        }
        std::vector<DatasetEvidence> pair{kept.front(), std::move(ev)};
        kept.push_back(align_mode_signs(std::move(pair))[1]);
    }
    return kept;
}

json gaussian_summary(const VectorXd& mean, const MatrixXd& cov) {
    return {{"mean", vector_to_json(mean)},
            {"sd", vector_to_json(cov.diagonal().cwiseMax(0.0).cwiseSqrt())},
            {"covariance", matrix_to_json(cov)}};
}

int fuse_or_predict(const ProjectConfig& project, bool predictive_only,
                    const std::string& configured_out_dir) {
    // an --out override redirects where reports go; the evidence manifest is
    // read from the override when present there, else from the configured dir
    fs::path manifest_path = fs::path(project.out_dir) / "evidence_manifest.json";
    if (!fs::exists(manifest_path))
        manifest_path = fs::path(configured_out_dir) / "evidence_manifest.json";
    std::ifstream manifest_in(manifest_path);
    if (!manifest_in)
        throw CliError(kExitConfig,
                       "missing " + manifest_path.string() + " — run identify first");
    const json manifest = json::parse(manifest_in);
    fs::create_directories(project.out_dir);

    int fused_modes = 0;
    for (const auto& mode : manifest.at("modes")) {
        const int index = mode.at("index").get<int>();
        std::vector<std::string> warnings;
        std::vector<DatasetEvidence> evidences;
        for (const auto& file : mode.at("records")) {
            auto loaded = read_evidence_file(file.get<std::string>(), warnings);
            if (!loaded) continue;
            if (!loaded->converged) {
                warnings.push_back("dataset '" + loaded->evidence.dataset_id +
                                   "' skipped: identification did not converge");
                continue;
            }
            evidences.push_back(std::move(loaded->evidence));
        }
        if (evidences.size() < 2) {
            std::cerr << "fuse: mode " << index << " has fewer than 2 usable evidence records\n";
            continue;
        }
        evidences = align_tolerant(std::move(evidences), warnings);
        if (evidences.size() < 2) {
            std::cerr << "fuse: mode " << index << " lost too many records to alignment\n";
            continue;
        }

        jitter_event_count().store(0);
        MapOptions options;
        options.use_chart = project.chart;
        const auto map = map_estimate(evidences, std::nullopt, options);
        const SigmaBasis basis = map.chart ? SigmaBasis::chart(*map.chart)
                                           : SigmaBasis::packed_triangle(map.psi.dim());
        const auto hyper_post =
            hyper_laplace(map.psi, evidences, basis, map.clamped_coordinates);
        const auto pred = predictive(map.psi);

        const Eigen::Index n = evidences.front().channels();
        VectorXd mu_report = map.psi.mu;
        const double mu_phi_norm = mu_report.tail(n).norm();
        if (project.normalize_mode_shape && mu_phi_norm > 0.0)
            mu_report.tail(n) /= mu_phi_norm;

        json doc;
        doc["mode"] = index;
        doc["band"] = mode.at("band");
        doc["algorithm"] = project.algorithm;
        doc["dataset_count"] = static_cast<int>(evidences.size());
        doc["map"] = {{"mu", vector_to_json(mu_report)},
                      {"covariance", matrix_to_json(map.psi.cov)},
                      {"converged", map.converged},
                      {"iterations", map.iterations},
                      {"final_nll", map.final_nll},
                      {"grad_mu_norm", map.grad_mu_norm},
                      {"at_zero_boundary", map.at_zero_boundary},
                      {"mu_phi_norm", mu_phi_norm},
                      {"chart", map.chart.has_value()}};
        json labels = json::array();
        for (const auto& label : hyper_post.labels) labels.push_back(label);
        doc["hyper_laplace"] = {
            {"labels", labels},
            {"sd", vector_to_json(hyper_post.standard_deviations())},
            {"positive_definite", hyper_post.positive_definite},
            {"boundary_coordinates", hyper_post.boundary_coordinates}};
        if (!hyper_post.positive_definite) {
            doc["hyper_laplace"]["offending_direction"] =
                vector_to_json(hyper_post.offending_direction);
            warnings.push_back(
                "hyper Hessian indefinite: Laplace approximation of the hyper posterior "
                "is unreliable for mode " +
                std::to_string(index));
        }

        // with few datasets the full-data hyper posterior is a poor stand-in
        // for the leave-one-out one; below 10 records each conditional gets
        // its own MAP over the remaining records
        const bool leave_one_out = evidences.size() < 10;
        auto conditioning_psi = [&](std::size_t r) {
            if (!leave_one_out) return map.psi;
            std::vector<DatasetEvidence> rest;
            for (std::size_t s = 0; s < evidences.size(); ++s)
                if (s != r) rest.push_back(evidences[s]);
            return map_estimate(rest, std::nullopt, options).psi;
        };
        if (!predictive_only) {
            json conditionals = json::array();
            for (std::size_t r = 0; r < evidences.size(); ++r) {
                const Gaussian cond = dataset_conditional(r, evidences, conditioning_psi(r));
                json entry = {{"dataset_id", evidences[r].dataset_id}};
                entry.update(gaussian_summary(cond.mean(), cond.cov()));
                conditionals.push_back(entry);
            }
            doc["conditional"] = conditionals;
            if (leave_one_out)
                warnings.push_back(
                    "fewer than 10 records: conditionals use exact leave-one-out hyper MAPs");
        }
        json pred_json = gaussian_summary(pred.dist.mean(), pred.dist.cov());
        pred_json["degenerate"] = pred.degenerate;
        doc["predictive"] = pred_json;

        if (project.algorithm == "tmcmc") {
            const auto param = map.chart
                                   ? HyperParameterization::chart(*map.chart)
                                   : HyperParameterization::correlation(map.psi.dim());
            const PriorBox box = default_prior_box(param, project.prior_f_max);
            TmcmcOptions tmcmc_options;
            tmcmc_options.sample_count = project.sample_count;
            const auto samples =
                sample_hyper(evidences, box, param, project.seed, tmcmc_options);

            const fs::path sample_file =
                fs::path(project.out_dir) / ("samples_mode" + std::to_string(index) + ".csv");
            std::ofstream sample_out(sample_file);
            for (std::size_t m = 0; m < samples.size(); ++m) {
                for (Eigen::Index c = 0; c < samples.samples[m].size(); ++c) {
                    if (c) sample_out << ',';
                    sample_out << format_double(samples.samples[m][c]);
                }
                sample_out << "\n";
            }

            const auto pred_mix = mixture_predictive(samples);
            json tm;
            tm["sample_count"] = static_cast<int>(samples.size());
            tm["stages"] = static_cast<int>(samples.stage_exponents.size());
            tm["sample_file"] = sample_file.string();
            tm["predictive"] = gaussian_summary(pred_mix.mean, pred_mix.cov);
            if (!predictive_only) {
                json cond = json::array();
                for (std::size_t r = 0; r < evidences.size(); ++r) {
                    // leave-one-out sampling below the same 10-record threshold
                    const HyperSampleSet* set = &samples;
                    std::optional<HyperSampleSet> loo;
                    if (leave_one_out) {
                        std::vector<DatasetEvidence> rest;
                        for (std::size_t s = 0; s < evidences.size(); ++s)
                            if (s != r) rest.push_back(evidences[s]);
                        loo = sample_hyper(rest, box, param,
                                           project.seed + 1 + static_cast<std::uint64_t>(r),
                                           tmcmc_options);
                        set = &*loo;
                    }
                    const auto mix = mixture_conditional(*set, evidences[r]);
                    json entry = {{"dataset_id", evidences[r].dataset_id}};
                    entry.update(gaussian_summary(mix.mean, mix.cov));
                    cond.push_back(entry);
                }
                tm["conditional"] = cond;
            }
            doc["tmcmc"] = tm;
        }

        doc["jitter_events"] = jitter_event_count().load();
        json warn_json = json::array();
        for (const auto& w : warnings) warn_json.push_back(w);
        doc["warnings"] = warn_json;

        const std::string stem = predictive_only ? "predict_mode" : "fusion_mode";
        write_json(fs::path(project.out_dir) / (stem + std::to_string(index) + ".json"), doc);

        if (!predictive_only) {
            // per-dataset λ̂ with identification error bars (scatter-plot data)
            const fs::path csv_path =
                fs::path(project.out_dir) /
                ("fusion_mode" + std::to_string(index) + "_datasets.csv");
            std::ofstream csv(csv_path);
            csv << "dataset_id,f,sd_f,xi,sd_xi";
            for (Eigen::Index c = 0; c < n; ++c)
                csv << ",phi_" << (c + 1) << ",sd_phi_" << (c + 1);
            csv << "\n";
            for (const auto& ev : evidences) {
                const VectorXd sd = ev.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
                csv << ev.dataset_id;
                for (Eigen::Index i = 0; i < ev.dim(); ++i)
                    csv << ',' << format_double(ev.lambda_hat[i]) << ','
                        << format_double(sd[i]);
                csv << "\n";
            }
        }

        ++fused_modes;
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        std::cout << (predictive_only ? "predict" : "fuse") << ": mode " << index << " done ("
                  << evidences.size() << " datasets)\n";
    }
    if (fused_modes == 0) throw CliError(kExitComputation, "no mode could be fused");
    return kExitOk;
}

// ------------------------------------------------------------------- synth

int cmd_synth(const ConfigFile& cfg, const std::string& out_override,
              std::optional<std::uint64_t> seed_override) {
    const int n = static_cast<int>(cfg.get_int("synth", "n"));
    const Eigen::Index steps = cfg.get_int("synth", "samples");
    const double dt = cfg.get_double("synth", "dt");
    const int q = static_cast<int>(cfg.get_int_or("synth", "q", 0));
    const int n_d = static_cast<int>(cfg.get_int("synth", "nd"));
    const std::uint64_t seed = seed_override.value_or(
        static_cast<std::uint64_t>(cfg.get_int_or("synth", "seed", 0)));

    VectorXd mu(n + 2);
    mu[0] = cfg.get_double("synth", "mu_f");
    mu[1] = cfg.get_double("synth", "mu_xi");
    const auto mu_phi = cfg.get_doubles("synth", "mu_phi");
    if (static_cast<int>(mu_phi.size()) != n)
        throw CliError(kExitConfig, "config: mu_phi needs one entry per channel");
    for (int c = 0; c < n; ++c) mu[2 + c] = mu_phi[static_cast<std::size_t>(c)];
    mu.tail(n).normalize();

    MatrixXd cov = MatrixXd::Zero(n + 2, n + 2);
    cov(0, 0) = std::pow(cfg.get_double("synth", "sig_f"), 2);
    cov(1, 1) = std::pow(cfg.get_double("synth", "sig_xi"), 2);
    auto sig_phi = cfg.get_doubles("synth", "sig_phi");
    if (sig_phi.size() == 1) sig_phi.assign(static_cast<std::size_t>(n), sig_phi[0]);
    if (static_cast<int>(sig_phi.size()) != n)
        throw CliError(kExitConfig, "config: sig_phi needs 1 or n entries");
    for (int c = 0; c < n; ++c) cov(2 + c, 2 + c) = sig_phi[static_cast<std::size_t>(c)] *
                                                    sig_phi[static_cast<std::size_t>(c)];

    const auto s_range = cfg.get_doubles("synth", "s_range");
    const auto se_range = cfg.get_doubles("synth", "se_range");
    if (s_range.size() != 2 || se_range.size() != 2)
        throw CliError(kExitConfig, "config: s_range and se_range need two entries");

    const SynthScenario scenario(HyperParams(mu, cov), n, steps, dt, {s_range[0], s_range[1]},
                                 {se_range[0], se_range[1]}, n_d, q, seed);

    const std::string out_dir = !out_override.empty()
                                    ? out_override
                                    : cfg.get_or("synth", "out_dir", "synth_out");
    fs::create_directories(out_dir);

    json truth;
    truth["scenario"] = {{"n", n},       {"samples", steps}, {"dt", dt},
                         {"q", q},       {"nd", n_d},        {"seed", seed}};
    truth["hyper"] = {{"mu", vector_to_json(mu)}, {"covariance", matrix_to_json(cov)}};
    json datasets = json::array();
    for (int s = 0; s < n_d; ++s) {
        const ModalParams theta = draw_dataset_params(scenario, s);
        const TimeHistory record = generate_time_history(theta, scenario, s);
        char name[32];
        std::snprintf(name, sizeof(name), "rec_%03d", s);
        const fs::path path = fs::path(out_dir) / (std::string(name) + ".csv");
        write_record_csv(path.string(), record);
        datasets.push_back({{"id", name},
                            {"file", path.string()},
                            {"f", theta.f},
                            {"xi", theta.xi},
                            {"phi", vector_to_json(theta.phi)},
                            {"S", theta.S},
                            {"Se", theta.Se}});
    }
    truth["datasets"] = datasets;
    write_json(fs::path(out_dir) / "truth.json", truth);
    std::cout << "synth: wrote " << n_d << " records + truth.json to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical Bayesian operational modal analysis"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string algorithm_override;
    int threads_override = 0;
    long long seed_override = -1;

    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        sub->add_option("--config", config_path, "project configuration file")
            ->required(needs_config);
        sub->add_option("--out", out_override, "output directory override");
        sub->add_option("--threads", threads_override, "worker threads");
        sub->add_option("--seed", seed_override, "seed override");
        sub->add_option("--algorithm", algorithm_override, "laplace | tmcmc");
    };

    auto* spectrum = app.add_subcommand("spectrum", "averaged singular-value spectrum");
    auto* identify = app.add_subcommand("identify", "per-dataset Bayesian FFT identification");
    auto* fuse = app.add_subcommand("fuse", "hierarchical fusion of evidence records");
    auto* predict = app.add_subcommand("predict", "predictive distribution only");
    auto* synth = app.add_subcommand("synth", "generate a synthetic multi-dataset project");
    for (auto* sub : {spectrum, identify, fuse, predict, synth}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        ConfigFile cfg;
        try {
            cfg = ConfigFile::parse_file(config_path);
        } catch (const std::exception& ex) {
            throw CliError(kExitConfig, ex.what());
        }
        if (synth->parsed()) {
            std::optional<std::uint64_t> seed;
            if (seed_override >= 0) seed = static_cast<std::uint64_t>(seed_override);
            return cmd_synth(cfg, out_override, seed);
        }
        ProjectConfig project = load_project(cfg);
        const std::string configured_out_dir = project.out_dir;
        if (!out_override.empty()) project.out_dir = out_override;
        if (!algorithm_override.empty()) {
            if (algorithm_override != "laplace" && algorithm_override != "tmcmc")
                throw CliError(kExitConfig, "--algorithm must be laplace or tmcmc");
            project.algorithm = algorithm_override;
        }
        if (threads_override > 0) project.threads = threads_override;
        if (seed_override >= 0) project.seed = static_cast<std::uint64_t>(seed_override);

        if (spectrum->parsed()) return cmd_spectrum(project);
        if (identify->parsed()) return cmd_identify(project);
        if (fuse->parsed()) return fuse_or_predict(project, false, configured_out_dir);
        if (predict->parsed()) return fuse_or_predict(project, true, configured_out_dir);
        throw CliError(kExitConfig, "no subcommand given");
    } catch (const CliError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return ex.code;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitComputation;
    }
}

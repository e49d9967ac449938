#include "flowfilt/experiment.hpp"

#include "flowfilt/errors.hpp"
#include "flowfilt/moment_propagation.hpp"
#include "flowfilt/random.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

namespace flowfilt {

using nlohmann::json;

namespace {

template <class T>
T get_integer(const json& value, const std::string& what) {
    if (!value.is_number_integer()) throw ParseError(what + ": expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
        if (!value.is_number_unsigned() && value.get<std::int64_t>() < 0) {
            throw ParseError(what + ": expected a non-negative integer");
        }
    }
    return value.get<T>();
}

double get_number(const json& value, const std::string& what) {
    if (!value.is_number()) throw ParseError(what + ": expected a number");
    return value.get<double>();
}

std::string get_string(const json& value, const std::string& what) {
    if (!value.is_string()) throw ParseError(what + ": expected a string");
    return value.get<std::string>();
}

ExperimentKind parse_experiment(const std::string& name) {
    if (name == "flow_path") return ExperimentKind::FlowPath;
    if (name == "moments") return ExperimentKind::Moments;
    if (name == "ensemble_consistency") return ExperimentKind::EnsembleConsistency;
    if (name == "stability") return ExperimentKind::Stability;
    if (name == "sequential") return ExperimentKind::Sequential;
    throw ParseError("unknown experiment '" + name + "'");
}

FlowDescriptor parse_flow(const json& doc) {
    reject_unknown_keys(doc, {"flow", "Q0", "alpha"}, "flow");
    if (!doc.contains("flow")) throw ParseError("flow: missing 'flow'");
    FlowDescriptor d;
    d.flow = get_string(doc.at("flow"), "flow.flow");
    if (d.flow != "exact" && d.flow != "fixed_q" && d.flow != "constant_q" && d.flow != "diagnostic") {
        throw ParseError("flow: unknown flow '" + d.flow + "'");
    }
    if (doc.contains("Q0")) {
        if (d.flow != "constant_q") throw ParseError("flow: 'Q0' only applies to constant_q");
        d.Q0 = json_to_matrix(doc.at("Q0"), "flow.Q0");
    }
    if (doc.contains("alpha")) {
        if (d.flow != "diagnostic") throw ParseError("flow: 'alpha' only applies to diagnostic");
        d.alpha = get_number(doc.at("alpha"), "flow.alpha");
    }
    if (d.flow == "constant_q" && !d.Q0) throw ParseError("flow: constant_q requires 'Q0'");
    return d;
}

StabilityQuery parse_stability(const json& doc) {
    reject_unknown_keys(doc,
                        {"fts_alpha", "fts_beta", "ftcs_alpha", "ftcs_beta", "ftcs_gamma", "ftss_alpha", "ftss_beta",
                         "ftss_epsilon", "n_mc", "initial_error"},
                        "stability");
    StabilityQuery q;
    auto number = [&](const char* key, double& field) {
        if (doc.contains(key)) field = get_number(doc.at(key), std::string("stability.") + key);
    };
    number("fts_alpha", q.fts_alpha);
    number("fts_beta", q.fts_beta);
    number("ftcs_alpha", q.ftcs_alpha);
    number("ftcs_gamma", q.ftcs_gamma);
    number("ftss_alpha", q.ftss_alpha);
    number("ftss_beta", q.ftss_beta);
    number("ftss_epsilon", q.ftss_epsilon);
    if (doc.contains("ftcs_beta")) q.ftcs_beta = get_number(doc.at("ftcs_beta"), "stability.ftcs_beta");
    if (doc.contains("n_mc")) q.n_mc = get_integer<std::size_t>(doc.at("n_mc"), "stability.n_mc");
    if (doc.contains("initial_error")) q.initial_error = json_to_vector(doc.at("initial_error"), "initial_error");
    return q;
}

SequentialScenario parse_sequential(const json& doc) {
    reject_unknown_keys(doc, {"F", "W", "K_steps", "truth_seed"}, "sequential");
    for (const char* key : {"F", "W", "K_steps"}) {
        if (!doc.contains(key)) throw ParseError(std::string("sequential: missing '") + key + "'");
    }
    SequentialScenario s;
    s.F = json_to_matrix(doc.at("F"), "sequential.F");
    s.W = json_to_matrix(doc.at("W"), "sequential.W");
    s.K_steps = get_integer<int>(doc.at("K_steps"), "sequential.K_steps");
    if (doc.contains("truth_seed")) s.truth_seed = get_integer<std::uint64_t>(doc.at("truth_seed"), "truth_seed");
    if (s.K_steps < 1) throw ParseError("sequential: K_steps must be >= 1");
    if (s.F.rows() != s.F.cols()) throw ParseError("sequential: F must be square");
    if (s.W.rows() != s.F.rows() || s.W.cols() != s.F.cols()) throw ParseError("sequential: W must match F");
    if ((s.W - s.W.transpose()).norm() > 1e-12 * std::max(s.W.norm(), 1e-300) ||
        min_eigenvalue(s.W) < -1e-10 * symmetric_norm(s.W)) {
        throw ParseError("sequential: W must be symmetric positive semi-definite");
    }
    return s;
}

void validate_config(const ExperimentConfig& c) {
    if (c.N < 1) throw ParseError("ensemble.N must be >= 1");
    if (c.steps < 10) throw ParseError("grid.steps must be >= 10");
    if (!std::filesystem::exists(c.model)) throw ParseError("model file '" + c.model.string() + "' does not exist");
    if (c.experiment == ExperimentKind::Sequential && !c.sequential) {
        throw ParseError("experiment 'sequential' needs a 'sequential' section");
    }
}

std::string to_text(const json& j) { return j.dump(2) + "\n"; }

Vector sample_gaussian(const Vector& mean, const Matrix& factor, const NoiseStream& stream, std::uint64_t step) {
    if (factor.cols() == 0) return mean;
    return mean + factor * stream.normals(step, factor.cols());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::filesystem::filesystem_error("cannot write", path, std::make_error_code(std::errc::io_error));
    }
    out << content;
    if (!out) {
        throw std::filesystem::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
    }
}

}  // namespace

const char* experiment_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::FlowPath: return "flow_path";
        case ExperimentKind::Moments: return "moments";
        case ExperimentKind::EnsembleConsistency: return "ensemble_consistency";
        case ExperimentKind::Stability: return "stability";
        case ExperimentKind::Sequential: return "sequential";
    }
    return "unknown";
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    reject_unknown_keys(doc,
                        {"model", "flow", "grid", "ensemble", "experiment", "output_dir", "threads", "consistency",
                         "stability", "sequential"},
                        "config");
    for (const char* key : {"model", "flow", "experiment"}) {
        if (!doc.contains(key)) throw ParseError(std::string("config: missing '") + key + "'");
    }
    ExperimentConfig c;
    c.source = doc;
    std::filesystem::path model = get_string(doc.at("model"), "model");
    c.model = model.is_relative() && !base_dir.empty() ? base_dir / model : model;
    c.flow = parse_flow(doc.at("flow"));
    c.experiment = parse_experiment(get_string(doc.at("experiment"), "experiment"));

    if (doc.contains("grid")) {
        const json& g = doc.at("grid");
        reject_unknown_keys(g, {"steps", "scheme"}, "grid");
        if (g.contains("steps")) c.steps = get_integer<int>(g.at("steps"), "grid.steps");
        if (g.contains("scheme")) c.scheme = parse_scheme(get_string(g.at("scheme"), "grid.scheme"));
    }
    if (doc.contains("ensemble")) {
        const json& e = doc.at("ensemble");
        reject_unknown_keys(e, {"N", "seed"}, "ensemble");
        if (e.contains("N")) c.N = get_integer<std::size_t>(e.at("N"), "ensemble.N");
        if (e.contains("seed")) c.seed = get_integer<std::uint64_t>(e.at("seed"), "ensemble.seed");
    }
    if (doc.contains("output_dir")) {
        std::filesystem::path out = get_string(doc.at("output_dir"), "output_dir");
        c.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
    }
    if (doc.contains("threads")) c.threads = get_integer<unsigned>(doc.at("threads"), "threads");
    if (doc.contains("consistency")) {
        const json& s = doc.at("consistency");
        reject_unknown_keys(s, {"N_list", "seed_count"}, "consistency");
        if (s.contains("N_list")) {
            if (!s.at("N_list").is_array()) throw ParseError("consistency.N_list: expected an array");
            c.consistency.N_list.clear();
            for (const auto& v : s.at("N_list")) {
                c.consistency.N_list.push_back(get_integer<std::size_t>(v, "consistency.N_list"));
            }
        }
        if (s.contains("seed_count")) {
            c.consistency.seed_count = get_integer<std::size_t>(s.at("seed_count"), "consistency.seed_count");
        }
    }
    if (doc.contains("stability")) c.stability = parse_stability(doc.at("stability"));
    if (doc.contains("sequential")) c.sequential = parse_sequential(doc.at("sequential"));
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_json_file(path), path.parent_path());
}

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides) {
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.steps) {
        if (*overrides.steps < 10) throw ParseError("--steps must be >= 10");
        config.steps = *overrides.steps;
    }
    if (overrides.output_dir) config.output_dir = *overrides.output_dir;
    if (overrides.threads) config.threads = *overrides.threads;
}

CsvTable moments_csv(const MomentPath& path) {
    const Eigen::Index n = path.means.empty() ? 0 : path.means.front().size();
    std::vector<std::string> header{"lambda"};
    for (Eigen::Index i = 0; i < n; ++i) header.push_back("xbar_" + std::to_string(i));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) header.push_back("P_" + std::to_string(i) + std::to_string(j));
    }
    CsvTable csv(header);
    for (std::size_t k = 0; k < path.nodes.size(); ++k) {
        std::vector<double> row{path.nodes[k]};
        for (Eigen::Index i = 0; i < n; ++i) row.push_back(path.means[k](i));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) row.push_back(path.covariances[k](i, j));
        }
        csv.add_row(row);
    }
    return csv;
}

CsvTable consistency_csv(const ConsistencyTable& table) {
    CsvTable csv({"N", "seed_count", "mean_err", "cov_err"});
    for (const auto& r : table.rows) {
        csv.add_row({static_cast<double>(r.N), static_cast<double>(r.seed_count), r.mean_err, r.cov_err});
    }
    return csv;
}

CsvTable path_csv(const ParticlePath& path) {
    const Eigen::Index n = path.states.empty() ? 0 : path.states.front().size();
    std::vector<std::string> header{"lambda"};
    for (Eigen::Index i = 0; i < n; ++i) header.push_back("x_" + std::to_string(i));
    CsvTable csv(header);
    for (std::size_t k = 0; k < path.states.size(); ++k) {
        std::vector<double> row{path.lambdas[k]};
        for (Eigen::Index i = 0; i < n; ++i) row.push_back(path.states[k](i));
        csv.add_row(row);
    }
    return csv;
}

CsvTable ensemble_csv(const ParticleEnsemble& ensemble) {
    std::vector<std::string> header{"particle_id"};
    for (Eigen::Index i = 0; i < ensemble.dim(); ++i) header.push_back("x_" + std::to_string(i));
    CsvTable csv(header);
    for (std::size_t p = 0; p < ensemble.size(); ++p) {
        std::vector<double> row{static_cast<double>(ensemble.ids[p])};
        for (Eigen::Index i = 0; i < ensemble.dim(); ++i) {
            row.push_back(ensemble.particles(i, static_cast<Eigen::Index>(p)));
        }
        csv.add_row(row);
    }
    return csv;
}

CsvTable lyapunov_csv(const ErrorTrajectory& trajectory) {
    CsvTable csv({"lambda", "V_M", "V_S"});
    for (std::size_t k = 0; k < trajectory.nodes.size(); ++k) {
        csv.add_row({trajectory.nodes[k], trajectory.V_M[k], trajectory.V_S[k]});
    }
    return csv;
}

CsvTable sequential_csv(const SequentialResult& result) {
    CsvTable csv({"step", "rmse_flow", "rmse_kalman", "cov_frobenius_gap"});
    for (const auto& s : result.steps) {
        csv.add_row({static_cast<double>(s.step), s.rmse_flow, s.rmse_kalman, s.cov_frobenius_gap});
    }
    return csv;
}

json to_json(const EstimatorReport& r) {
    return json{{"N", r.N},
                {"mean_estimate", to_json(r.mean_estimate)},
                {"cov_estimate", to_json(r.cov_estimate)},
                {"oracle_mean", to_json(r.oracle_mean)},
                {"oracle_cov", to_json(r.oracle_cov)},
                {"mean_error_norm", r.mean_error_norm},
                {"cov_error_norm", r.cov_error_norm},
                {"mean_standard_error", r.mean_standard_error}};
}

json to_json(const StabilityReport& r) {
    json ftcs{{"holds", r.ftcs.holds},
              {"vacuous", r.ftcs.vacuous},
              {"alpha", r.ftcs.alpha},
              {"beta", r.ftcs.beta},
              {"gamma", r.ftcs.gamma},
              {"lambda1", r.ftcs.lambda1 ? json(*r.ftcs.lambda1) : json(nullptr)}};
    return json{{"fts",
                 {{"holds", r.fts.holds},
                  {"vacuous", r.fts.vacuous},
                  {"alpha", r.fts.alpha},
                  {"beta", r.fts.beta},
                  {"S", to_json(r.fts.S)}}},
                {"ftcs", ftcs},
                {"ftss",
                 {{"holds", r.ftss.holds},
                  {"alpha", r.ftss.alpha},
                  {"beta", r.ftss.beta},
                  {"epsilon", r.ftss.epsilon},
                  {"empirical_probability", r.ftss.empirical_probability},
                  {"margin", r.ftss.margin},
                  {"draws", r.ftss.draws},
                  {"markov_bound_holds", r.ftss.markov_bound_holds}}},
                {"sigma", r.sigma},
                {"regime", regime_name(r.regime)},
                {"grid_steps", r.grid_steps}};
}

SequentialResult run_sequential(const GaussianPrior& initial, const LinearMeasurement& sensor,
                                const SequentialScenario& scenario, const FlowDescriptor& flow,
                                const LambdaGrid& grid, std::size_t N, std::uint64_t ensemble_seed,
                                const PropagationOptions& options) {
    require_compatible(initial, sensor);
    const Eigen::Index n = initial.dim();
    require_shape(scenario.F, n, n, "F");
    require_shape(scenario.W, n, n, "W");
    if (scenario.K_steps < 1) throw ParameterError("K_steps must be >= 1");
    if (N < 2) throw InsufficientSampleError("sequential filtering needs N >= 2 to refit the prior");

    const Matrix process_factor = diffusion_factor(symmetrize(scenario.W));
    const Matrix initial_factor = initial.cholesky().matrixL();
    const Matrix sensor_factor = sensor.cholesky().matrixL();
    const NoiseStream truth_noise{scenario.truth_seed, 0, NoiseDomain::Truth};
    const NoiseStream sensor_noise{scenario.truth_seed, 1, NoiseDomain::Measurement};

    SequentialResult result;
    Vector truth = sample_gaussian(initial.x_prior(), initial_factor, truth_noise, 0);
    Vector kalman_mean = initial.x_prior();
    Matrix kalman_cov = initial.P_g();
    ParticleEnsemble ensemble;
    double flow_sq = 0.0, kalman_sq = 0.0;

    for (int k = 1; k <= scenario.K_steps; ++k) {
        const auto step = static_cast<std::uint64_t>(k);
        if (k > 1) {
            truth = sample_gaussian(scenario.F * truth, process_factor, truth_noise, step);
            kalman_mean = scenario.F * kalman_mean;
            kalman_cov = symmetrize(scenario.F * kalman_cov * scenario.F.transpose() + scenario.W);
        }
        const Vector z = sample_gaussian(sensor.H() * truth, sensor_factor, sensor_noise, step);
        const LinearMeasurement meas = sensor.with_observation(z);

        std::optional<GaussianPrior> prior;
        if (k == 1) {
            prior.emplace(initial);
            ensemble = sample_prior(N, initial, ensemble_seed);
        } else {
            for (std::size_t i = 0; i < ensemble.size(); ++i) {
                const auto col = static_cast<Eigen::Index>(i);
                const NoiseStream process{ensemble_seed, ensemble.ids[i], NoiseDomain::Process};
                ensemble.particles.col(col) =
                    sample_gaussian(scenario.F * ensemble.particles.col(col), process_factor, process, step);
            }
            prior.emplace(mean_estimate(ensemble), covariance_estimate(ensemble));
        }
        ensemble.lambda = 0.0;
        ensemble.seed = mix64(ensemble_seed ^ mix64(step));

        const auto params = make_flow(flow, *prior, meas);
        const auto table =
            build_coefficient_table(params, grid, *prior, meas, grid.scheme() == Scheme::DeterministicRK4);
        try {
            ensemble = propagate_ensemble(ensemble, table, grid, options);
        } catch (const DivergenceError& e) {
            std::ostringstream os;
            os << "sequential step " << k << ": " << e.what();
            throw DivergenceError(os.str(), static_cast<std::size_t>(k), e.particle());
        }
        ensemble.seed = ensemble_seed;

        const auto kalman = closed_form_posterior(1.0, GaussianPrior(kalman_mean, kalman_cov), meas);
        kalman_mean = kalman.mean;
        kalman_cov = kalman.covariance;

        const Vector flow_mean = mean_estimate(ensemble);
        const Matrix flow_cov = covariance_estimate(ensemble);
        SequentialStep row;
        row.step = k;
        row.rmse_flow = (flow_mean - truth).norm() / std::sqrt(static_cast<double>(n));
        row.rmse_kalman = (kalman_mean - truth).norm() / std::sqrt(static_cast<double>(n));
        row.cov_frobenius_gap = (flow_cov - kalman_cov).norm();
        flow_sq += row.rmse_flow * row.rmse_flow;
        kalman_sq += row.rmse_kalman * row.rmse_kalman;
        result.steps.push_back(row);
    }
    result.rmse_flow = std::sqrt(flow_sq / scenario.K_steps);
    result.rmse_kalman = std::sqrt(kalman_sq / scenario.K_steps);
    return result;
}

RunArtifacts execute(const ExperimentConfig& config) {
    validate_config(config);
    const auto model = load_model(config.model);
    const auto& prior = model.prior;
    const auto& meas = model.meas;
    const LambdaGrid grid = LambdaGrid::uniform(config.steps, config.scheme);
    const PropagationOptions options{config.threads};

    RunArtifacts out;
    json& summary = out.summary;
    summary["experiment"] = experiment_name(config.experiment);
    summary["flow"] = config.flow.flow;
    summary["steps"] = config.steps;
    summary["scheme"] = scheme_name(config.scheme);
    const auto oracle = closed_form_posterior(1.0, prior, meas);
    summary["oracle_mean"] = to_json(oracle.mean);
    summary["oracle_cov"] = to_json(oracle.covariance);

    switch (config.experiment) {
        case ExperimentKind::FlowPath: {
            const auto params = make_flow(config.flow, prior, meas);
            const auto table =
                build_coefficient_table(params, grid, prior, meas, grid.scheme() == Scheme::DeterministicRK4);
            const auto start = sample_prior(config.N, prior, config.seed);
            const NoiseStream first{start.seed, start.ids[0], NoiseDomain::Diffusion};
            const auto path = propagate_particle(start.particles.col(0), table, grid, first, 0);
            const auto end = propagate_ensemble(start, table, grid, options);
            out.files["path.csv"] = path_csv(path).str();
            out.files["ensemble.csv"] = ensemble_csv(end).str();
            const Vector mean = mean_estimate(end);
            summary["mean_estimate"] = to_json(mean);
            summary["mean_error_norm"] = (mean - oracle.mean).norm();
            if (end.size() >= 2) {
                const auto report = estimator_report(end, prior, meas);
                out.files["estimator_report.json"] = to_text(to_json(report));
                summary["cov_estimate"] = to_json(report.cov_estimate);
                summary["cov_error_norm"] = report.cov_error_norm;
                summary["mean_standard_error"] = report.mean_standard_error;
            }
            break;
        }
        case ExperimentKind::Moments: {
            const auto params = make_flow(config.flow, prior, meas);
            const auto path = solve_moment_odes(params, grid, prior, meas);
            out.files["moments.csv"] = moments_csv(path).str();
            const Vector& mean = path.means.back();
            const Matrix& cov = path.covariances.back();
            summary["terminal_mean"] = to_json(mean);
            summary["terminal_cov"] = to_json(cov);
            summary["mean_relative_error"] = relative_error(mean, oracle.mean);
            summary["cov_relative_error"] = relative_error(cov, oracle.covariance);
            summary["lmv_estimate"] = to_json(lmv_estimate(prior, meas));
            break;
        }
        case ExperimentKind::EnsembleConsistency: {
            const auto params = make_flow(config.flow, prior, meas);
            std::vector<std::uint64_t> seeds;
            for (std::size_t i = 0; i < config.consistency.seed_count; ++i) seeds.push_back(config.seed + i);
            const auto table = consistency_sweep(params, prior, meas, config.consistency.N_list, seeds, grid, options);
            out.files["consistency.csv"] = consistency_csv(table).str();
            summary["mean_error_slope"] = table.mean_error_slope;
            json rows = json::array();
            for (const auto& r : table.rows) {
                rows.push_back({{"N", r.N},
                                {"mean_err", r.mean_err},
                                {"cov_err", r.cov_err},
                                {"mean_standard_error", r.mean_standard_error}});
            }
            summary["rows"] = rows;
            break;
        }
        case ExperimentKind::Stability: {
            const auto params = make_flow(config.flow, prior, meas);
            StabilityQuery query = config.stability;
            query.seed = config.seed;
            const auto report = assess_stability(params, prior, meas, grid, query);
            out.files["stability_report.json"] = to_text(to_json(report));
            out.files["lyapunov.csv"] = lyapunov_csv(report.trajectory).str();
            summary["regime"] = regime_name(report.regime);
            summary["sigma"] = report.sigma;
            summary["fts"] = report.fts.holds;
            summary["ftcs"] = report.ftcs.holds;
            summary["ftss"] = report.ftss.holds;
            summary["ftss_empirical_probability"] = report.ftss.empirical_probability;
            const auto rk4 = LambdaGrid::uniform(config.steps, Scheme::DeterministicRK4);
            summary["ellipsoid_deviation"] = ellipsoid_invariance_check(prior, meas, rk4, 100, config.seed);
            break;
        }
        case ExperimentKind::Sequential: {
            const auto& scenario = *config.sequential;
            const auto result =
                run_sequential(prior, meas, scenario, config.flow, grid, config.N, config.seed, options);
            out.files["sequential.csv"] = sequential_csv(result).str();
            summary["rmse_flow"] = result.rmse_flow;
            summary["rmse_kalman"] = result.rmse_kalman;
            summary["rmse_ratio"] = result.rmse_flow / result.rmse_kalman;
            summary["truth_seed"] = scenario.truth_seed;
            break;
        }
    }
    return out;
}

json write_run(const ExperimentConfig& config, const RunArtifacts& artifacts, double wall_seconds) {
    std::filesystem::create_directories(config.output_dir);
    json outputs = json::array();
    for (const auto& [name, content] : artifacts.files) {
        write_file(config.output_dir / name, content);
        outputs.push_back(name);
    }
    write_file(config.output_dir / "summary.json", to_text(artifacts.summary));
    outputs.push_back("summary.json");

    json seeds{{"ensemble_seed", config.seed}};
    if (config.sequential) seeds["truth_seed"] = config.sequential->truth_seed;
    json manifest{{"tool", "flowfilt"},
                  {"version", kVersion},
                  {"experiment", experiment_name(config.experiment)},
                  {"config", config.source},
                  {"effective",
                   {{"model", config.model.string()},
                    {"steps", config.steps},
                    {"scheme", scheme_name(config.scheme)},
                    {"N", config.N},
                    {"threads", config.threads}}},
                  {"seeds", seeds},
                  {"created_utc", utc_timestamp()},
                  {"wall_time_seconds", wall_seconds},
                  {"outputs", outputs}};
    write_file(config.output_dir / "manifest.json", to_text(manifest));
    return manifest;
}

int classify_exception(std::exception_ptr error, json& record) {
    int code = exit_code::kInternal;
    std::string kind = "internal";
    std::string message;
    try {
        std::rethrow_exception(error);
    } catch (const ParseError& e) {
        code = exit_code::kParse, kind = "parse", message = e.what();
    } catch (const nlohmann::json::exception& e) {
        code = exit_code::kParse, kind = "parse", message = e.what();
    } catch (const AdmissibilityError& e) {
        code = exit_code::kAdmissibility, kind = "admissibility", message = e.what();
    } catch (const DivergenceError& e) {
        code = exit_code::kDivergence, kind = "divergence", message = e.what();
        record["step"] = e.step();
        if (e.particle() >= 0) record["particle"] = e.particle();
    } catch (const DimensionError& e) {
        code = exit_code::kParameter, kind = "dimension", message = e.what();
    } catch (const RangeError& e) {
        code = exit_code::kParameter, kind = "range", message = e.what();
    } catch (const InsufficientSampleError& e) {
        code = exit_code::kParameter, kind = "insufficient_sample", message = e.what();
    } catch (const FlowError& e) {
        code = exit_code::kParameter, kind = "parameter", message = e.what();
    } catch (const std::filesystem::filesystem_error& e) {
        code = exit_code::kIo, kind = "io", message = e.what();
    } catch (const std::exception& e) {
        message = e.what();
    } catch (...) {
        message = "unknown error";
    }
    record["error"] = kind;
    record["message"] = message;
    record["exit_code"] = code;
    return code;
}

}  // namespace flowfilt

#pragma once

#include "flowfilt/ensemble_estimation.hpp"
#include "flowfilt/flow_family.hpp"
#include "flowfilt/model_io.hpp"
#include "flowfilt/stability_lab.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flowfilt {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { FlowPath, Moments, EnsembleConsistency, Stability, Sequential };

const char* experiment_name(ExperimentKind kind);

/// Linear-Gaussian dynamics x_k = F x_{k-1} + w_k, w_k ~ N(0, W), observed
/// through the model's H and R at every step.
struct SequentialScenario {
    Matrix F;
    Matrix W;
    int K_steps = 1;
    std::uint64_t truth_seed = 0;
};

struct ConsistencySettings {
    std::vector<std::size_t> N_list{100, 1000, 10000};
    std::size_t seed_count = 20;
};

struct ExperimentConfig {
    std::filesystem::path model;
    FlowDescriptor flow;
    int steps = LambdaGrid::kDefaultSteps;
    Scheme scheme = Scheme::EulerMaruyama;
    std::size_t N = 1000;
    std::uint64_t seed = 0;
    ExperimentKind experiment = ExperimentKind::Moments;
    std::filesystem::path output_dir = "out";
    unsigned threads = 0;
    ConsistencySettings consistency;
    StabilityQuery stability;
    std::optional<SequentialScenario> sequential;
    nlohmann::json source;  // the parsed document, echoed into the manifest
};

// Strict: unknown keys, missing required keys, and bad values raise ParseError.
// Relative model paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<std::filesystem::path> output_dir;
    std::optional<unsigned> threads;
};

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides);

/// Everything a run produces, held in memory until the run has succeeded.
struct RunArtifacts {
    std::map<std::string, std::string> files;  // file name -> content (CSV and JSON payloads)
    nlohmann::json summary;
};

RunArtifacts execute(const ExperimentConfig& config);

// Writes the artifacts plus summary.json and manifest.json. Returns the manifest.
nlohmann::json write_run(const ExperimentConfig& config, const RunArtifacts& artifacts, double wall_seconds);

struct SequentialStep {
    int step = 0;
    double rmse_flow = 0.0;
    double rmse_kalman = 0.0;
    double cov_frobenius_gap = 0.0;
};

struct SequentialResult {
    std::vector<SequentialStep> steps;
    double rmse_flow = 0.0;    // over all steps
    double rmse_kalman = 0.0;  // over all steps
};

/// Particle flow filter against the exact Kalman filter. Step 1 updates the
/// initial prior directly; later steps predict the ensemble, refit a Gaussian
/// prior from it, and apply the flow update.
SequentialResult run_sequential(const GaussianPrior& initial, const LinearMeasurement& sensor,
                                const SequentialScenario& scenario, const FlowDescriptor& flow,
                                const LambdaGrid& grid, std::size_t N, std::uint64_t ensemble_seed,
                                const PropagationOptions& options = {});

CsvTable sequential_csv(const SequentialResult& result);
CsvTable moments_csv(const MomentPath& path);
CsvTable consistency_csv(const ConsistencyTable& table);
CsvTable path_csv(const ParticlePath& path);
CsvTable ensemble_csv(const ParticleEnsemble& ensemble);
CsvTable lyapunov_csv(const ErrorTrajectory& trajectory);

nlohmann::json to_json(const EstimatorReport& report);
nlohmann::json to_json(const StabilityReport& report);

// Process exit codes; the CLI maps exceptions onto these.
namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kParse = 2;
inline constexpr int kAdmissibility = 3;
inline constexpr int kDivergence = 4;
inline constexpr int kParameter = 5;
inline constexpr int kIo = 6;
inline constexpr int kVerifyFailed = 7;
}  // namespace exit_code

// Maps the active exception to an exit code and a machine-readable record.
int classify_exception(std::exception_ptr error, nlohmann::json& record);

}  // namespace flowfilt

#pragma once

#include "flowfilt/flow_family.hpp"
#include "flowfilt/model_io.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace flowfilt {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    double seconds = 0.0;
    double limit_seconds = 0.0;  // 0: no runtime limit
    std::string detail;
};

struct AcceptanceOptions {
    unsigned threads = 0;
    // Scratch directory for the determinism runs; a temporary one when empty.
    std::filesystem::path work_dir;
};

inline constexpr int kCriterionCount = 9;

// Runs one criterion (1..9), timing it and folding the runtime limit into the verdict.
CriterionResult run_criterion(int id, const AcceptanceOptions& options = {});

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options = {},
                                            const std::function<void(const CriterionResult&)>& on_result = {});

std::string format_result(const CriterionResult& result);

// Random SPD matrix with eigenvalues drawn from [lo, hi].
Matrix random_spd(std::mt19937_64& rng, Eigen::Index n, double lo, double hi);

// Well-conditioned random linear-Gaussian model with state dim n and measurement dim d.
LinearGaussianModel random_model(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d);

// The scalar model with P_g = 1, x_prior = 0, H = R = 1, z = 2.
LinearGaussianModel canonical_scalar_model();

// K(lambda) = -J/2 + C(lambda) with C + C^T >= 0, so every member is admissible.
MatrixSchedule random_admissible_schedule(std::mt19937_64& rng, const GaussianPrior& prior,
                                          const LinearMeasurement& meas);

/// Both sides of the condition the drift and diffusion must satisfy for the
/// particles to follow the homotopy density.
struct ConditionResidual {
    Vector lhs;    // grad log h
    Vector rhs;    // assembled from f, its x-gradient and Q
    double scale;  // largest norm among the assembled terms
    double relative() const { return (lhs - rhs).norm() / scale; }
};

ConditionResidual condition_residual(const Vector& x, double lambda, const Matrix& K, const GaussianPrior& prior,
                                     const LinearMeasurement& meas);

}  // namespace flowfilt

#pragma once

#include "flowfilt/moment_propagation.hpp"
#include "flowfilt/particle_ensemble.hpp"
#include "flowfilt/sde_integrator.hpp"

#include <cstdint>
#include <vector>

namespace flowfilt {

// N i.i.d. draws x_prior + L xi with L the Cholesky factor of P_g. Particle i
// gets id i and draws from stream (seed, i) in the prior-sample domain.
ParticleEnsemble sample_prior(std::size_t N, const GaussianPrior& prior, std::uint64_t seed);

// Arithmetic mean, accumulated in ascending particle order.
Vector mean_estimate(const ParticleEnsemble& ensemble);

// Two-pass sample covariance with the 1/(N-1) normalization.
Matrix covariance_estimate(const ParticleEnsemble& ensemble);

struct EstimatorReport {
    Vector mean_estimate;
    Matrix cov_estimate;
    Vector oracle_mean;
    Matrix oracle_cov;
    double mean_error_norm = 0.0;  // Euclidean
    double cov_error_norm = 0.0;   // Frobenius
    std::size_t N = 0;
    // Monte Carlo standard error of the mean estimate, sqrt(tr(P_oracle) / N).
    double mean_standard_error = 0.0;
};

// Compares an ensemble at lambda = 1 with the closed-form posterior.
EstimatorReport estimator_report(const ParticleEnsemble& ensemble, const GaussianPrior& prior,
                                 const LinearMeasurement& meas);

struct ConsistencyRow {
    std::size_t N = 0;
    std::size_t seed_count = 0;
    double mean_err = 0.0;
    double cov_err = 0.0;
    double max_mean_err = 0.0;  // worst single seed
    double mean_standard_error = 0.0;
};

struct ConsistencyTable {
    std::vector<ConsistencyRow> rows;
    // Least-squares slope of log(mean_err) against log(N).
    double mean_error_slope = 0.0;
};

/// For each N: sample the prior, run the flow, and average the estimator errors
/// over `seeds`.
ConsistencyTable consistency_sweep(const FlowParameterization& params, const GaussianPrior& prior,
                                   const LinearMeasurement& meas, const std::vector<std::size_t>& N_list,
                                   const std::vector<std::uint64_t>& seeds, const LambdaGrid& grid,
                                   const PropagationOptions& options = {});

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace flowfilt

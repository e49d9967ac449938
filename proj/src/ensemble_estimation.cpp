#include "flowfilt/ensemble_estimation.hpp"

#include "flowfilt/errors.hpp"
#include "flowfilt/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flowfilt {

ParticleEnsemble sample_prior(std::size_t N, const GaussianPrior& prior, std::uint64_t seed) {
    if (N < 1) throw ParameterError("ensemble size must be >= 1");
    const Eigen::Index n = prior.dim();
    ParticleEnsemble ensemble;
    ensemble.particles.resize(n, static_cast<Eigen::Index>(N));
    ensemble.ids.resize(N);
    ensemble.seed = seed;
    ensemble.lambda = 0.0;
    const Matrix L = prior.cholesky().matrixL();
    Vector xi(n);
    for (std::size_t i = 0; i < N; ++i) {
        ensemble.ids[i] = i;
        const NoiseStream stream{seed, i, NoiseDomain::PriorSample};
        stream.normals(0, xi);
        ensemble.particles.col(static_cast<Eigen::Index>(i)) = prior.x_prior() + L * xi;
    }
    return ensemble;
}

Vector mean_estimate(const ParticleEnsemble& ensemble) {
    if (ensemble.particles.cols() < 1) throw InsufficientSampleError("mean of an empty ensemble");
    // Summing offsets from the first particle keeps large common offsets out
    // of the accumulator.
    const Vector pivot = ensemble.particles.col(0);
    Vector sum = Vector::Zero(ensemble.dim());
    for (Eigen::Index i = 1; i < ensemble.particles.cols(); ++i) {
        sum += ensemble.particles.col(i) - pivot;
    }
    return pivot + sum / static_cast<double>(ensemble.particles.cols());
}

Matrix covariance_estimate(const ParticleEnsemble& ensemble) {
    const Eigen::Index N = ensemble.particles.cols();
    if (N < 2) throw InsufficientSampleError("covariance estimate needs at least two particles");
    const Vector mean = mean_estimate(ensemble);
    const Eigen::Index n = ensemble.dim();
    Matrix acc = Matrix::Zero(n, n);
    Vector centered(n);
    for (Eigen::Index i = 0; i < N; ++i) {
        centered = ensemble.particles.col(i) - mean;
        acc.noalias() += centered * centered.transpose();
    }
    return symmetrize(acc / static_cast<double>(N - 1));
}

EstimatorReport estimator_report(const ParticleEnsemble& ensemble, const GaussianPrior& prior,
                                 const LinearMeasurement& meas) {
    const auto oracle = closed_form_posterior(1.0, prior, meas);
    EstimatorReport r;
    r.N = ensemble.size();
    r.mean_estimate = mean_estimate(ensemble);
    r.cov_estimate = covariance_estimate(ensemble);
    r.oracle_mean = oracle.mean;
    r.oracle_cov = oracle.covariance;
    r.mean_error_norm = (r.mean_estimate - r.oracle_mean).norm();
    r.cov_error_norm = (r.cov_estimate - r.oracle_cov).norm();
    r.mean_standard_error = std::sqrt(oracle.covariance.trace() / static_cast<double>(r.N));
    return r;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ParameterError("slope fit needs at least two points");
    const double k = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += std::log(x[i]);
        sy += std::log(y[i]);
    }
    const double mx = sx / k, my = sy / k;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw ParameterError("slope fit needs distinct x values");
    return sxy / sxx;
}

ConsistencyTable consistency_sweep(const FlowParameterization& params, const GaussianPrior& prior,
                                   const LinearMeasurement& meas, const std::vector<std::size_t>& N_list,
                                   const std::vector<std::uint64_t>& seeds, const LambdaGrid& grid,
                                   const PropagationOptions& options) {
    if (N_list.empty() || seeds.empty()) throw ParameterError("consistency sweep needs N values and seeds");
    for (std::size_t i = 0; i < N_list.size(); ++i) {
        if (N_list[i] < 2) throw InsufficientSampleError("covariance error needs N >= 2");
        if (i > 0 && N_list[i] <= N_list[i - 1]) throw ParameterError("N_list must be strictly ascending");
    }
    const auto coefficients =
        build_coefficient_table(params, grid, prior, meas, grid.scheme() == Scheme::DeterministicRK4);
    ConsistencyTable table;
    for (std::size_t N : N_list) {
        ConsistencyRow row;
        row.N = N;
        row.seed_count = seeds.size();
        for (std::uint64_t seed : seeds) {
            const auto start = sample_prior(N, prior, seed);
            const auto end = propagate_ensemble(start, coefficients, grid, options);
            const auto report = estimator_report(end, prior, meas);
            row.mean_err += report.mean_error_norm;
            row.max_mean_err = std::max(row.max_mean_err, report.mean_error_norm);
            row.cov_err += report.cov_error_norm;
            row.mean_standard_error = report.mean_standard_error;
        }
        row.mean_err /= static_cast<double>(seeds.size());
        row.cov_err /= static_cast<double>(seeds.size());
        table.rows.push_back(row);
    }
    if (table.rows.size() >= 2) {
        std::vector<double> xs, ys;
        for (const auto& r : table.rows) {
            xs.push_back(static_cast<double>(r.N));
            ys.push_back(r.mean_err);
        }
        table.mean_error_slope = log_log_slope(xs, ys);
    }
    return table;
}

}  // namespace flowfilt

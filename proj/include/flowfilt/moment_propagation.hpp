#pragma once

#include "flowfilt/sde_integrator.hpp"

#include <utility>
#include <vector>

namespace flowfilt {

/// Mean and covariance of the flow at every grid node.
struct MomentPath {
    std::vector<double> nodes;
    std::vector<Vector> means;
    std::vector<Matrix> covariances;
};

/// RK4 solution of d xbar/d lambda = A xbar + b, dP/d lambda = A P + P A^T + Q
/// from (x_prior, P_g). The grid's scheme tag is ignored; RK4 is always used.
MomentPath solve_moment_odes(const FlowParameterization& params, const LambdaGrid& grid,
                             const GaussianPrior& prior, const LinearMeasurement& meas);
MomentPath solve_moment_odes(const CoefficientTable& table, const LambdaGrid& grid, const GaussianPrior& prior);

struct GaussianMoments {
    Vector mean;
    Matrix covariance;
};

// Exact homotopy density moments: P_p = (P_g^{-1} + lambda H^T R^{-1} H)^{-1},
// x_mu = P_p (P_g^{-1} x_prior + lambda H^T R^{-1} z).
GaussianMoments closed_form_posterior(double lambda, const GaussianPrior& prior, const LinearMeasurement& meas);

// x_prior + P_g H^T (H P_g H^T + R)^{-1} (z - H x_prior)
Vector lmv_estimate(const GaussianPrior& prior, const LinearMeasurement& meas);

}  // namespace flowfilt

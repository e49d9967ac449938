#include "flowfilt/moment_propagation.hpp"

#include "flowfilt/errors.hpp"

#include <sstream>

namespace flowfilt {

namespace {

Matrix covariance_rate(const AffineFlowCoefficients& c, const Matrix& P) {
    Matrix AP = c.A * P;
    return AP + AP.transpose() + c.Q;
}

void guard(const Vector& mean, const Matrix& cov, std::size_t step) {
    if (!mean.allFinite() || !cov.allFinite() || mean.norm() > kDivergenceBound || cov.norm() > kDivergenceBound) {
        std::ostringstream os;
        os << "moment integration diverged at step " << step;
        throw DivergenceError(os.str(), step);
    }
}

}  // namespace

MomentPath solve_moment_odes(const CoefficientTable& table, const LambdaGrid& grid, const GaussianPrior& prior) {
    const int steps = grid.steps();
    if (table.nodes.size() != grid.nodes().size() || table.midpoints.size() != static_cast<std::size_t>(steps)) {
        throw ParameterError("moment solver needs node and midpoint coefficients for the grid");
    }
    MomentPath path;
    path.nodes = grid.nodes();
    path.means.reserve(grid.nodes().size());
    path.covariances.reserve(grid.nodes().size());
    Vector mean = prior.x_prior();
    Matrix cov = prior.P_g();
    path.means.push_back(mean);
    path.covariances.push_back(cov);

    for (int k = 0; k < steps; ++k) {
        const auto& c0 = table.nodes[k];
        const auto& cm = table.midpoints[k];
        const auto& c1 = table.nodes[k + 1];
        const double h = grid.step_size(k);

        const Vector m1 = c0.A * mean + c0.b;
        const Matrix p1 = covariance_rate(c0, cov);
        const Vector m2 = cm.A * (mean + 0.5 * h * m1) + cm.b;
        const Matrix p2 = covariance_rate(cm, cov + 0.5 * h * p1);
        const Vector m3 = cm.A * (mean + 0.5 * h * m2) + cm.b;
        const Matrix p3 = covariance_rate(cm, cov + 0.5 * h * p2);
        const Vector m4 = c1.A * (mean + h * m3) + c1.b;
        const Matrix p4 = covariance_rate(c1, cov + h * p3);

        mean += (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
        cov += (h / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
        cov = symmetrize(cov);
        guard(mean, cov, static_cast<std::size_t>(k) + 1);
        path.means.push_back(mean);
        path.covariances.push_back(cov);
    }
    return path;
}

MomentPath solve_moment_odes(const FlowParameterization& params, const LambdaGrid& grid,
                             const GaussianPrior& prior, const LinearMeasurement& meas) {
    const auto table = build_coefficient_table(params, grid.with_scheme(Scheme::EulerMaruyama), prior, meas, true);
    return solve_moment_odes(table, grid, prior);
}

GaussianMoments closed_form_posterior(double lambda, const GaussianPrior& prior, const LinearMeasurement& meas) {
    require_lambda(lambda);
    require_compatible(prior, meas);
    if (lambda == 0.0) return {prior.x_prior(), prior.P_g()};
    const Eigen::Index n = prior.dim();
    const auto llt = checked_cholesky(homotopy_information(lambda, prior, meas), "P_g^{-1} + lambda H^T R^{-1} H");
    GaussianMoments out;
    out.mean = llt.solve(prior.information_mean() + lambda * meas.information_vector());
    out.covariance = symmetrize(llt.solve(Matrix::Identity(n, n)));
    return out;
}

Vector lmv_estimate(const GaussianPrior& prior, const LinearMeasurement& meas) {
    require_compatible(prior, meas);
    const Matrix& H = meas.H();
    const Matrix cross = prior.P_g() * H.transpose();  // R_xz
    const auto innovation = checked_cholesky(symmetrize(H * cross + meas.R()), "H P_g H^T + R");
    return prior.x_prior() + cross * innovation.solve(meas.z() - H * prior.x_prior());
}

}  // namespace flowfilt

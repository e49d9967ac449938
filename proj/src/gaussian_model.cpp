#include "flowfilt/gaussian_model.hpp"

#include "flowfilt/errors.hpp"

#include <cmath>
#include <sstream>

namespace flowfilt {

namespace {

constexpr double kAsymmetryTolerance = 1e-12;

Matrix ingest_covariance(const Matrix& a, const std::string& what) {
    if (a.rows() != a.cols()) {
        throw DimensionError(what + " must be square");
    }
    if (a.rows() == 0) {
        throw DimensionError(what + " must have dimension >= 1");
    }
    if (!a.allFinite()) {
        throw AdmissibilityError(what + " has non-finite entries");
    }
    const double scale = a.norm();
    if (scale > 0.0 && (a - a.transpose()).norm() > kAsymmetryTolerance * scale) {
        throw AdmissibilityError(what + " is not symmetric");
    }
    return symmetrize(a);
}

double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

GaussianPrior::GaussianPrior(Vector x_prior, Matrix P_g)
    : x_prior_(std::move(x_prior)), P_g_(ingest_covariance(P_g, "P_g")), llt_(checked_cholesky(P_g_, "P_g")) {
    require_size(x_prior_, P_g_.rows(), "x_prior");
    if (!x_prior_.allFinite()) {
        throw ParameterError("x_prior has non-finite entries");
    }
    information_ = symmetrize(llt_.solve(Matrix::Identity(dim(), dim())));
    information_mean_ = llt_.solve(x_prior_);
}

LinearMeasurement::LinearMeasurement(Matrix H, Matrix R, Vector z)
    : H_(std::move(H)), R_(ingest_covariance(R, "R")), z_(std::move(z)), llt_(checked_cholesky(R_, "R")) {
    if (H_.rows() == 0 || H_.cols() == 0) {
        throw DimensionError("H must be non-empty");
    }
    if (!H_.allFinite()) {
        throw ParameterError("H has non-finite entries");
    }
    require_shape(R_, H_.rows(), H_.rows(), "R");
    require_size(z_, H_.rows(), "z");
    if (!z_.allFinite()) {
        throw ParameterError("z has non-finite entries");
    }
    information_ = symmetrize(H_.transpose() * llt_.solve(H_));
    information_vector_ = H_.transpose() * llt_.solve(z_);
}

LinearMeasurement LinearMeasurement::with_observation(Vector z) const { return {H_, R_, std::move(z)}; }

void require_compatible(const GaussianPrior& prior, const LinearMeasurement& meas) {
    if (meas.state_dim() != prior.dim()) {
        std::ostringstream os;
        os << "H has " << meas.state_dim() << " columns but the prior has dimension " << prior.dim();
        throw DimensionError(os.str());
    }
}

void require_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        std::ostringstream os;
        os << "lambda must lie in [0, 1], got " << lambda;
        throw RangeError(os.str());
    }
}

Vector grad_log_prior(const Vector& x, const GaussianPrior& prior) {
    require_size(x, prior.dim(), "x");
    return -prior.cholesky().solve(x - prior.x_prior());
}

Vector grad_log_likelihood(const Vector& x, const LinearMeasurement& meas) {
    require_size(x, meas.state_dim(), "x");
    return meas.H().transpose() * meas.cholesky().solve(meas.z() - meas.H() * x);
}

Matrix homotopy_information(double lambda, const GaussianPrior& prior, const LinearMeasurement& meas) {
    return prior.information() + lambda * meas.information();
}

HomotopyDerivatives homotopy_derivatives(const Vector& x, double lambda, const GaussianPrior& prior,
                                         const LinearMeasurement& meas) {
    require_lambda(lambda);
    require_compatible(prior, meas);
    HomotopyDerivatives d;
    d.lambda = lambda;
    d.grad_log_g = grad_log_prior(x, prior);
    d.grad_log_h = grad_log_likelihood(x, meas);
    d.grad_log_p = d.grad_log_g + lambda * d.grad_log_h;
    d.hess_log_g = -prior.information();
    d.hess_log_h = -meas.information();
    d.hess_log_p = d.hess_log_g + lambda * d.hess_log_h;
    d.M = -d.hess_log_p;
    d.S = -d.hess_log_g;
    return d;
}

double log_homotopy_density_unnormalized(const Vector& x, double lambda, const GaussianPrior& prior,
                                         const LinearMeasurement& meas) {
    require_lambda(lambda);
    require_compatible(prior, meas);
    require_size(x, prior.dim(), "x");
    constexpr double log_two_pi = 1.8378770664093454835606594728112;  // log(2 pi)

    const Vector dx = x - prior.x_prior();
    const double n = static_cast<double>(prior.dim());
    const double log_g =
        -0.5 * dx.dot(prior.cholesky().solve(dx)) - 0.5 * (n * log_two_pi + log_det_from_llt(prior.cholesky()));

    const Vector innovation = meas.z() - meas.H() * x;
    const double d = static_cast<double>(meas.meas_dim());
    const double log_h = -0.5 * innovation.dot(meas.cholesky().solve(innovation)) -
                         0.5 * (d * log_two_pi + log_det_from_llt(meas.cholesky()));
    return log_g + lambda * log_h;
}

}  // namespace flowfilt

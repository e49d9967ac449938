#pragma once

#include "flowfilt/linalg.hpp"

namespace flowfilt {

/// Gaussian prior g(x) = N(x_prior, P_g).
///
/// The covariance is symmetrized on construction and must then be positive
/// definite. The information matrix S = P_g^{-1} is cached because every
/// Hessian and every Lyapunov weight in the library is built from it.
class GaussianPrior {
public:
    GaussianPrior(Vector x_prior, Matrix P_g);

    Eigen::Index dim() const { return x_prior_.size(); }
    const Vector& x_prior() const { return x_prior_; }
    const Matrix& P_g() const { return P_g_; }
    const Matrix& information() const { return information_; }
    const Eigen::LLT<Matrix>& cholesky() const { return llt_; }
    // S x_prior, i.e. -grad log g evaluated at x = 0 with the sign flipped.
    const Vector& information_mean() const { return information_mean_; }

private:
    Vector x_prior_;
    Matrix P_g_;
    Eigen::LLT<Matrix> llt_;
    Matrix information_;
    Vector information_mean_;
};

/// Linear measurement z = Hx + v with v ~ N(0, R); defines the likelihood h(x).
class LinearMeasurement {
public:
    LinearMeasurement(Matrix H, Matrix R, Vector z);

    Eigen::Index state_dim() const { return H_.cols(); }
    Eigen::Index meas_dim() const { return H_.rows(); }
    const Matrix& H() const { return H_; }
    const Matrix& R() const { return R_; }
    const Vector& z() const { return z_; }
    const Eigen::LLT<Matrix>& cholesky() const { return llt_; }
    // H^T R^{-1} H (= -hess log h).
    const Matrix& information() const { return information_; }
    // H^T R^{-1} z.
    const Vector& information_vector() const { return information_vector_; }

    LinearMeasurement with_observation(Vector z) const;

private:
    Matrix H_;
    Matrix R_;
    Vector z_;
    Eigen::LLT<Matrix> llt_;
    Matrix information_;
    Vector information_vector_;
};

void require_compatible(const GaussianPrior& prior, const LinearMeasurement& meas);

struct HomotopyDerivatives {
    Vector grad_log_g;
    Vector grad_log_h;
    Vector grad_log_p;
    Matrix hess_log_g;
    Matrix hess_log_h;
    Matrix hess_log_p;
    Matrix M;  // -hess_log_p
    Matrix S;  // -hess_log_g
    double lambda = 0.0;
};

Vector grad_log_prior(const Vector& x, const GaussianPrior& prior);
Vector grad_log_likelihood(const Vector& x, const LinearMeasurement& meas);

// M(lambda) = S + lambda H^T R^{-1} H without touching x.
Matrix homotopy_information(double lambda, const GaussianPrior& prior, const LinearMeasurement& meas);

HomotopyDerivatives homotopy_derivatives(const Vector& x, double lambda, const GaussianPrior& prior,
                                         const LinearMeasurement& meas);

// log g(x) + lambda log h(x); the normalizer log c(lambda) is never formed.
double log_homotopy_density_unnormalized(const Vector& x, double lambda, const GaussianPrior& prior,
                                         const LinearMeasurement& meas);

void require_lambda(double lambda);

}  // namespace flowfilt

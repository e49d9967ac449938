#include "flowfilt/flow_family.hpp"

#include "flowfilt/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace flowfilt {

namespace {

constexpr double kPsdTolerance = 1e-10;
constexpr double kIndefiniteTolerance = 1e-8;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

// Solves against M = -hess log p. M is SPD whenever the model types are valid;
// user-built derivatives may still violate that, so failure is reported.
Eigen::LLT<Matrix> factor_information(const HomotopyDerivatives& derivs) {
    Eigen::LLT<Matrix> llt(derivs.M);
    if (llt.info() != Eigen::Success) {
        throw LinearSolveError("-hess log p is singular or indefinite");
    }
    return llt;
}

void require_square(const Matrix& m, Eigen::Index n, const char* what) { require_shape(m, n, n, what); }

std::string at_lambda(double lambda) {
    std::ostringstream os;
    os << " at lambda=" << lambda;
    return os.str();
}

}  // namespace

FlowParameterization::FlowParameterization(FlowKind kind, std::string description)
    : kind_(std::move(kind)), description_(std::move(description)) {}

FlowParameterization FlowParameterization::exact_flow() { return {flow_kind::ExactFlow{}, "exact"}; }

FlowParameterization FlowParameterization::fixed_q() { return {flow_kind::FixedQ{}, "fixed_q"}; }

FlowParameterization FlowParameterization::constant_q(Matrix Q0) {
    if (Q0.rows() != Q0.cols()) throw DimensionError("Q0 must be square");
    if (!Q0.allFinite()) throw ParameterError("Q0 has non-finite entries");
    const double scale = symmetric_norm(Q0);
    if ((Q0 - Q0.transpose()).norm() > 1e-12 * std::max(Q0.norm(), 1e-300) ||
        min_eigenvalue(Q0) < -kPsdTolerance * scale) {
        throw AdmissibilityError("Q0 must be symmetric positive semi-definite");
    }
    return {flow_kind::ConstantQ{symmetrize(Q0)}, "constant_q"};
}

FlowParameterization FlowParameterization::k_schedule(MatrixSchedule K, std::string description) {
    if (!K) throw ParameterError("empty K schedule");
    return {flow_kind::KSchedule{std::move(K)}, std::move(description)};
}

FlowParameterization FlowParameterization::reference_flow(MatrixSchedule A_hat, MatrixSchedule Q,
                                                          std::string description) {
    if (!A_hat || !Q) throw ParameterError("reference flow needs both A_hat and Q schedules");
    return {flow_kind::ReferenceFlow{std::move(A_hat), std::move(Q)}, std::move(description)};
}

Matrix FlowParameterization::gain(const HomotopyDerivatives& derivs) const {
    const Eigen::Index n = derivs.M.rows();
    return std::visit(
        overloaded{
            [&](const flow_kind::ExactFlow&) -> Matrix { return 0.5 * derivs.hess_log_h; },
            [&](const flow_kind::FixedQ&) -> Matrix { return Matrix::Zero(n, n); },
            [&](const flow_kind::ConstantQ& c) -> Matrix {
                require_square(c.Q0, n, "Q0");
                return k_from_q(c.Q0, derivs);
            },
            [&](const flow_kind::KSchedule& s) -> Matrix {
                Matrix K = s.K(derivs.lambda);
                require_square(K, n, "K(lambda)");
                return K;
            },
            [&](const flow_kind::ReferenceFlow& r) -> Matrix {
                const Matrix a_hat = r.A_hat(derivs.lambda);
                const Matrix q = r.Q(derivs.lambda);
                require_square(a_hat, n, "A_hat(lambda)");
                require_square(q, n, "Q(lambda)");
                return (derivs.hess_log_p * q - a_hat.transpose()) * derivs.hess_log_p;
            },
        },
        kind_);
}

Matrix FlowParameterization::diffusion(const HomotopyDerivatives& derivs) const {
    if (std::holds_alternative<flow_kind::ExactFlow>(kind_)) {
        return Matrix::Zero(derivs.M.rows(), derivs.M.cols());
    }
    return q_from_k(gain(derivs), derivs);
}

bool FlowParameterization::deterministic() const {
    if (std::holds_alternative<flow_kind::ExactFlow>(kind_)) return true;
    if (const auto* c = std::get_if<flow_kind::ConstantQ>(&kind_)) return c->Q0.isZero(0.0);
    return false;
}

Matrix q_from_k(const Matrix& K, const HomotopyDerivatives& derivs) {
    const Eigen::Index n = derivs.M.rows();
    require_square(K, n, "K");
    const auto llt = factor_information(derivs);
    // (hess log p)^{-1} T (hess log p)^{-1} = M^{-1} T M^{-1}; the signs cancel.
    const Matrix T = -derivs.hess_log_h + K + K.transpose();
    const Matrix left = llt.solve(T);
    return symmetrize(llt.solve(left.transpose()));
}

Matrix k_from_q(const Matrix& Q, const HomotopyDerivatives& derivs) {
    const Eigen::Index n = derivs.M.rows();
    require_square(Q, n, "Q");
    const double scale = std::max(Q.norm(), 1e-300);
    if ((Q - Q.transpose()).norm() > 1e-10 * scale || min_eigenvalue(Q) < -kPsdTolerance * symmetric_norm(Q)) {
        throw AdmissibilityError("Q must be symmetric positive semi-definite");
    }
    return symmetrize(0.5 * derivs.hess_log_p * Q * derivs.hess_log_p + 0.5 * derivs.hess_log_h);
}

bool is_admissible(const Matrix& K, const HomotopyDerivatives& derivs) {
    require_square(K, derivs.M.rows(), "K");
    const Matrix test = symmetrize(K + K.transpose() - derivs.hess_log_h);
    if (!test.allFinite()) return false;
    const double scale = symmetric_norm(test);
    if (scale == 0.0) return true;
    return min_eigenvalue(test) >= -kPsdTolerance * scale;
}

Vector drift(const Vector& x, double lambda, const Matrix& K, const GaussianPrior& prior,
             const LinearMeasurement& meas) {
    const auto d = homotopy_derivatives(x, lambda, prior, meas);
    require_square(K, d.M.rows(), "K");
    const auto llt = factor_information(d);
    // (hess log p)^{-1} v = -M^{-1} v
    const Vector inner = -llt.solve(d.grad_log_p);
    return -llt.solve(-d.grad_log_h + K * inner);
}

AffineFlowCoefficients affine_coefficients(double lambda, const Matrix& K, const GaussianPrior& prior,
                                           const LinearMeasurement& meas) {
    const Vector origin = Vector::Zero(prior.dim());
    const auto d = homotopy_derivatives(origin, lambda, prior, meas);
    if (!is_admissible(K, d)) {
        throw AdmissibilityError("gain K is not admissible" + at_lambda(lambda));
    }
    const auto llt = factor_information(d);
    AffineFlowCoefficients c;
    c.lambda = lambda;
    // M A = -(H^T R^{-1} H + K)
    c.A = -llt.solve(K - d.hess_log_h);
    c.b = drift(origin, lambda, K, prior, meas);
    c.Q = q_from_k(K, d);
    return c;
}

AffineFlowCoefficients affine_coefficients(double lambda, const FlowParameterization& params,
                                           const GaussianPrior& prior, const LinearMeasurement& meas) {
    const Vector origin = Vector::Zero(prior.dim());
    const auto d = homotopy_derivatives(origin, lambda, prior, meas);
    auto c = affine_coefficients(lambda, params.gain(d), prior, meas);
    if (params.deterministic()) c.Q.setZero();
    return c;
}

AffineFlowCoefficients exact_flow_coefficients(double lambda, const GaussianPrior& prior,
                                               const LinearMeasurement& meas) {
    require_lambda(lambda);
    require_compatible(prior, meas);
    const Eigen::Index n = prior.dim();
    const Matrix& P = prior.P_g();
    const Matrix& H = meas.H();
    const Matrix innovation_cov = symmetrize(lambda * H * P * H.transpose() + meas.R());
    const auto llt = checked_cholesky(innovation_cov, "lambda H P_g H^T + R");

    const Matrix I = Matrix::Identity(n, n);
    AffineFlowCoefficients c;
    c.lambda = lambda;
    c.A = -0.5 * P * H.transpose() * llt.solve(H);
    const Vector gain_z = P * H.transpose() * meas.cholesky().solve(meas.z());
    c.b = (I + 2.0 * lambda * c.A) * ((I + lambda * c.A) * gain_z + c.A * prior.x_prior());
    c.Q = Matrix::Zero(n, n);
    return c;
}

Matrix diffusion_factor(const Matrix& Q) {
    if (Q.rows() != Q.cols()) throw DimensionError("Q must be square");
    const Eigen::Index n = Q.rows();
    if (!Q.allFinite()) throw AdmissibilityError("Q has non-finite entries");
    if (n == 0 || Q.isZero(0.0)) return Matrix::Zero(n, 0);

    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(Q));
    const Vector& ev = es.eigenvalues();
    const double scale = ev.cwiseAbs().maxCoeff();
    if (ev(0) < -kIndefiniteTolerance * scale) {
        std::ostringstream os;
        os << "Q is indefinite (min eigenvalue " << ev(0) << ")";
        throw AdmissibilityError(os.str());
    }
    // Eigenvalues at or below the rank threshold are clamped away.
    const double rank_tol = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        if (ev(i) > rank_tol) kept.push_back(i);
    }
    Matrix q(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const Eigen::Index i = kept[j];
        q.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(i) * std::sqrt(ev(i));
    }
    return q;
}

void validate_parameterization(const FlowParameterization& params, const GaussianPrior& prior,
                               const LinearMeasurement& meas, int points) {
    if (points < 2) throw ParameterError("validation grid needs at least 2 points");
    require_compatible(prior, meas);
    const Vector origin = Vector::Zero(prior.dim());
    const bool is_callable = std::holds_alternative<flow_kind::KSchedule>(params.kind()) ||
                             std::holds_alternative<flow_kind::ReferenceFlow>(params.kind());
    for (int i = 0; i < points; ++i) {
        const double lambda = static_cast<double>(i) / static_cast<double>(points - 1);
        const auto d = homotopy_derivatives(origin, lambda, prior, meas);
        const Matrix K = params.gain(d);
        if (!K.allFinite()) {
            throw AdmissibilityError("gain K has non-finite entries" + at_lambda(lambda));
        }
        if (is_callable) {
            const Matrix again = params.gain(d);
            if (again != K) {
                throw ParameterError("flow schedule '" + params.description() +
                                     "' is not deterministic" + at_lambda(lambda));
            }
        }
        if (!is_admissible(K, d)) {
            throw AdmissibilityError("flow '" + params.description() + "' is not admissible" + at_lambda(lambda));
        }
    }
}

const char* preset_name(PresetKind kind) {
    switch (kind) {
        case PresetKind::ExactFlow: return "exact";
        case PresetKind::FixedQ: return "fixed_q";
        case PresetKind::ConstantQ: return "constant_q";
        case PresetKind::DiagnosticNoise: return "diagnostic";
        case PresetKind::Approximate: return "approximate";
    }
    return "unknown";
}

std::vector<PresetKind> all_presets() {
    return {PresetKind::ExactFlow, PresetKind::FixedQ, PresetKind::ConstantQ, PresetKind::DiagnosticNoise,
            PresetKind::Approximate};
}

FlowParameterization preset(PresetKind kind, const GaussianPrior& prior, const LinearMeasurement& meas,
                            const PresetOptions& options) {
    require_compatible(prior, meas);
    const Eigen::Index n = prior.dim();
    auto params = [&]() -> FlowParameterization {
        switch (kind) {
            case PresetKind::ExactFlow: return FlowParameterization::exact_flow();
            case PresetKind::FixedQ: return FlowParameterization::fixed_q();
            case PresetKind::ConstantQ: {
                if (!options.Q0) throw ParameterError("constant_q preset needs Q0");
                require_square(*options.Q0, n, "Q0");
                return FlowParameterization::constant_q(*options.Q0);
            }
            case PresetKind::DiagnosticNoise: {
                if (!(options.alpha > 0.0) || !std::isfinite(options.alpha)) {
                    throw ParameterError("diagnostic noise flow needs alpha > 0");
                }
                const double alpha = options.alpha;
                auto reference = [prior, meas](double lambda) {
                    return exact_flow_coefficients(lambda, prior, meas).A;
                };
                auto q = [alpha, n](double) -> Matrix { return alpha * Matrix::Identity(n, n); };
                return FlowParameterization::reference_flow(reference, q, "diagnostic");
            }
            case PresetKind::Approximate: {
                if (!options.A_hat || !options.Q) {
                    throw ParameterError("approximate flow needs A_hat and Q schedules");
                }
                return FlowParameterization::reference_flow(options.A_hat, options.Q, "approximate");
            }
        }
        throw ParameterError("unknown preset");
    }();
    validate_parameterization(params, prior, meas, options.validation_points);
    return params;
}

FlowParameterization make_flow(const FlowDescriptor& descriptor, const GaussianPrior& prior,
                               const LinearMeasurement& meas) {
    PresetOptions options;
    if (descriptor.flow == "exact") return preset(PresetKind::ExactFlow, prior, meas);
    if (descriptor.flow == "fixed_q") return preset(PresetKind::FixedQ, prior, meas);
    if (descriptor.flow == "constant_q") {
        if (!descriptor.Q0) throw ParseError("flow 'constant_q' requires Q0");
        options.Q0 = descriptor.Q0;
        return preset(PresetKind::ConstantQ, prior, meas, options);
    }
    if (descriptor.flow == "diagnostic") {
        options.alpha = descriptor.alpha.value_or(1.0);
        return preset(PresetKind::DiagnosticNoise, prior, meas, options);
    }
    throw ParseError("unknown flow '" + descriptor.flow + "'");
}

}  // namespace flowfilt

#pragma once

#include "flowfilt/gaussian_model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace flowfilt {

// Callables on lambda. They must be pure: the library evaluates them more than
// once per node and rejects schedules whose two evaluations differ.
using MatrixSchedule = std::function<Matrix(double)>;

namespace flow_kind {
struct ExactFlow {};
struct FixedQ {};
struct ConstantQ {
    Matrix Q0;
};
struct KSchedule {
    MatrixSchedule K;
};
// Flows defined relative to a linear reference flow with x-gradient A_hat(lambda)
// and a target diffusion Q(lambda) (diagnostic-noise and approximate flows).
struct ReferenceFlow {
    MatrixSchedule A_hat;
    MatrixSchedule Q;
};
}  // namespace flow_kind

using FlowKind = std::variant<flow_kind::ExactFlow, flow_kind::FixedQ, flow_kind::ConstantQ, flow_kind::KSchedule,
                              flow_kind::ReferenceFlow>;

/// One member of the parameterized flow family, identified by how its gain
/// matrix K(lambda) is produced. Immutable once built.
class FlowParameterization {
public:
    FlowParameterization(FlowKind kind, std::string description);

    static FlowParameterization exact_flow();
    static FlowParameterization fixed_q();
    static FlowParameterization constant_q(Matrix Q0);
    static FlowParameterization k_schedule(MatrixSchedule K, std::string description = "k_schedule");
    static FlowParameterization reference_flow(MatrixSchedule A_hat, MatrixSchedule Q,
                                               std::string description = "reference_flow");

    const FlowKind& kind() const { return kind_; }
    const std::string& description() const { return description_; }

    // K(lambda) for the model whose Hessians are in `derivs`.
    Matrix gain(const HomotopyDerivatives& derivs) const;
    // Q(lambda) obtained from gain() through q_from_k; exactly zero for the exact flow.
    Matrix diffusion(const HomotopyDerivatives& derivs) const;
    // True when the diffusion vanishes identically by construction.
    bool deterministic() const;

private:
    FlowKind kind_;
    std::string description_;
};

struct AffineFlowCoefficients {
    Matrix A;
    Vector b;
    Matrix Q;
    double lambda = 0.0;
};

Matrix q_from_k(const Matrix& K, const HomotopyDerivatives& derivs);
Matrix k_from_q(const Matrix& Q, const HomotopyDerivatives& derivs);

// K + K^T - hess log h >= 0, judged with a 1e-10 relative eigenvalue tolerance.
bool is_admissible(const Matrix& K, const HomotopyDerivatives& derivs);

Vector drift(const Vector& x, double lambda, const Matrix& K, const GaussianPrior& prior,
             const LinearMeasurement& meas);

AffineFlowCoefficients affine_coefficients(double lambda, const Matrix& K, const GaussianPrior& prior,
                                           const LinearMeasurement& meas);
AffineFlowCoefficients affine_coefficients(double lambda, const FlowParameterization& params,
                                           const GaussianPrior& prior, const LinearMeasurement& meas);

// Closed-form coefficients of the deterministic exact flow.
AffineFlowCoefficients exact_flow_coefficients(double lambda, const GaussianPrior& prior,
                                               const LinearMeasurement& meas);

// q with q q^T = Q; n x m where m is the numerical rank. Q = 0 gives an n x 0 factor.
Matrix diffusion_factor(const Matrix& Q);

inline constexpr int kDefaultValidationPoints = 101;

// Checks admissibility (and schedule purity) on a uniform lambda grid.
void validate_parameterization(const FlowParameterization& params, const GaussianPrior& prior,
                               const LinearMeasurement& meas, int points = kDefaultValidationPoints);

enum class PresetKind { ExactFlow, FixedQ, ConstantQ, DiagnosticNoise, Approximate };

struct PresetOptions {
    std::optional<Matrix> Q0;        // ConstantQ
    double alpha = 1.0;              // DiagnosticNoise: Q = alpha I
    MatrixSchedule A_hat;            // Approximate
    MatrixSchedule Q;                // Approximate
    int validation_points = kDefaultValidationPoints;
};

/// Builds and validates a named flow. DiagnosticNoise uses the exact flow as
/// its reference; Approximate takes the reference gradient from the options.
FlowParameterization preset(PresetKind kind, const GaussianPrior& prior, const LinearMeasurement& meas,
                            const PresetOptions& options = {});

const char* preset_name(PresetKind kind);
std::vector<PresetKind> all_presets();

/// Config-file form of a flow: {"flow": "exact"|"fixed_q"|"constant_q"|"diagnostic", "Q0": ..., "alpha": ...}.
struct FlowDescriptor {
    std::string flow = "fixed_q";
    std::optional<Matrix> Q0;
    std::optional<double> alpha;
};

FlowParameterization make_flow(const FlowDescriptor& descriptor, const GaussianPrior& prior,
                               const LinearMeasurement& meas);

}  // namespace flowfilt

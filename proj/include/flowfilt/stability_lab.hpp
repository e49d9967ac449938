#pragma once

#include "flowfilt/sde_integrator.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flowfilt {

/// Error x1 - x2 between two flow solutions along the grid, with the Lyapunov
/// quantities V_M = e^T M(lambda) e and V_S = e^T S e.
struct ErrorTrajectory {
    std::vector<double> nodes;
    std::vector<Vector> errors;
    std::vector<double> V_M;
    std::vector<double> V_S;
};

/// de/d lambda = A(lambda) e with a weight M(lambda) and a constant S. Flows
/// produce one of these; tests inject hand-built systems through the same type.
struct LinearErrorSystem {
    std::function<Matrix(double)> A;
    std::function<Matrix(double)> M;
    Matrix S;
};

LinearErrorSystem flow_error_system(const FlowParameterization& params, const GaussianPrior& prior,
                                    const LinearMeasurement& meas);

// RK4 on the grid nodes (the scheme tag is ignored; the error ODE is deterministic).
ErrorTrajectory integrate_error_system(const LinearErrorSystem& system, const Vector& e0, const LambdaGrid& grid);

ErrorTrajectory error_trajectory(const Vector& x1_0, const Vector& x2_0, const FlowParameterization& params,
                                 const LambdaGrid& grid, const GaussianPrior& prior, const LinearMeasurement& meas);

// dV/d lambda = -(M e)^T Q (M e)
double lyapunov_derivative(const Vector& xtilde, double lambda, const Matrix& Q, const HomotopyDerivatives& derivs);

struct FtsVerdict {
    bool holds = false;
    bool vacuous = false;  // premise e0^T S e0 < alpha failed
    double alpha = 0.0;
    double beta = 0.0;
    Matrix S;
};

struct FtcsVerdict {
    bool holds = false;
    bool vacuous = false;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    std::optional<double> lambda1;  // first node of the tail where e^T S e < beta
};

struct FtssVerdict {
    bool holds = false;
    double alpha = 0.0;
    double beta = 0.0;
    double epsilon = 0.0;
    double empirical_probability = 0.0;  // Prob[e^T S e <= beta on the whole path]
    double margin = 0.0;                 // 3 binomial standard deviations
    std::size_t draws = 0;
    bool markov_bound_holds = false;     // exceedance <= alpha/beta + margin
};

// S defaults to the trajectory's own weight (V_S).
FtsVerdict check_fts(const ErrorTrajectory& trajectory, double alpha, double beta,
                     const std::optional<Matrix>& S = std::nullopt);
FtcsVerdict check_ftcs(const ErrorTrajectory& trajectory, double alpha, double beta, double gamma,
                       const std::optional<Matrix>& S = std::nullopt);

/// Monte Carlo check of finite time stochastic stability. Initial errors are
/// scaled differences of two prior draws with E[e0^T S e0] = alpha.
FtssVerdict check_ftss(const FlowParameterization& params, const GaussianPrior& prior, const LinearMeasurement& meas,
                       const std::optional<Matrix>& S, double alpha, double beta, double epsilon, std::size_t N_mc,
                       std::uint64_t seed, const LambdaGrid& grid);

// sigma = lambda_min(Q0) lambda_min(S) with Q0 = (min over nodes of lambda_min(Q)) I.
double contraction_rate(const FlowParameterization& params, const GaussianPrior& prior,
                        const LinearMeasurement& meas, const LambdaGrid& grid);

// Max over particles and nodes of |V_M - alpha| / alpha for exact-flow errors
// started on {e : e^T S e = alpha}.
double ellipsoid_invariance_check(const GaussianPrior& prior, const LinearMeasurement& meas, const LambdaGrid& grid,
                                  std::size_t n_particles, std::uint64_t seed);

enum class Regime { ConstantV, NonIncreasing, ExponentialDecay };

const char* regime_name(Regime regime);

struct RegimeClassification {
    Regime regime = Regime::NonIncreasing;
    double sigma = 0.0;
    double min_q_eigenvalue = 0.0;
};

RegimeClassification classify_regime(const FlowParameterization& params, const GaussianPrior& prior,
                                     const LinearMeasurement& meas, const LambdaGrid& grid);

struct StabilityQuery {
    // Initial error; drawn from the prior (and rescaled to e0^T S e0 = 0.99 fts_alpha) when absent.
    std::optional<Vector> initial_error;
    double fts_alpha = 1.0;
    double fts_beta = 2.0;
    double ftcs_alpha = 1.0;
    std::optional<double> ftcs_beta;  // default: midway between alpha e^{-sigma} and alpha, or 0.75 alpha
    double ftcs_gamma = 2.0;
    double ftss_alpha = 1.0;
    double ftss_beta = 4.0;
    double ftss_epsilon = 0.25;
    std::size_t n_mc = 10000;
    std::uint64_t seed = 0;
    int max_refinements = 3;
};

struct StabilityReport {
    FtsVerdict fts;
    FtcsVerdict ftcs;
    FtssVerdict ftss;
    double sigma = 0.0;
    Regime regime = Regime::NonIncreasing;
    int grid_steps = 0;  // grid on which the verdicts agreed with the doubled grid
    ErrorTrajectory trajectory;
};

/// Runs all checkers, then repeats them on a doubled grid; verdicts are
/// reported only once two consecutive grids agree.
StabilityReport assess_stability(const FlowParameterization& params, const GaussianPrior& prior,
                                 const LinearMeasurement& meas, const LambdaGrid& grid, const StabilityQuery& query);

}  // namespace flowfilt

#pragma once

#include "flowfilt/flow_family.hpp"
#include "flowfilt/particle_ensemble.hpp"
#include "flowfilt/random.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flowfilt {

enum class Scheme { EulerMaruyama, DeterministicRK4 };

const char* scheme_name(Scheme scheme);
Scheme parse_scheme(const std::string& name);

/// Discretization of lambda in [0, 1]: nodes strictly increasing, first node
/// exactly 0, last node exactly 1.
class LambdaGrid {
public:
    static constexpr int kDefaultSteps = 1000;

    static LambdaGrid uniform(int steps = kDefaultSteps, Scheme scheme = Scheme::EulerMaruyama);
    static LambdaGrid from_nodes(std::vector<double> nodes, Scheme scheme = Scheme::EulerMaruyama);

    int steps() const { return static_cast<int>(nodes_.size()) - 1; }
    const std::vector<double>& nodes() const { return nodes_; }
    Scheme scheme() const { return scheme_; }
    double step_size(int k) const { return nodes_[k + 1] - nodes_[k]; }

    // Every interval split in two.
    LambdaGrid refined() const;
    LambdaGrid with_scheme(Scheme scheme) const;

private:
    LambdaGrid(std::vector<double> nodes, Scheme scheme);
    std::vector<double> nodes_;
    Scheme scheme_;
};

/// Affine coefficients sampled once per grid node (and per interval midpoint
/// for RK4), shared by every particle.
struct CoefficientTable {
    std::vector<AffineFlowCoefficients> nodes;
    std::vector<AffineFlowCoefficients> midpoints;  // empty unless requested
    std::vector<Matrix> factors;                    // q at each node, n x m_k
    bool deterministic = false;                     // Q vanishes at every node
};

CoefficientTable build_coefficient_table(const FlowParameterization& params, const LambdaGrid& grid,
                                         const GaussianPrior& prior, const LinearMeasurement& meas,
                                         bool with_midpoints);

struct ParticlePath {
    std::vector<double> lambdas;
    std::vector<Vector> states;
};

inline constexpr double kDivergenceBound = 1e12;

ParticlePath propagate_particle(const Vector& x0, const FlowParameterization& params, const LambdaGrid& grid,
                                const NoiseStream& noise, const GaussianPrior& prior,
                                const LinearMeasurement& meas);

// Table-driven core; `particle` only labels a divergence error.
ParticlePath propagate_particle(const Vector& x0, const CoefficientTable& table, const LambdaGrid& grid,
                                const NoiseStream& noise, std::ptrdiff_t particle = -1);
Vector propagate_terminal(const Vector& x0, const CoefficientTable& table, const LambdaGrid& grid,
                          const NoiseStream& noise, std::ptrdiff_t particle = -1);

struct PropagationOptions {
    unsigned threads = 0;  // 0: hardware concurrency
};

/// Moves every particle from lambda = 0 to lambda = 1. Particle with id i uses
/// stream (ensemble.seed, i), so results do not depend on order or threads.
ParticleEnsemble propagate_ensemble(const ParticleEnsemble& ensemble, const FlowParameterization& params,
                                    const LambdaGrid& grid, const GaussianPrior& prior,
                                    const LinearMeasurement& meas, const PropagationOptions& options = {});
ParticleEnsemble propagate_ensemble(const ParticleEnsemble& ensemble, const CoefficientTable& table,
                                    const LambdaGrid& grid, const PropagationOptions& options = {});

}  // namespace flowfilt

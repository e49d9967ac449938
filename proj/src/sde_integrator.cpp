#include "flowfilt/sde_integrator.hpp"

#include "flowfilt/errors.hpp"
#include "flowfilt/parallel.hpp"

#include <cmath>
#include <sstream>

namespace flowfilt {

namespace {

[[noreturn]] void diverged(std::size_t step, std::ptrdiff_t particle) {
    std::ostringstream os;
    os << "integration diverged at step " << step;
    if (particle >= 0) os << " (particle " << particle << ")";
    throw DivergenceError(os.str(), step, particle);
}

inline void guard(const Vector& x, std::size_t step, std::ptrdiff_t particle) {
    if (!x.allFinite() || x.norm() > kDivergenceBound) diverged(step, particle);
}

bool negligible(const Matrix& Q, const GaussianPrior& prior) {
    return Q.cwiseAbs().maxCoeff() <= 1e-12 * prior.P_g().cwiseAbs().maxCoeff();
}

// Advances x over one interval; `scratch` holds temporaries so the loop does
// not allocate.
struct Stepper {
    const CoefficientTable& table;
    const LambdaGrid& grid;
    std::uint64_t key;
    Vector drift, stage, k1, k2, k3, xi;

    Stepper(const CoefficientTable& t, const LambdaGrid& g, const NoiseStream& s, Eigen::Index n)
        : table(t), grid(g), key(s.key()), drift(n), stage(n), k1(n), k2(n), k3(n), xi(n) {}

    void euler_maruyama(Vector& x, int k) {
        const auto& c = table.nodes[k];
        const double h = grid.step_size(k);
        drift.noalias() = c.A * x;
        drift += c.b;
        x += h * drift;
        const Matrix& q = table.factors[k];
        if (q.cols() > 0) {
            auto draws = xi.head(q.cols());
            standard_normals(key, static_cast<std::uint64_t>(k), draws);
            x.noalias() += std::sqrt(h) * (q * draws);
        }
    }

    void rk4(Vector& x, int k) {
        const auto& c0 = table.nodes[k];
        const auto& cm = table.midpoints[k];
        const auto& c1 = table.nodes[k + 1];
        const double h = grid.step_size(k);
        k1.noalias() = c0.A * x;
        k1 += c0.b;
        stage = x + 0.5 * h * k1;
        k2.noalias() = cm.A * stage;
        k2 += cm.b;
        stage = x + 0.5 * h * k2;
        k3.noalias() = cm.A * stage;
        k3 += cm.b;
        stage = x + h * k3;
        drift.noalias() = c1.A * stage;
        drift += c1.b;
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + drift);
    }

    void step(Vector& x, int k) {
        if (grid.scheme() == Scheme::DeterministicRK4) {
            rk4(x, k);
        } else {
            euler_maruyama(x, k);
        }
    }
};

// The n = 1 Euler-Maruyama loop without Eigen temporaries; same draws and
// arithmetic order as Stepper::euler_maruyama.
double scalar_terminal(double x, const CoefficientTable& table, const LambdaGrid& grid, std::uint64_t key,
                       std::ptrdiff_t particle) {
    for (int k = 0; k < grid.steps(); ++k) {
        const auto& c = table.nodes[k];
        const double h = grid.step_size(k);
        x += h * (c.A(0, 0) * x + c.b(0));
        const Matrix& q = table.factors[k];
        if (q.cols() > 0) x += std::sqrt(h) * (q(0, 0) * standard_normal(key, static_cast<std::uint64_t>(k)));
        if (!std::isfinite(x) || std::abs(x) > kDivergenceBound) diverged(static_cast<std::size_t>(k) + 1, particle);
    }
    return x;
}

void require_table(const CoefficientTable& table, const LambdaGrid& grid) {
    if (table.nodes.size() != grid.nodes().size() || table.factors.size() != grid.nodes().size()) {
        throw ParameterError("coefficient table does not match the grid");
    }
    if (grid.scheme() == Scheme::DeterministicRK4) {
        if (table.midpoints.size() != static_cast<std::size_t>(grid.steps())) {
            throw ParameterError("RK4 needs midpoint coefficients");
        }
        if (!table.deterministic) {
            throw ParameterError("RK4 is only available for flows with zero diffusion");
        }
    }
}

}  // namespace

const char* scheme_name(Scheme scheme) {
    return scheme == Scheme::EulerMaruyama ? "euler_maruyama" : "rk4";
}

Scheme parse_scheme(const std::string& name) {
    if (name == "euler_maruyama" || name == "em") return Scheme::EulerMaruyama;
    if (name == "rk4") return Scheme::DeterministicRK4;
    throw ParseError("unknown integration scheme '" + name + "'");
}

LambdaGrid::LambdaGrid(std::vector<double> nodes, Scheme scheme) : nodes_(std::move(nodes)), scheme_(scheme) {}

LambdaGrid LambdaGrid::uniform(int steps, Scheme scheme) {
    if (steps < 1) throw ParameterError("grid needs at least one step");
    std::vector<double> nodes(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) nodes[k] = static_cast<double>(k) / static_cast<double>(steps);
    nodes.back() = 1.0;
    return {std::move(nodes), scheme};
}

LambdaGrid LambdaGrid::from_nodes(std::vector<double> nodes, Scheme scheme) {
    if (nodes.size() < 2) throw ParameterError("grid needs at least two nodes");
    if (nodes.front() != 0.0 || nodes.back() != 1.0) throw ParameterError("grid must start at 0 and end at 1");
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (!(nodes[i] > nodes[i - 1])) throw ParameterError("grid nodes must be strictly increasing");
    }
    return {std::move(nodes), scheme};
}

LambdaGrid LambdaGrid::refined() const {
    std::vector<double> nodes;
    nodes.reserve(2 * nodes_.size() - 1);
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
        nodes.push_back(nodes_[i]);
        nodes.push_back(0.5 * (nodes_[i] + nodes_[i + 1]));
    }
    nodes.push_back(1.0);
    return {std::move(nodes), scheme_};
}

LambdaGrid LambdaGrid::with_scheme(Scheme scheme) const { return {nodes_, scheme}; }

CoefficientTable build_coefficient_table(const FlowParameterization& params, const LambdaGrid& grid,
                                         const GaussianPrior& prior, const LinearMeasurement& meas,
                                         bool with_midpoints) {
    require_compatible(prior, meas);
    CoefficientTable table;
    const auto& nodes = grid.nodes();
    table.nodes.reserve(nodes.size());
    table.factors.reserve(nodes.size());
    table.deterministic = true;
    for (double lambda : nodes) {
        auto c = affine_coefficients(lambda, params, prior, meas);
        if (!negligible(c.Q, prior)) table.deterministic = false;
        table.factors.push_back(diffusion_factor(c.Q));
        table.nodes.push_back(std::move(c));
    }
    if (with_midpoints) {
        table.midpoints.reserve(nodes.size() - 1);
        for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
            auto c = affine_coefficients(0.5 * (nodes[k] + nodes[k + 1]), params, prior, meas);
            if (!negligible(c.Q, prior)) table.deterministic = false;
            table.midpoints.push_back(std::move(c));
        }
    }
    if (grid.scheme() == Scheme::DeterministicRK4 && !table.deterministic) {
        throw ParameterError("RK4 is only available for flows with zero diffusion; '" + params.description() +
                             "' has Q != 0");
    }
    return table;
}

ParticlePath propagate_particle(const Vector& x0, const CoefficientTable& table, const LambdaGrid& grid,
                                const NoiseStream& noise, std::ptrdiff_t particle) {
    require_table(table, grid);
    require_size(x0, table.nodes.front().A.rows(), "x0");
    if (!x0.allFinite()) throw ParameterError("x0 is not finite");
    ParticlePath path;
    path.lambdas = grid.nodes();
    path.states.reserve(grid.nodes().size());
    Vector x = x0;
    path.states.push_back(x);
    Stepper stepper(table, grid, noise, x.size());
    for (int k = 0; k < grid.steps(); ++k) {
        stepper.step(x, k);
        guard(x, static_cast<std::size_t>(k) + 1, particle);
        path.states.push_back(x);
    }
    return path;
}

Vector propagate_terminal(const Vector& x0, const CoefficientTable& table, const LambdaGrid& grid,
                          const NoiseStream& noise, std::ptrdiff_t particle) {
    if (x0.size() == 1 && grid.scheme() == Scheme::EulerMaruyama) {
        return Vector::Constant(1, scalar_terminal(x0(0), table, grid, noise.key(), particle));
    }
    Vector x = x0;
    Stepper stepper(table, grid, noise, x.size());
    for (int k = 0; k < grid.steps(); ++k) {
        stepper.step(x, k);
        guard(x, static_cast<std::size_t>(k) + 1, particle);
    }
    return x;
}

ParticlePath propagate_particle(const Vector& x0, const FlowParameterization& params, const LambdaGrid& grid,
                                const NoiseStream& noise, const GaussianPrior& prior,
                                const LinearMeasurement& meas) {
    const auto table =
        build_coefficient_table(params, grid, prior, meas, grid.scheme() == Scheme::DeterministicRK4);
    return propagate_particle(x0, table, grid, noise);
}

ParticleEnsemble propagate_ensemble(const ParticleEnsemble& ensemble, const CoefficientTable& table,
                                    const LambdaGrid& grid, const PropagationOptions& options) {
    ensemble.validate();
    if (ensemble.lambda != 0.0) throw ParameterError("ensemble must start at lambda = 0");
    require_table(table, grid);
    if (ensemble.dim() != table.nodes.front().A.rows()) {
        throw DimensionError("ensemble dimension does not match the model");
    }
    ParticleEnsemble out = ensemble;
    out.lambda = 1.0;
    parallel_for(ensemble.size(), options.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            const NoiseStream noise{ensemble.seed, ensemble.ids[i], NoiseDomain::Diffusion};
            out.particles.col(col) =
                propagate_terminal(ensemble.particles.col(col), table, grid, noise, static_cast<std::ptrdiff_t>(i));
        }
    });
    return out;
}

ParticleEnsemble propagate_ensemble(const ParticleEnsemble& ensemble, const FlowParameterization& params,
                                    const LambdaGrid& grid, const GaussianPrior& prior,
                                    const LinearMeasurement& meas, const PropagationOptions& options) {
    ensemble.validate();
    require_compatible(prior, meas);
    if (ensemble.dim() != prior.dim()) throw DimensionError("ensemble dimension does not match the model");
    const auto table =
        build_coefficient_table(params, grid, prior, meas, grid.scheme() == Scheme::DeterministicRK4);
    return propagate_ensemble(ensemble, table, grid, options);
}

}  // namespace flowfilt

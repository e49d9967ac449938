#include "flowfilt/stability_lab.hpp"

#include "flowfilt/errors.hpp"
#include "flowfilt/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowfilt {

namespace {

// State transition matrices Phi(lambda_k) of the error ODE, by RK4 on
// dPhi/d lambda = A Phi. RK4 is linear in the state, so Phi_k e0 equals the
// RK4 solution started from e0.
struct Transitions {
    std::vector<Matrix> phi;
    std::vector<Matrix> weight;  // M at each node
};

Transitions transitions(const LinearErrorSystem& system, const LambdaGrid& grid) {
    const auto& nodes = grid.nodes();
    Transitions t;
    t.phi.reserve(nodes.size());
    t.weight.reserve(nodes.size());
    Matrix A0 = system.A(nodes[0]);
    const Eigen::Index n = A0.rows();
    Matrix phi = Matrix::Identity(n, n);
    t.phi.push_back(phi);
    t.weight.push_back(system.M(nodes[0]));
    for (int k = 0; k < grid.steps(); ++k) {
        const double h = grid.step_size(k);
        const Matrix Am = system.A(0.5 * (nodes[k] + nodes[k + 1]));
        const Matrix A1 = system.A(nodes[k + 1]);
        const Matrix k1 = A0 * phi;
        const Matrix k2 = Am * (phi + 0.5 * h * k1);
        const Matrix k3 = Am * (phi + 0.5 * h * k2);
        const Matrix k4 = A1 * (phi + h * k3);
        phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!phi.allFinite() || phi.norm() > kDivergenceBound) {
            std::ostringstream os;
            os << "error system diverged at step " << k + 1;
            throw DivergenceError(os.str(), static_cast<std::size_t>(k) + 1);
        }
        t.phi.push_back(phi);
        t.weight.push_back(system.M(nodes[k + 1]));
        A0 = A1;
    }
    return t;
}

double quad(const Vector& e, const Matrix& W) { return e.dot(W * e); }

std::vector<double> weighted(const ErrorTrajectory& trajectory, const std::optional<Matrix>& S) {
    if (!S) return trajectory.V_S;
    std::vector<double> v;
    v.reserve(trajectory.errors.size());
    for (const auto& e : trajectory.errors) {
        require_shape(*S, e.size(), e.size(), "S");
        v.push_back(quad(e, *S));
    }
    return v;
}

Matrix default_weight(const GaussianPrior& prior, const std::optional<Matrix>& S) {
    if (!S) return prior.information();
    require_shape(*S, prior.dim(), prior.dim(), "S");
    checked_cholesky(symmetrize(*S), "S");
    return symmetrize(*S);
}

// Diffusion statistics over the grid nodes.
struct DiffusionSummary {
    double min_eigenvalue = 0.0;
    double max_norm = 0.0;
};

DiffusionSummary summarize_diffusion(const FlowParameterization& params, const GaussianPrior& prior,
                                     const LinearMeasurement& meas, const LambdaGrid& grid) {
    DiffusionSummary s;
    s.min_eigenvalue = std::numeric_limits<double>::infinity();
    const Vector origin = Vector::Zero(prior.dim());
    for (double lambda : grid.nodes()) {
        const auto d = homotopy_derivatives(origin, lambda, prior, meas);
        const Matrix Q = params.diffusion(d);
        const double norm = symmetric_norm(Q);
        const double low = min_eigenvalue(Q);
        if (low < -1e-8 * norm) {
            std::ostringstream os;
            os << "diffusion is indefinite at lambda=" << lambda << " (min eigenvalue " << low << ")";
            throw AdmissibilityError(os.str());
        }
        s.min_eigenvalue = std::min(s.min_eigenvalue, low);
        s.max_norm = std::max(s.max_norm, norm);
    }
    return s;
}

bool diffusion_vanishes(const DiffusionSummary& s, const GaussianPrior& prior) {
    return s.max_norm <= 1e-12 * symmetric_norm(prior.P_g());
}

Vector prior_difference(const GaussianPrior& prior, std::uint64_t seed, std::uint64_t draw) {
    const Eigen::Index n = prior.dim();
    const Matrix L = prior.cholesky().matrixL();
    const NoiseStream a{seed, 2 * draw, NoiseDomain::StabilityDraw};
    const NoiseStream b{seed, 2 * draw + 1, NoiseDomain::StabilityDraw};
    return L * (a.normals(0, n) - b.normals(0, n));
}

}  // namespace

LinearErrorSystem flow_error_system(const FlowParameterization& params, const GaussianPrior& prior,
                                    const LinearMeasurement& meas) {
    require_compatible(prior, meas);
    LinearErrorSystem system;
    system.A = [params, prior, meas](double lambda) { return affine_coefficients(lambda, params, prior, meas).A; };
    system.M = [prior, meas](double lambda) { return homotopy_information(lambda, prior, meas); };
    system.S = prior.information();
    return system;
}

ErrorTrajectory integrate_error_system(const LinearErrorSystem& system, const Vector& e0, const LambdaGrid& grid) {
    if (!system.A || !system.M) throw ParameterError("error system needs A and M");
    require_shape(system.S, e0.size(), e0.size(), "S");
    const auto t = transitions(system, grid);
    ErrorTrajectory out;
    out.nodes = grid.nodes();
    for (std::size_t k = 0; k < t.phi.size(); ++k) {
        Vector e = t.phi[k] * e0;
        out.V_M.push_back(quad(e, t.weight[k]));
        out.V_S.push_back(quad(e, system.S));
        out.errors.push_back(std::move(e));
    }
    return out;
}

ErrorTrajectory error_trajectory(const Vector& x1_0, const Vector& x2_0, const FlowParameterization& params,
                                 const LambdaGrid& grid, const GaussianPrior& prior, const LinearMeasurement& meas) {
    require_size(x1_0, prior.dim(), "x1_0");
    require_size(x2_0, prior.dim(), "x2_0");
    return integrate_error_system(flow_error_system(params, prior, meas), x1_0 - x2_0, grid);
}

double lyapunov_derivative(const Vector& xtilde, double lambda, const Matrix& Q, const HomotopyDerivatives& derivs) {
    require_size(xtilde, derivs.M.rows(), "xtilde");
    require_shape(Q, derivs.M.rows(), derivs.M.cols(), "Q");
    (void)lambda;  // M in derivs already carries lambda
    const Vector Me = derivs.M * xtilde;
    return -Me.dot(Q * Me);
}

FtsVerdict check_fts(const ErrorTrajectory& trajectory, double alpha, double beta, const std::optional<Matrix>& S) {
    if (!(alpha > 0.0 && alpha < beta)) throw ParameterError("finite time stability needs 0 < alpha < beta");
    const auto v = weighted(trajectory, S);
    FtsVerdict out;
    out.alpha = alpha;
    out.beta = beta;
    if (S) out.S = *S;
    if (v.empty() || !(v.front() < alpha)) {
        out.holds = true;
        out.vacuous = true;
        return out;
    }
    out.holds = std::all_of(v.begin(), v.end(), [&](double x) { return x < beta; });
    return out;
}

FtcsVerdict check_ftcs(const ErrorTrajectory& trajectory, double alpha, double beta, double gamma,
                       const std::optional<Matrix>& S) {
    if (!(beta > 0.0 && beta < alpha && alpha < gamma)) {
        throw ParameterError("contractive stability needs 0 < beta < alpha < gamma");
    }
    const auto v = weighted(trajectory, S);
    FtcsVerdict out;
    out.alpha = alpha;
    out.beta = beta;
    out.gamma = gamma;
    if (v.empty() || !(v.front() < alpha)) {
        out.holds = true;
        out.vacuous = true;
        return out;
    }
    const bool bounded = std::all_of(v.begin(), v.end(), [&](double x) { return x < gamma; });
    // Walk back from lambda = 1 while the tighter bound holds.
    std::size_t tail = v.size();
    while (tail > 0 && v[tail - 1] < beta) --tail;
    if (tail < v.size()) out.lambda1 = trajectory.nodes[tail];
    out.holds = bounded && out.lambda1.has_value();
    return out;
}

FtssVerdict check_ftss(const FlowParameterization& params, const GaussianPrior& prior, const LinearMeasurement& meas,
                       const std::optional<Matrix>& S, double alpha, double beta, double epsilon, std::size_t N_mc,
                       std::uint64_t seed, const LambdaGrid& grid) {
    if (!(alpha > 0.0 && alpha < beta)) throw ParameterError("stochastic stability needs 0 < alpha < beta");
    if (!(epsilon < 1.0 && alpha / beta <= epsilon)) {
        throw ParameterError("stochastic stability needs alpha/beta <= epsilon < 1");
    }
    if (N_mc < 100) throw ParameterError("stochastic stability needs at least 100 draws");
    const Matrix weight = default_weight(prior, S);
    const auto t = transitions(flow_error_system(params, prior, meas), grid);

    // E[(a - b)^T S (a - b)] = 2 tr(S P_g) for independent prior draws a, b.
    const double scale = std::sqrt(alpha / (2.0 * (weight * prior.P_g()).trace()));
    const Eigen::Index n = prior.dim();
    Matrix initial(n, static_cast<Eigen::Index>(N_mc));
    for (std::size_t i = 0; i < N_mc; ++i) {
        initial.col(static_cast<Eigen::Index>(i)) = scale * prior_difference(prior, seed, i);
    }
    std::vector<double> path_max(N_mc, 0.0);
    for (const auto& phi : t.phi) {
        const Matrix errors = phi * initial;
        const Matrix weighted_errors = weight * errors;
        for (std::size_t i = 0; i < N_mc; ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            path_max[i] = std::max(path_max[i], errors.col(c).dot(weighted_errors.col(c)));
        }
    }
    const auto within = static_cast<std::size_t>(
        std::count_if(path_max.begin(), path_max.end(), [&](double v) { return v <= beta; }));

    FtssVerdict out;
    out.alpha = alpha;
    out.beta = beta;
    out.epsilon = epsilon;
    out.draws = N_mc;
    out.empirical_probability = static_cast<double>(within) / static_cast<double>(N_mc);
    out.margin = 3.0 * std::sqrt(epsilon * (1.0 - epsilon) / static_cast<double>(N_mc));
    out.holds = out.empirical_probability >= (1.0 - epsilon) - out.margin;
    out.markov_bound_holds = (1.0 - out.empirical_probability) <= alpha / beta + out.margin;
    return out;
}

double contraction_rate(const FlowParameterization& params, const GaussianPrior& prior,
                        const LinearMeasurement& meas, const LambdaGrid& grid) {
    const auto s = summarize_diffusion(params, prior, meas, grid);
    if (diffusion_vanishes(s, prior) || s.min_eigenvalue <= 1e-10 * s.max_norm) return 0.0;
    return s.min_eigenvalue * min_eigenvalue(prior.information());
}

double ellipsoid_invariance_check(const GaussianPrior& prior, const LinearMeasurement& meas, const LambdaGrid& grid,
                                  std::size_t n_particles, std::uint64_t seed) {
    if (n_particles == 0) return 0.0;
    constexpr double level = 1.0;
    const auto t = transitions(flow_error_system(FlowParameterization::exact_flow(), prior, meas), grid);
    const Matrix& S = prior.information();
    double worst = 0.0;
    for (std::size_t i = 0; i < n_particles; ++i) {
        const NoiseStream stream{seed, i, NoiseDomain::StabilityDraw};
        Vector e0 = stream.normals(0, prior.dim());
        e0 *= std::sqrt(level / quad(e0, S));
        for (std::size_t k = 0; k < t.phi.size(); ++k) {
            const Vector e = t.phi[k] * e0;
            worst = std::max(worst, std::abs(quad(e, t.weight[k]) - level) / level);
        }
    }
    return worst;
}

const char* regime_name(Regime regime) {
    switch (regime) {
        case Regime::ConstantV: return "ConstantV";
        case Regime::NonIncreasing: return "NonIncreasing";
        case Regime::ExponentialDecay: return "ExponentialDecay";
    }
    return "unknown";
}

RegimeClassification classify_regime(const FlowParameterization& params, const GaussianPrior& prior,
                                     const LinearMeasurement& meas, const LambdaGrid& grid) {
    const auto s = summarize_diffusion(params, prior, meas, grid);
    RegimeClassification out;
    out.min_q_eigenvalue = s.min_eigenvalue;
    if (diffusion_vanishes(s, prior)) {
        out.regime = Regime::ConstantV;
    } else if (s.min_eigenvalue > 1e-10 * s.max_norm) {
        out.regime = Regime::ExponentialDecay;
        out.sigma = s.min_eigenvalue * min_eigenvalue(prior.information());
    } else {
        out.regime = Regime::NonIncreasing;
    }
    return out;
}

StabilityReport assess_stability(const FlowParameterization& params, const GaussianPrior& prior,
                                 const LinearMeasurement& meas, const LambdaGrid& grid, const StabilityQuery& query) {
    const auto regime = classify_regime(params, prior, meas, grid);
    const double sigma = contraction_rate(params, prior, meas, grid);

    Vector e0;
    if (query.initial_error) {
        e0 = *query.initial_error;
        require_size(e0, prior.dim(), "initial_error");
    } else {
        e0 = prior_difference(prior, query.seed, 0);
        e0 *= std::sqrt(0.99 * query.fts_alpha / quad(e0, prior.information()));
    }
    const double ftcs_beta = query.ftcs_beta.value_or(
        sigma > 0.0 ? 0.5 * query.ftcs_alpha * (1.0 + std::exp(-sigma)) : 0.75 * query.ftcs_alpha);

    auto evaluate = [&](const LambdaGrid& g) {
        StabilityReport r;
        r.trajectory = integrate_error_system(flow_error_system(params, prior, meas), e0, g);
        r.fts = check_fts(r.trajectory, query.fts_alpha, query.fts_beta);
        r.fts.S = prior.information();
        r.ftcs = check_ftcs(r.trajectory, query.ftcs_alpha, ftcs_beta, query.ftcs_gamma);
        r.ftss = check_ftss(params, prior, meas, std::nullopt, query.ftss_alpha, query.ftss_beta, query.ftss_epsilon,
                            query.n_mc, query.seed, g);
        r.sigma = sigma;
        r.regime = regime.regime;
        r.grid_steps = g.steps();
        return r;
    };
    auto agree = [](const StabilityReport& a, const StabilityReport& b) {
        return a.fts.holds == b.fts.holds && a.ftcs.holds == b.ftcs.holds && a.ftss.holds == b.ftss.holds;
    };

    LambdaGrid current = grid;
    StabilityReport coarse = evaluate(current);
    for (int attempt = 0; attempt <= query.max_refinements; ++attempt) {
        LambdaGrid finer = current.refined();
        StabilityReport fine = evaluate(finer);
        if (agree(coarse, fine)) return coarse;
        current = finer;
        coarse = std::move(fine);
    }
    throw FlowError("stability verdicts did not settle under grid refinement");
}

}  // namespace flowfilt

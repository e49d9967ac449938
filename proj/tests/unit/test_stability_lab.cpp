#include "flowfilt/errors.hpp"
#include "flowfilt/stability_lab.hpp"
#include "test_support.hpp"

using namespace flowfilt;
using namespace flowfilt::test;

namespace {

LinearErrorSystem growth_system() {
    LinearErrorSystem s;
    s.A = [](double) { return Matrix(Matrix::Identity(1, 1)); };
    s.M = [](double) { return Matrix(Matrix::Identity(1, 1)); };
    s.S = Matrix::Identity(1, 1);
    return s;
}

ErrorTrajectory canonical_exact(double e0, int steps = 1000) {
    const auto c = canonical();
    return error_trajectory(vec({e0}), vec({0.0}), FlowParameterization::exact_flow(),
                            LambdaGrid::uniform(steps, Scheme::DeterministicRK4), c.prior, c.meas);
}

}  // namespace

TEST(ErrorTrajectory, EqualStartsStayEqual) {
    std::mt19937_64 rng(60);
    const auto m = random_model(rng, 3, 2);
    const Vector x = random_vec(rng, 3);
    const auto t = error_trajectory(x, x, FlowParameterization::fixed_q(), LambdaGrid::uniform(50), m.prior, m.meas);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
        EXPECT_EQ(t.errors[k].norm(), 0.0);
        EXPECT_EQ(t.V_M[k], 0.0);
    }
}

TEST(ErrorTrajectory, CanonicalExactFlow) {
    const auto t = canonical_exact(1.0);
    EXPECT_NEAR(t.errors.back()(0), std::sqrt(0.5), 1e-6);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
        EXPECT_NEAR(t.errors[k](0), 1.0 / std::sqrt(1.0 + t.nodes[k]), 1e-10);
        EXPECT_GE(t.V_M[k], t.V_S[k]);
    }
}

TEST(ErrorTrajectory, CanonicalUnitDiffusionDecays) {
    const auto c = canonical();
    const auto t = error_trajectory(vec({1.0}), vec({0.0}), FlowParameterization::constant_q(Matrix::Identity(1, 1)),
                                    LambdaGrid::uniform(1000), c.prior, c.meas);
    EXPECT_LE(t.V_S.back() / t.V_S.front(), std::exp(-1.0));
}

TEST(LyapunovDerivative, Examples) {
    const auto c = canonical();
    const auto d0 = homotopy_derivatives(vec({0.0}), 0.0, c.prior, c.meas);
    EXPECT_EQ(lyapunov_derivative(vec({3.0}), 0.0, Matrix::Zero(1, 1), d0), 0.0);
    EXPECT_DOUBLE_EQ(lyapunov_derivative(vec({1.0}), 0.0, Matrix::Identity(1, 1), d0), -1.0);
}

TEST(LyapunovDerivative, MatchesFiniteDifferences) {
    std::mt19937_64 rng(61);
    const auto m = random_model(rng, 3, 2);
    const auto params = FlowParameterization::fixed_q();
    const Vector e0 = random_vec(rng, 3);
    std::vector<double> worst;
    for (int steps : {100, 200}) {
        const auto t = integrate_error_system(flow_error_system(params, m.prior, m.meas), e0,
                                              LambdaGrid::uniform(steps));
        double w = 0.0;
        for (std::size_t k = 1; k + 1 < t.nodes.size(); ++k) {
            const double fd = (t.V_M[k + 1] - t.V_M[k - 1]) / (t.nodes[k + 1] - t.nodes[k - 1]);
            const auto d = homotopy_derivatives(Vector::Zero(3), t.nodes[k], m.prior, m.meas);
            w = std::max(w, std::abs(fd - lyapunov_derivative(t.errors[k], t.nodes[k], params.diffusion(d), d)));
        }
        worst.push_back(w);
    }
    EXPECT_NEAR(worst[0] / worst[1], 4.0, 0.5);
}

TEST(Lyapunov, MonotoneForPsdDiffusion) {
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 8; ++trial) {
        const Eigen::Index n = 1 + trial % 4;
        const auto m = random_model(rng, n, 1 + trial % 2);
        const Vector e0 = random_vec(rng, n);
        const auto grid = LambdaGrid::uniform(500);
        const auto exact = integrate_error_system(
            flow_error_system(FlowParameterization::exact_flow(), m.prior, m.meas), e0, grid);
        const auto fixed = integrate_error_system(
            flow_error_system(FlowParameterization::fixed_q(), m.prior, m.meas), e0, grid);
        for (std::size_t k = 0; k + 1 < grid.nodes().size(); ++k) {
            EXPECT_LE(fixed.V_M[k + 1], fixed.V_M[k] + 1e-10 * fixed.V_M[0]);
            EXPECT_LE(exact.V_S[k + 1], exact.V_S[k] + 1e-10 * exact.V_S[0]);
            EXPECT_NEAR(exact.V_M[k], exact.V_M[0], 1e-9 * exact.V_M[0]);
        }
    }
}

TEST(CheckFts, Examples) {
    const auto t = canonical_exact(1.0);
    const auto vacuous = check_fts(t, 0.5, 2.0);
    EXPECT_TRUE(vacuous.holds);
    EXPECT_TRUE(vacuous.vacuous);

    const auto stable = check_fts(t, 1.5, 2.0);
    EXPECT_TRUE(stable.holds);
    EXPECT_FALSE(stable.vacuous);

    const auto blowup = integrate_error_system(growth_system(), vec({0.99}), LambdaGrid::uniform(1000));
    EXPECT_NEAR(blowup.V_S.back(), 0.9801 * std::exp(2.0), 1e-8);
    EXPECT_FALSE(check_fts(blowup, 1.0 - 1e-6, 2.0).holds);

    EXPECT_THROW(check_fts(t, 2.0, 2.0), ParameterError);
}

TEST(CheckFts, StableFlowsOnRandomInstances) {
    std::mt19937_64 rng(63);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 1 + trial % 3;
        const auto m = random_model(rng, n, 1);
        const double alpha = 0.1 + unit(rng), beta = alpha * (1.0 + unit(rng));
        Vector e0 = random_vec(rng, n);
        e0 *= std::sqrt(0.9 * alpha / e0.dot(m.prior.information() * e0));
        const auto t = integrate_error_system(flow_error_system(FlowParameterization::fixed_q(), m.prior, m.meas), e0,
                                              LambdaGrid::uniform(200));
        const auto v = check_fts(t, alpha, beta);
        EXPECT_TRUE(v.holds && !v.vacuous);
    }
}

TEST(CheckFtcs, CanonicalExactFlow) {
    const double alpha = 1.0;
    const auto t = canonical_exact(std::sqrt(alpha - 1e-6));
    const auto yes = check_ftcs(t, alpha, 0.6 * alpha, 2.0 * alpha);
    EXPECT_TRUE(yes.holds);
    ASSERT_TRUE(yes.lambda1.has_value());
    EXPECT_NEAR(*yes.lambda1, 2.0 / 3.0, 2e-3);
    // V_S(1) = e0^2 / 2 sits above 0.4 alpha, so the contraction never happens.
    EXPECT_FALSE(check_ftcs(t, alpha, 0.4 * alpha, 2.0 * alpha).holds);
    EXPECT_FALSE(check_ftcs(t, alpha, 0.01 * alpha, 2.0 * alpha).holds);
}

TEST(CheckFtcs, ZeroErrorAndOrdering) {
    const auto t = canonical_exact(0.0, 100);
    const auto v = check_ftcs(t, 1.0, 0.5, 2.0);
    EXPECT_TRUE(v.holds);
    EXPECT_EQ(v.lambda1.value(), 0.0);
    EXPECT_THROW(check_ftcs(t, 1.0, 1.5, 2.0), ParameterError);
    EXPECT_THROW(check_ftcs(t, 1.0, 0.5, 0.9), ParameterError);
}

TEST(CheckFtcs, ContractingFlows) {
    std::mt19937_64 rng(64);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::Index n = 1 + trial % 3;
        const auto m = random_model(rng, n, 2);
        const auto params = FlowParameterization::constant_q(Matrix::Identity(n, n));
        const auto grid = LambdaGrid::uniform(500);
        const double sigma = contraction_rate(params, m.prior, m.meas, grid);
        Vector e0 = random_vec(rng, n);
        e0 *= std::sqrt(0.99 / e0.dot(m.prior.information() * e0));
        const auto t = integrate_error_system(flow_error_system(params, m.prior, m.meas), e0, grid);
        EXPECT_TRUE(check_ftcs(t, 1.0, 0.5 * (std::exp(-sigma) + 1.0), 2.0).holds);
    }
}

TEST(CheckFtss, Examples) {
    const auto c = canonical();
    const auto q1 = FlowParameterization::constant_q(Matrix::Identity(1, 1));
    const auto grid = LambdaGrid::uniform(200);
    const auto v = check_ftss(q1, c.prior, c.meas, std::nullopt, 1.0, 4.0, 0.25, 10000, 3, grid);
    EXPECT_GE(v.empirical_probability, 0.75);
    EXPECT_TRUE(v.holds);
    EXPECT_TRUE(v.markov_bound_holds);
    EXPECT_EQ(v.draws, 10000u);

    const auto loose = check_ftss(q1, c.prior, c.meas, std::nullopt, 1.0, 1e9, 0.5, 500, 3, grid);
    EXPECT_EQ(loose.empirical_probability, 1.0);

    EXPECT_THROW(check_ftss(q1, c.prior, c.meas, std::nullopt, 1.0, 4.0, 0.1, 1000, 3, grid), ParameterError);
    EXPECT_THROW(check_ftss(q1, c.prior, c.meas, std::nullopt, 1.0, 4.0, 0.25, 50, 3, grid), ParameterError);
    EXPECT_THROW(check_ftss(q1, c.prior, c.meas, std::nullopt, 4.0, 1.0, 0.5, 1000, 3, grid), ParameterError);
}

TEST(ContractionRate, Examples) {
    const auto c = canonical();
    const auto grid = LambdaGrid::uniform(100);
    EXPECT_EQ(contraction_rate(FlowParameterization::exact_flow(), c.prior, c.meas, grid), 0.0);
    EXPECT_NEAR(contraction_rate(FlowParameterization::constant_q(Matrix::Identity(1, 1)), c.prior, c.meas, grid),
                1.0, 1e-12);
}

TEST(ContractionRate, GronwallBound) {
    std::mt19937_64 rng(65);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 1 + trial % 4;
        const auto m = random_model(rng, n, 1 + trial % 2);
        const auto params = FlowParameterization::constant_q(random_psd(rng, n, n) + 0.2 * Matrix::Identity(n, n));
        const auto grid = LambdaGrid::uniform(400);
        const double sigma = contraction_rate(params, m.prior, m.meas, grid);
        EXPECT_GT(sigma, 0.0);
        const auto t = integrate_error_system(flow_error_system(params, m.prior, m.meas), random_vec(rng, n), grid);
        for (std::size_t k = 0; k < t.nodes.size(); ++k) {
            EXPECT_LE(t.V_S[k], std::exp(-sigma * t.nodes[k]) * t.V_S[0] * (1 + 1e-6));
        }
    }
}

TEST(Ellipsoid, ExactFlowKeepsLevel) {
    const auto c = canonical();
    const auto grid = LambdaGrid::uniform(10000, Scheme::DeterministicRK4);
    EXPECT_LE(ellipsoid_invariance_check(c.prior, c.meas, grid, 3, 1), 1e-8);
    std::mt19937_64 rng(66);
    const auto m = random_model(rng, 3, 2);
    EXPECT_LE(ellipsoid_invariance_check(m.prior, m.meas, grid, 10, 2), 1e-8);
    EXPECT_EQ(ellipsoid_invariance_check(m.prior, m.meas, grid, 0, 2), 0.0);
}

TEST(ClassifyRegime, TableRows) {
    std::mt19937_64 rng(67);
    const auto m = random_model(rng, 3, 1);
    const auto grid = LambdaGrid::uniform(50);
    EXPECT_EQ(classify_regime(FlowParameterization::exact_flow(), m.prior, m.meas, grid).regime, Regime::ConstantV);
    EXPECT_EQ(classify_regime(FlowParameterization::fixed_q(), m.prior, m.meas, grid).regime, Regime::NonIncreasing);
    const auto decay =
        classify_regime(FlowParameterization::constant_q(Matrix::Identity(3, 3)), m.prior, m.meas, grid);
    EXPECT_EQ(decay.regime, Regime::ExponentialDecay);
    EXPECT_NEAR(decay.sigma, min_eigenvalue(m.prior.information()), 1e-10);

    const auto bad = FlowParameterization::k_schedule([](double) { return Matrix(-5.0 * Matrix::Identity(3, 3)); });
    EXPECT_THROW(classify_regime(bad, m.prior, m.meas, grid), AdmissibilityError);
}

TEST(AssessStability, ReportFields) {
    const auto c = canonical();
    StabilityQuery q;
    q.n_mc = 1000;
    const auto r = assess_stability(FlowParameterization::constant_q(Matrix::Identity(1, 1)), c.prior, c.meas,
                                    LambdaGrid::uniform(100), q);
    EXPECT_TRUE(r.fts.holds);
    EXPECT_TRUE(r.ftcs.holds);
    EXPECT_TRUE(r.ftss.holds);
    EXPECT_EQ(r.regime, Regime::ExponentialDecay);
    EXPECT_NEAR(r.sigma, 1.0, 1e-12);
    EXPECT_EQ(r.grid_steps, 100);
    EXPECT_EQ(r.trajectory.nodes.size(), 101u);
}

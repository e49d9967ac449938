#include "flowfilt/moment_propagation.hpp"
#include "test_support.hpp"

#include <array>

using namespace flowfilt;
using namespace flowfilt::test;

namespace {

std::vector<FlowParameterization> four_presets(const LinearGaussianModel& m) {
    PresetOptions opts;
    opts.Q0 = Matrix::Identity(m.prior.dim(), m.prior.dim());
    std::vector<FlowParameterization> out;
    for (auto kind : {PresetKind::ExactFlow, PresetKind::FixedQ, PresetKind::ConstantQ, PresetKind::DiagnosticNoise}) {
        out.push_back(preset(kind, m.prior, m.meas, opts));
    }
    return out;
}

}  // namespace

TEST(ClosedForm, Examples) {
    const auto c = canonical();
    const auto post = closed_form_posterior(1.0, c.prior, c.meas);
    EXPECT_NEAR(post.mean(0), 1.0, 1e-15);
    EXPECT_NEAR(post.covariance(0, 0), 0.5, 1e-15);

    const GaussianPrior prior(vec({0.0, 0.0}), Matrix::Identity(2, 2));
    const LinearMeasurement meas(Matrix::Identity(2, 2), Matrix::Identity(2, 2), vec({2.0, 4.0}));
    const auto p2 = closed_form_posterior(1.0, prior, meas);
    expect_near(p2.mean, vec({1.0, 2.0}), 1e-15);
    expect_near(p2.covariance, 0.5 * Matrix::Identity(2, 2), 1e-15);
}

TEST(ClosedForm, StartIsExactlyThePrior) {
    std::mt19937_64 rng(40);
    const auto m = random_model(rng, 3, 2);
    const auto p0 = closed_form_posterior(0.0, m.prior, m.meas);
    EXPECT_EQ(p0.mean, m.prior.x_prior());
    EXPECT_EQ(p0.covariance, m.prior.P_g());
}

TEST(ClosedForm, WoodburyForm) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = random_model(rng, 1 + trial % 4, 1 + trial % 2);
        const Matrix& P = m.prior.P_g();
        const Matrix& H = m.meas.H();
        for (double l : {0.1, 0.5, 1.0}) {
            const Matrix woodbury = P - l * P * H.transpose() * (m.meas.R() + l * H * P * H.transpose()).inverse() * H * P;
            EXPECT_LE(relative_error(closed_form_posterior(l, m.prior, m.meas).covariance, woodbury), 1e-10);
        }
    }
}

TEST(ClosedForm, CovarianceDerivative) {
    std::mt19937_64 rng(42);
    const auto m = random_model(rng, 3, 2);
    const Matrix& J = m.meas.information();
    std::vector<double> errs;
    for (double h : {1e-2, 5e-3}) {
        const double l = 0.4;
        const Matrix fd = (closed_form_posterior(l + h, m.prior, m.meas).covariance -
                           closed_form_posterior(l - h, m.prior, m.meas).covariance) /
                          (2 * h);
        const Matrix P = closed_form_posterior(l, m.prior, m.meas).covariance;
        errs.push_back((fd - (-P * J * P)).norm());
    }
    EXPECT_NEAR(errs[0] / errs[1], 4.0, 0.2);
}

TEST(ClosedForm, CovarianceShrinks) {
    std::mt19937_64 rng(43);
    const auto m = random_model(rng, 4, 2);
    Matrix previous = m.prior.P_g();
    for (int k = 1; k <= 20; ++k) {
        const Matrix P = closed_form_posterior(k / 20.0, m.prior, m.meas).covariance;
        EXPECT_GE(min_eigenvalue(previous - P), -1e-10);
        previous = P;
    }
}

TEST(Lmv, Examples) {
    const auto c = canonical();
    EXPECT_NEAR(lmv_estimate(c.prior, c.meas)(0), 1.0, 1e-15);

    std::mt19937_64 rng(44);
    const auto m = random_model(rng, 3, 2);
    const auto silent = m.meas.with_observation(m.meas.H() * m.prior.x_prior());
    expect_near(lmv_estimate(m.prior, silent), m.prior.x_prior(), 1e-12);
    EXPECT_LE(relative_error(lmv_estimate(m.prior, m.meas), closed_form_posterior(1.0, m.prior, m.meas).mean), 1e-10);
}

TEST(MomentOdes, NoInformation) {
    const GaussianPrior prior(vec({1.0, 2.0}), mat({{2.0, 0.1}, {0.1, 1.0}}));
    const LinearMeasurement blind(Matrix::Zero(1, 2), Matrix::Identity(1, 1), vec({1.0}));
    const auto path = solve_moment_odes(FlowParameterization::fixed_q(), LambdaGrid::uniform(20), prior, blind);
    for (std::size_t k = 0; k < path.nodes.size(); ++k) {
        EXPECT_EQ(path.means[k], prior.x_prior());
        EXPECT_EQ(path.covariances[k], prior.P_g());
    }
}

TEST(MomentOdes, CanonicalAllPresets) {
    const auto c = canonical();
    for (const auto& params : four_presets(c)) {
        const auto path = solve_moment_odes(params, LambdaGrid::uniform(1000), c.prior, c.meas);
        EXPECT_EQ(path.means.front()(0), 0.0);
        EXPECT_EQ(path.covariances.front()(0, 0), 1.0);
        EXPECT_NEAR(path.means.back()(0), 1.0, 1e-9) << params.description();
        EXPECT_NEAR(path.covariances.back()(0, 0), 0.5, 1e-9) << params.description();
    }
}

TEST(MomentOdes, OracleAgreementOnRandomInstances) {
    std::mt19937_64 rng(45);
    for (int trial = 0; trial < 12; ++trial) {
        const Eigen::Index n = std::array<Eigen::Index, 3>{1, 2, 4}[trial % 3];
        const auto m = random_model(rng, n, 1 + trial % 2);
        const auto oracle = closed_form_posterior(1.0, m.prior, m.meas);
        for (const auto& params : four_presets(m)) {
            const auto path = solve_moment_odes(params, LambdaGrid::uniform(1000), m.prior, m.meas);
            EXPECT_LE((path.means.back() - oracle.mean).norm(), 1e-8 * (1 + oracle.mean.norm()));
            EXPECT_LE((path.covariances.back() - oracle.covariance).norm(), 1e-8 * (1 + oracle.covariance.norm()));
            for (const auto& P : path.covariances) EXPECT_GT(min_eigenvalue(P), 0.0);
        }
    }
}

TEST(MomentOdes, PathDoesNotDependOnGain) {
    std::mt19937_64 rng(46);
    const auto m = random_model(rng, 3, 2);
    const auto grid = LambdaGrid::uniform(1000);
    const auto a = solve_moment_odes(FlowParameterization::exact_flow(), grid, m.prior, m.meas);
    const auto b = solve_moment_odes(FlowParameterization::fixed_q(), grid, m.prior, m.meas);
    for (std::size_t k = 0; k < a.nodes.size(); ++k) {
        EXPECT_LE((a.means[k] - b.means[k]).norm(), 1e-8);
        EXPECT_LE((a.covariances[k] - b.covariances[k]).norm(), 1e-8);
        const auto exact = closed_form_posterior(a.nodes[k], m.prior, m.meas);
        EXPECT_LE((a.means[k] - exact.mean).norm(), 1e-8);
    }
}

#include "flowfilt/errors.hpp"
#include "flowfilt/flow_family.hpp"
#include "test_support.hpp"

using namespace flowfilt;
using namespace flowfilt::test;

namespace {

HomotopyDerivatives derivs_at(const LinearGaussianModel& m, double lambda) {
    return homotopy_derivatives(Vector::Zero(m.prior.dim()), lambda, m.prior, m.meas);
}

}  // namespace

TEST(QFromK, ExactFlowGainGivesZeroDiffusion) {
    std::mt19937_64 rng(10);
    const auto m = random_model(rng, 3, 2);
    for (double l : {0.0, 0.5, 1.0}) {
        const auto d = derivs_at(m, l);
        EXPECT_LE(q_from_k(0.5 * d.hess_log_h, d).norm(), 1e-14);
    }
}

TEST(QFromK, CanonicalZeroGain) {
    const auto c = canonical();
    for (double l : {0.0, 0.25, 1.0}) {
        const auto d = derivs_at(c, l);
        EXPECT_NEAR(q_from_k(Matrix::Zero(1, 1), d)(0, 0), 1.0 / ((1 + l) * (1 + l)), 1e-15);
    }
}

TEST(QFromK, OnlySymmetricPartMatters) {
    std::mt19937_64 rng(11);
    const auto m = random_model(rng, 4, 2);
    const auto d = derivs_at(m, 0.7);
    const Matrix K = random_mat(rng, 4, 4);
    expect_near(q_from_k(K, d), q_from_k(K.transpose(), d), 1e-13);
}

TEST(KFromQ, Examples) {
    const auto c = canonical();
    for (double l : {0.0, 0.4, 1.0}) {
        const auto d = derivs_at(c, l);
        EXPECT_NEAR(k_from_q(Matrix::Zero(1, 1), d)(0, 0), -0.5, 1e-15);
        EXPECT_NEAR(k_from_q(Matrix::Identity(1, 1), d)(0, 0), 0.5 * (1 + l) * (1 + l) - 0.5, 1e-14);
    }
}

TEST(KFromQ, RoundTripOnRandomPsd) {
    std::mt19937_64 rng(12);
    for (Eigen::Index n : {1, 2, 3, 5}) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto m = random_model(rng, n, 2);
            const auto d = derivs_at(m, trial / 4.0);
            const Matrix Q = random_psd(rng, n, std::max<Eigen::Index>(1, n - trial % 2));
            const Matrix K = k_from_q(Q, d);
            EXPECT_TRUE(K.isApprox(K.transpose(), 1e-14));
            EXPECT_LE((q_from_k(K, d) - Q).norm(), 1e-10 * std::max(1.0, Q.norm()));
        }
    }
}

TEST(KFromQ, RejectsIndefinite) {
    const auto d = derivs_at(canonical(), 0.0);
    EXPECT_THROW(k_from_q(-Matrix::Identity(1, 1), d), AdmissibilityError);
}

TEST(IsAdmissible, Examples) {
    std::mt19937_64 rng(13);
    const auto m = random_model(rng, 3, 1);
    const auto d = derivs_at(m, 0.3);
    EXPECT_TRUE(is_admissible(Matrix::Zero(3, 3), d));
    EXPECT_TRUE(is_admissible(0.5 * d.hess_log_h, d));

    const auto c = derivs_at(canonical(), 0.0);
    EXPECT_FALSE(is_admissible(-Matrix::Identity(1, 1), c));
}

TEST(Drift, CanonicalExamples) {
    const auto c = canonical();
    EXPECT_NEAR(drift(vec({0.0}), 0.0, Matrix::Zero(1, 1), c.prior, c.meas)(0), 2.0, 1e-15);
    EXPECT_NEAR(drift(vec({0.0}), 0.0, Matrix::Constant(1, 1, -0.5), c.prior, c.meas)(0), 2.0, 1e-15);
}

TEST(Drift, GainDropsOutAtTheMode) {
    std::mt19937_64 rng(14);
    const auto m = random_model(rng, 3, 2);
    const double l = 0.4;
    const Matrix M = homotopy_information(l, m.prior, m.meas);
    const Vector mode = M.llt().solve(m.prior.information_mean() + l * m.meas.information_vector());
    const auto d = homotopy_derivatives(mode, l, m.prior, m.meas);
    ASSERT_LE(d.grad_log_p.norm(), 1e-12);
    const Vector expected = d.M.llt().solve(d.grad_log_h);
    for (int trial = 0; trial < 3; ++trial) {
        const Matrix K = random_psd(rng, 3, 3);
        expect_near(drift(mode, l, K, m.prior, m.meas), expected, 1e-12);
    }
}

TEST(AffineCoefficients, ReproduceDrift) {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 1 + trial % 4;
        const auto m = random_model(rng, n, 1 + trial % 2);
        const double l = trial / 19.0;
        const Matrix K = random_admissible_schedule(rng, m.prior, m.meas)(l);
        const auto c = affine_coefficients(l, K, m.prior, m.meas);
        for (int k = 0; k < 3; ++k) {
            const Vector x = random_vec(rng, n, 3.0);
            const Vector f = drift(x, l, K, m.prior, m.meas);
            EXPECT_LE((c.A * x + c.b - f).norm(), 1e-10 * std::max(1.0, f.norm()));
        }
        EXPECT_GE(min_eigenvalue(c.Q), -1e-10 * std::max(1.0, c.Q.norm()));
    }
}

TEST(AffineCoefficients, CanonicalExamples) {
    const auto c = canonical();
    for (double l : {0.0, 0.5, 1.0}) {
        EXPECT_NEAR(affine_coefficients(l, Matrix::Zero(1, 1), c.prior, c.meas).A(0, 0), -1.0 / (1 + l), 1e-15);
        EXPECT_NEAR(affine_coefficients(l, Matrix::Constant(1, 1, -0.5), c.prior, c.meas).A(0, 0), -0.5 / (1 + l),
                    1e-15);
    }
}

TEST(AffineCoefficients, UninformativeMeasurementIsStill) {
    const GaussianPrior prior(vec({1.0, -2.0}), mat({{2.0, 0.3}, {0.3, 1.0}}));
    const LinearMeasurement blind(Matrix::Zero(1, 2), Matrix::Identity(1, 1), vec({3.0}));
    const auto c = affine_coefficients(0.6, Matrix::Zero(2, 2), prior, blind);
    EXPECT_EQ(c.A.norm(), 0.0);
    EXPECT_EQ(c.b.norm(), 0.0);
}

TEST(AffineCoefficients, RejectsInadmissibleGain) {
    const auto c = canonical();
    EXPECT_THROW(affine_coefficients(0.0, Matrix::Constant(1, 1, -1.0), c.prior, c.meas), AdmissibilityError);
    EXPECT_THROW(affine_coefficients(1.2, Matrix::Zero(1, 1), c.prior, c.meas), RangeError);
}

TEST(ExactFlow, CanonicalClosedForm) {
    const auto c = canonical();
    for (double l : {0.0, 0.3, 1.0}) {
        const auto e = exact_flow_coefficients(l, c.prior, c.meas);
        EXPECT_NEAR(e.A(0, 0), -0.5 / (1 + l), 1e-15);
        EXPECT_NEAR(e.b(0), (2 + l) / ((1 + l) * (1 + l)), 1e-15);
        EXPECT_EQ(e.Q.norm(), 0.0);
    }
}

TEST(ExactFlow, StartValue) {
    std::mt19937_64 rng(16);
    const auto m = random_model(rng, 3, 2);
    const auto e = exact_flow_coefficients(0.0, m.prior, m.meas);
    const Vector expected = m.prior.P_g() * m.meas.information_vector() + e.A * m.prior.x_prior();
    expect_near(e.b, expected, 1e-12);
}

TEST(ExactFlow, InformationFormOfGradient) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const auto m = random_model(rng, 3, 2);
        for (double l : {0.0, 0.37, 1.0}) {
            const Matrix M = m.prior.P_g().inverse() + l * m.meas.information();
            const Matrix expected = -0.5 * M.inverse() * m.meas.information();
            expect_near(exact_flow_coefficients(l, m.prior, m.meas).A, expected, 1e-10);
        }
    }
}

TEST(ExactFlow, MatchesFamilyMember) {
    std::mt19937_64 rng(18);
    const auto m = random_model(rng, 4, 2);
    for (int k = 0; k <= 100; ++k) {
        const double l = k / 100.0;
        const auto d = derivs_at(m, l);
        const auto e = exact_flow_coefficients(l, m.prior, m.meas);
        const auto f = affine_coefficients(l, Matrix(0.5 * d.hess_log_h), m.prior, m.meas);
        EXPECT_LE(relative_error(f.A, e.A), 1e-10);
        EXPECT_LE(relative_error(f.b, e.b), 1e-10);
    }
}

TEST(Presets, ExactFlowHasNoDiffusion) {
    std::mt19937_64 rng(19);
    const auto m = random_model(rng, 3, 2);
    const auto p = preset(PresetKind::ExactFlow, m.prior, m.meas);
    EXPECT_TRUE(p.deterministic());
    for (double l : {0.0, 0.5, 1.0}) {
        const auto d = derivs_at(m, l);
        EXPECT_LE(q_from_k(p.gain(d), d).norm(), 1e-14);
    }
}

TEST(Presets, FixedQ) {
    std::mt19937_64 rng(20);
    const auto m = random_model(rng, 3, 1);
    const auto p = preset(PresetKind::FixedQ, m.prior, m.meas);
    for (double l : {0.0, 0.5, 1.0}) {
        const auto d = derivs_at(m, l);
        EXPECT_EQ(p.gain(d).norm(), 0.0);
        const Matrix Minv = d.M.inverse();
        expect_near(p.diffusion(d), Minv * m.meas.information() * Minv, 1e-12);
    }
}

TEST(Presets, DiagnosticNoiseCanonicalGain) {
    const auto c = canonical();
    const auto p = preset(PresetKind::DiagnosticNoise, c.prior, c.meas);
    EXPECT_NEAR(p.gain(derivs_at(c, 0.0))(0, 0), 0.5, 1e-15);
    // K + K^T + J = 2 M Q M for the exact-flow reference, so the diffusion is 2 alpha I.
    EXPECT_NEAR(p.diffusion(derivs_at(c, 0.7))(0, 0), 2.0, 1e-14);
}

TEST(Presets, ParameterChecks) {
    const auto c = canonical();
    PresetOptions bad;
    bad.alpha = 0.0;
    EXPECT_THROW(preset(PresetKind::DiagnosticNoise, c.prior, c.meas, bad), ParameterError);
    EXPECT_THROW(preset(PresetKind::ConstantQ, c.prior, c.meas), ParameterError);
    EXPECT_THROW(preset(PresetKind::Approximate, c.prior, c.meas), ParameterError);

    PresetOptions shrinking;
    shrinking.A_hat = [](double) { return Matrix(Matrix::Constant(1, 1, -10.0)); };
    shrinking.Q = [](double) { return Matrix(Matrix::Zero(1, 1)); };
    EXPECT_THROW(preset(PresetKind::Approximate, c.prior, c.meas, shrinking), AdmissibilityError);

    PresetOptions indefinite;
    indefinite.Q0 = Matrix::Constant(1, 1, -1.0);
    EXPECT_THROW(preset(PresetKind::ConstantQ, c.prior, c.meas, indefinite), AdmissibilityError);
}

TEST(Presets, ReferenceFlowGainFormula) {
    std::mt19937_64 rng(21);
    const auto m = random_model(rng, 3, 2);
    const Matrix A_hat = -0.3 * Matrix::Identity(3, 3) + 0.05 * random_mat(rng, 3, 3);
    const Matrix Q = random_psd(rng, 3, 3) + Matrix::Identity(3, 3);
    PresetOptions opts;
    opts.A_hat = [A_hat](double) { return A_hat; };
    opts.Q = [Q](double) { return Q; };
    const auto p = preset(PresetKind::Approximate, m.prior, m.meas, opts);
    for (double l : {0.0, 0.5, 1.0}) {
        const auto d = derivs_at(m, l);
        // [(hess log p) Q - A_hat^T] (hess log p)
        const Matrix expected = (d.hess_log_p * Q - A_hat.transpose()) * d.hess_log_p;
        EXPECT_LE(relative_error(p.gain(d), expected), 1e-12);
    }
}

TEST(Validation, RejectsImpureSchedule) {
    const auto c = canonical();
    auto counter = std::make_shared<int>(0);
    const auto p = FlowParameterization::k_schedule([counter](double) {
        return Matrix(Matrix::Constant(1, 1, static_cast<double>((*counter)++ % 2)));
    });
    EXPECT_THROW(validate_parameterization(p, c.prior, c.meas), ParameterError);
}

TEST(Validation, RejectsScheduleInadmissibleSomewhere) {
    const auto c = canonical();
    const auto p = FlowParameterization::k_schedule([](double l) {
        return Matrix(Matrix::Constant(1, 1, l > 0.9 ? -5.0 : 0.0));
    });
    EXPECT_THROW(validate_parameterization(p, c.prior, c.meas), AdmissibilityError);
}

TEST(DiffusionFactor, Examples) {
    const Matrix I = Matrix::Identity(3, 3);
    const Matrix q = diffusion_factor(I);
    EXPECT_EQ(q.cols(), 3);
    expect_near(q * q.transpose(), I, 1e-14);

    EXPECT_EQ(diffusion_factor(Matrix::Zero(3, 3)).cols(), 0);

    std::mt19937_64 rng(22);
    const Matrix Q = random_psd(rng, 3, 2);
    const Matrix f = diffusion_factor(Q);
    EXPECT_EQ(f.rows(), 3);
    EXPECT_EQ(f.cols(), 2);
    EXPECT_LE((f * f.transpose() - Q).norm(), 1e-10 * Q.norm());

    EXPECT_THROW(diffusion_factor(mat({{1.0, 0.0}, {0.0, -0.5}})), AdmissibilityError);
}

TEST(ConditionResidual, DriftSatisfiesTheDensityCondition) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index n = 1 + trial % 4;
        const auto m = random_model(rng, n, 1 + trial % 3);
        const double l = (trial % 10) / 9.0;
        const Matrix K = random_admissible_schedule(rng, m.prior, m.meas)(l);
        const Vector x = random_vec(rng, n, 2.0);

        // Gradient of the drift by central differences, independent of the affine form.
        const double h = 1e-4;
        Matrix A(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            Vector xp = x, xm = x;
            xp(j) += h;
            xm(j) -= h;
            A.col(j) = (drift(xp, l, K, m.prior, m.meas) - drift(xm, l, K, m.prior, m.meas)) / (2 * h);
        }
        const auto d = homotopy_derivatives(x, l, m.prior, m.meas);
        const Matrix Q = q_from_k(K, d);
        const Vector f = drift(x, l, K, m.prior, m.meas);
        const Vector rhs = -d.hess_log_p * f - A.transpose() * d.grad_log_p + d.hess_log_p * Q * d.grad_log_p;
        const double scale = std::max({d.grad_log_h.norm(), (d.hess_log_p * f).norm(), 1.0});
        EXPECT_LE((rhs - d.grad_log_h).norm(), 1e-7 * scale);

        const auto r = condition_residual(x, l, K, m.prior, m.meas);
        EXPECT_LE(r.relative(), 1e-10);
    }
}

TEST(Manifold, AntisymmetricGainChangeKeepsDiffusion) {
    std::mt19937_64 rng(24);
    const auto m = random_model(rng, 3, 2);
    const double l = 0.45;
    const auto d = derivs_at(m, l);
    const Matrix K = Matrix::Zero(3, 3);
    const Matrix B = random_mat(rng, 3, 3);
    const Matrix W = B - B.transpose();
    const auto c1 = affine_coefficients(l, K, m.prior, m.meas);
    const auto c2 = affine_coefficients(l, Matrix(K + W), m.prior, m.meas);
    expect_near(c2.Q, c1.Q, 1e-12);
    expect_near(d.M * c2.A + c2.A.transpose() * d.M, d.M * c1.A + c1.A.transpose() * d.M, 1e-12);
    EXPECT_GT((c2.A - c1.A).norm(), 1e-3);
}

TEST(MakeFlow, Descriptors) {
    const auto c = canonical();
    FlowDescriptor d;
    d.flow = "exact";
    EXPECT_TRUE(make_flow(d, c.prior, c.meas).deterministic());
    d.flow = "constant_q";
    EXPECT_THROW(make_flow(d, c.prior, c.meas), ParseError);
    d.Q0 = Matrix::Identity(1, 1);
    EXPECT_NO_THROW(make_flow(d, c.prior, c.meas));
    d.flow = "nonsense";
    EXPECT_THROW(make_flow(d, c.prior, c.meas), ParseError);
    EXPECT_EQ(all_presets().size(), 5u);
}

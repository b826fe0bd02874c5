#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mlsmc/model.hpp"
#include "mlsmc/random.hpp"

using namespace mlsmc;

namespace {

const MorrisLecarParams kP{};

// Continuous-time right-hand side written out independently of the library.
State2 vector_field(const State2& x, double i_app) {
    const double v = x[0], n = x[1];
    const double m = 0.5 * (1 + std::tanh((v + 1.2) / 18.0));
    const double ninf = 0.5 * (1 + std::tanh((v - 2.0) / 30.0));
    const double tau = 1.0 / std::cosh((v - 2.0) / 60.0);
    const double dv = (i_app - 2.0 * (v + 60) - 4.4 * m * (v - 120) - 8.0 * n * (v + 84)) / 20.0;
    return {dv, 0.04 * (ninf - n) / tau};
}

double rel_err(double a, double b, double floor) { return std::abs(a - b) / std::max(std::abs(b), floor); }

}  // namespace

TEST(Gating, MInf) {
    EXPECT_DOUBLE_EQ(m_inf(-1.2, kP), 0.5);
    EXPECT_DOUBLE_EQ(m_inf(1e6, kP), 1.0);
    EXPECT_NEAR(m_inf(16.8, kP), 0.88079707797788244, 1e-15);
}

TEST(Gating, NInf) {
    EXPECT_DOUBLE_EQ(n_inf(2.0, kP), 0.5);
    EXPECT_DOUBLE_EQ(n_inf(-1e6, kP), 0.0);
    EXPECT_NEAR(n_inf(32.0, kP), 0.88079707797788244, 1e-15);
}

TEST(Gating, TauN) {
    EXPECT_DOUBLE_EQ(tau_n(kP.v3, kP), 1.0);
    EXPECT_NEAR(tau_n(kP.v3 + 2 * kP.v4, kP), 0.6480542736638854, 1e-15);
    for (double d : {0.5, 3.0, 17.0, 80.0}) EXPECT_DOUBLE_EQ(tau_n(kP.v3 + d, kP), tau_n(kP.v3 - d, kP));
}

TEST(Gating, MonotoneAndBounded) {
    double prev_m = 0, prev_n = 0;
    for (double v = -100; v <= 80; v += 0.5) {
        const double m = m_inf(v, kP), n = n_inf(v, kP), t = tau_n(v, kP);
        EXPECT_GT(m, prev_m);
        EXPECT_GT(n, prev_n);
        EXPECT_GT(t, 0.0);
        EXPECT_LE(t, 1.0);
        prev_m = m;
        prev_n = n;
    }
}

TEST(Gating, DerivativesMatchFiniteDifferences) {
    const double h = 1e-5;
    for (double v = -80; v <= 60; v += 7) {
        EXPECT_NEAR(dm_inf_dv(v, kP), (m_inf(v + h, kP) - m_inf(v - h, kP)) / (2 * h), 1e-9);
        EXPECT_NEAR(dn_inf_dv(v, kP), (n_inf(v + h, kP) - n_inf(v - h, kP)) / (2 * h), 1e-9);
        EXPECT_NEAR(dtau_n_dv(v, kP), (tau_n(v + h, kP) - tau_n(v - h, kP)) / (2 * h), 1e-9);
    }
}

TEST(Transition2, ZeroStepIsIdentity) {
    const State2 x{-33.0, 0.4};
    EXPECT_EQ(ml_transition2(x, 110.0, kP, 0.0), x);
}

TEST(Transition2, FixedPointUnchanged) {
    const State2 rest = rest_state(kP, 0.0);
    const State2 next = ml_transition2(rest, 0.0, kP, 0.25);
    EXPECT_NEAR(next[0], rest[0], 1e-11);
    EXPECT_NEAR(next[1], rest[1], 1e-15);
}

TEST(Transition2, MatchesStraightLineOracle) {
    const State2 next = ml_transition2(State2{-60.855, 0.0149}, 110.0, kP, 0.25);
    EXPECT_NEAR(next[0], -59.479974821263614, 1e-12);
    EXPECT_NEAR(next[1], 0.014900246508125041, 1e-15);
}

TEST(Transition2, SmallStepApproachesVectorField) {
    RandomStream rs(11, Stream::gating);
    const double t_s = 1e-4;
    for (int i = 0; i < 10; ++i) {
        const State2 x{-80 + 140 * rs.uniform(), 0.05 + 0.9 * rs.uniform()};
        const State2 rate = (ml_transition2(x, 110.0, kP, t_s) - x) / t_s;
        const State2 ref = vector_field(x, 110.0);
        EXPECT_LT(rel_err(rate[0], ref[0], 1e-12), 1e-3);
        EXPECT_LT(rel_err(rate[1], ref[1], 1e-12), 1e-3);
    }
}

TEST(RestState, NearLeakReversal) {
    const State2 rest = rest_state(kP, 0.0);
    EXPECT_NEAR(rest[0], -60.855382, 1e-5);
    EXPECT_NEAR(rest[1], 0.014915, 1e-6);
    EXPECT_NEAR(vector_field(rest, 0.0)[0], 0.0, 1e-10);
}

TEST(OuStep, StaysAtMeanWithoutNoise) {
    const OuParams ou{2.73, 0.121, 0.12};
    EXPECT_DOUBLE_EQ(ou_step(ou.g0, ou, 0.25, 0.0), ou.g0);
}

TEST(OuStep, GeometricDecayMatchesClosedForm) {
    const OuParams ou{2.73, 0.121, 0.12};
    const double t_s = 0.25;
    const double factor = 1 - t_s / ou.tau;
    double g = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double prev_gap = std::abs(g - ou.g0);
        g = ou_step(g, ou, t_s, 0.0);
        EXPECT_NEAR(g, ou.g0 + (1.0 - ou.g0) * std::pow(factor, k), 1e-12);
        EXPECT_LT(std::abs(g - ou.g0), prev_gap);
    }
}

TEST(OuStep, MonotoneConvergenceFromBelow) {
    const OuParams ou{10.49, 0.573, 0.264};
    double g = -3.0;
    for (int k = 0; k < 500; ++k) {
        const double next = ou_step(g, ou, 0.25, 0.0);
        EXPECT_GT(next, g);
        EXPECT_LE(next, ou.g0);
        g = next;
    }
}

// The Euler-Maruyama stationary variance is sigma^2 / (1 - t_s / (2 tau)), so
// the slower inhibitory process (bias +0.6% in std) is used for the 2% check.
TEST(OuStep, LongRunStdMatchesSigma) {
    const OuParams ou{10.49, 0.573, 0.264};
    RandomStream rs(3, Stream::inhibitory);
    double g = ou.g0, s = 0, s2 = 0;
    const int n = 1000000;
    for (int k = 0; k < n; ++k) {
        g = ou_step(g, ou, 0.25, rs.normal());
        s += g;
        s2 += g * g;
    }
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    EXPECT_NEAR(sd / ou.sigma, 1.0, 0.02);
}

TEST(OuStep, ExactStepLongRunStd) {
    const OuParams ou{2.73, 0.121, 0.12};
    RandomStream rs(4, Stream::excitatory);
    double g = ou.g0, s = 0, s2 = 0;
    const int n = 1000000;
    for (int k = 0; k < n; ++k) {
        g = ou_step_exact(g, ou, 0.25, rs.normal());
        s += g;
        s2 += g * g;
    }
    const double mean = s / n;
    EXPECT_NEAR(std::sqrt(s2 / n - mean * mean) / ou.sigma, 1.0, 0.02);
    EXPECT_NEAR(mean, ou.g0, 0.01);
}

TEST(Transition4, NoConductanceMatchesTwoState) {
    const SynapticParams s{};
    const State4 x{-30.0, 0.3, 0.0, 0.0};
    const State2 ref = ml_transition2(State2{-30.0, 0.3}, 110.0, kP, 0.25);
    const State4 out = ml_transition4(x, 110.0, kP, s, 0.25);
    EXPECT_DOUBLE_EQ(out[kV], ref[kV]);
    EXPECT_DOUBLE_EQ(out[kN], ref[kN]);
}

TEST(Transition4, NoDriveAtExcitatoryReversal) {
    const SynapticParams s{};
    const State4 with{s.e_e, 0.3, 0.5, 0.0};
    const State4 without{s.e_e, 0.3, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(ml_transition4(with, 110.0, kP, s, 0.25)[kV], ml_transition4(without, 110.0, kP, s, 0.25)[kV]);
}

TEST(Transition4, MatchesStraightLineOracle) {
    const SynapticParams s = synaptic_from_nanosiemens(2.73, 12.1, 12.0, 10.49, 57.3, 26.4);
    const State4 x{-40.0, 0.2, 2 * s.g_e0, s.g_i0 / 2};
    const State4 out = ml_transition4(x, 110.0, kP, s, 0.25);
    EXPECT_NEAR(out[0], -39.910729585418801, 1e-12);
    EXPECT_NEAR(out[1], 0.19820917727735408, 1e-15);
    EXPECT_NEAR(out[2], 0.23091941391941392, 1e-15);
    EXPECT_NEAR(out[3], 0.29332793136320305, 1e-15);
}

TEST(Jacobian, ZeroStepIsIdentity) {
    EXPECT_TRUE(jacobian2(State2{-20, 0.3}, kP, 0.0).isApprox(Matrix<2>::Identity()));
}

TEST(Jacobian, GatingDiagonalFormula) {
    for (double v : {-70.0, -20.0, 0.0, 35.0})
        EXPECT_DOUBLE_EQ(jacobian2(State2{v, 0.4}, kP, 0.25)(1, 1), 1 - 0.25 * kP.phi / tau_n(v, kP));
}

TEST(Jacobian, MatchesFiniteDifferencesAtReferenceState) {
    const State2 x{-20.0, 0.3};
    const double h = 1e-5, t_s = 0.25;
    const Matrix<2> jac = jacobian2(x, kP, t_s);
    for (int c = 0; c < 2; ++c) {
        State2 up = x, dn = x;
        up[c] += h;
        dn[c] -= h;
        const State2 fd = (ml_transition2(up, 110.0, kP, t_s) - ml_transition2(dn, 110.0, kP, t_s)) / (2 * h);
        for (int r = 0; r < 2; ++r) EXPECT_LT(rel_err(jac(r, c), fd[r], 0.0), 1e-6) << r << "," << c;
    }
}

TEST(Jacobian, MatchesFiniteDifferencesOverGrid) {
    const double h = 1e-5, t_s = 0.25;
    double worst = 0.0;
    for (double v = -80; v <= 60; v += 5) {
        for (double n = 0.05; n <= 0.951; n += 0.05) {
            const State2 x{v, n};
            const Matrix<2> jac = jacobian2(x, kP, t_s);
            for (int c = 0; c < 2; ++c) {
                State2 up = x, dn = x;
                up[c] += h;
                dn[c] -= h;
                const State2 fd = (ml_transition2(up, 110.0, kP, t_s) - ml_transition2(dn, 110.0, kP, t_s)) / (2 * h);
                // Entries of the gating row are O(1e-3); the floor only guards exact zero crossings.
                for (int r = 0; r < 2; ++r) worst = std::max(worst, rel_err(jac(r, c), fd[r], 1e-3));
            }
        }
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Jacobian, ZeroReversalFormDiffersOnlyInVoltageDiagonal) {
    const State2 x{-20.0, 0.3};
    const Matrix<2> exact = jacobian2(x, kP, 0.25, JacobianForm::exact);
    const Matrix<2> pub = jacobian2(x, kP, 0.25, JacobianForm::zero_reversal);
    EXPECT_DOUBLE_EQ(exact(0, 1), pub(0, 1));
    EXPECT_DOUBLE_EQ(exact(1, 0), pub(1, 0));
    EXPECT_DOUBLE_EQ(exact(1, 1), pub(1, 1));
    EXPECT_NEAR(pub(0, 0) - exact(0, 0), -0.25 / kP.c_m * kP.g_ca * dm_inf_dv(-20.0, kP) * kP.e_ca, 1e-14);
}

TEST(ProcessNoise, Cov2) {
    NoiseConfig nc;
    nc.sigma_i_app = 0;
    nc.sigma_g_l = 0;
    EXPECT_EQ(process_noise_cov2(-20, nc, kP)(0, 0), 0.0);

    nc = NoiseConfig{};
    EXPECT_DOUBLE_EQ(process_noise_cov2(kP.e_l, nc, kP)(0, 0), std::pow(0.25 / 20 * 1.1, 2));
    const Matrix<2> cov = process_noise_cov2(-20, nc, kP);
    EXPECT_NEAR(cov(0, 0), 0.0002890625, 1e-18);
    EXPECT_DOUBLE_EQ(cov(1, 1), 1e-6);
    EXPECT_EQ(cov(0, 1), 0.0);
    EXPECT_EQ(cov(1, 0), 0.0);
}

TEST(ProcessNoise, Cov4) {
    const NoiseConfig nc;
    const SynapticParams s = synaptic_from_nanosiemens(2.73, 12.1, 12.0, 10.49, 57.3, 26.4);
    const Matrix<4> cov = process_noise_cov4(-20, nc, kP, s);
    EXPECT_TRUE((cov.topLeftCorner<2, 2>().isApprox(process_noise_cov2(-20, nc, kP))));
    EXPECT_NEAR(cov(2, 2), 0.0026373626373626374, 1e-17);
    EXPECT_NEAR(cov(3, 3), 0.0033220209723546235, 1e-17);
    EXPECT_TRUE((cov - Matrix<4>(cov.diagonal().asDiagonal())).isZero(0.0));
    EXPECT_TRUE((cov.diagonal().array() >= 0).all());

    SynapticParams quiet = s;
    quiet.sigma_e = quiet.sigma_i = 0;
    const Matrix<4> q = process_noise_cov4(-20, nc, kP, quiet);
    EXPECT_EQ(q(2, 2), 0.0);
    EXPECT_EQ(q(3, 3), 0.0);
}

TEST(Clamp, PhysicalRanges) {
    const State4 x = clamp_state<4>(State4{10, 1.3, -0.2, -1e-9});
    EXPECT_EQ(x[kV], 10);
    EXPECT_EQ(x[kN], 1.0);
    EXPECT_EQ(x[kGe], 0.0);
    EXPECT_EQ(x[kGi], 0.0);
    EXPECT_EQ(clamp_state<2>(State2{-5, -0.1})[kN], 0.0);
}

TEST(Validation, NamesTheField) {
    MorrisLecarParams p;
    p.g_l = -1;
    try {
        validate(p);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "g_l");
    }
    p = {};
    p.v2 = 0;
    EXPECT_THROW(validate(p), ConfigError);
    NoiseConfig nc;
    nc.t_s = 0;
    EXPECT_THROW(validate(nc), ConfigError);
    SynapticParams s;
    s.tau_i = -1;
    EXPECT_THROW(validate(s), ConfigError);
}

TEST(Inaccuracy, ScalesCurrentAndLeak) {
    const NoiseConfig nc = noise_with_inaccuracy(0.1, kP);
    EXPECT_DOUBLE_EQ(nc.sigma_i_app, 11.0);
    EXPECT_DOUBLE_EQ(nc.sigma_g_l, 0.2);
}

TEST(Psd, FactorOfSingularCovariance) {
    Matrix<2> cov = Matrix<2>::Zero();
    cov(1, 1) = 4.0;
    const Matrix<2> l = psd_factor<2>(cov);
    EXPECT_TRUE((l * l.transpose()).isApprox(cov));
}

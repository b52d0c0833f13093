#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dmtb/calibration.hpp"
#include "oracles.hpp"

using namespace dmtb;

namespace {

/// Noiseless amplitude-only measurement of |H w| per receiver.
auto exact_probe(const CMatrix& h) {
    return [h](const CVector& w) {
        const CVector r = h * w;
        std::vector<double> amps;
        for (Eigen::Index n = 0; n < r.size(); ++n) amps.push_back(std::abs(r(n)));
        return amps;
    };
}

}  // namespace

TEST(RunCalibration, IssuesTheFourTransmissionsInOrder) {
    std::vector<CVector> seen;
    auto probe = [&](const CVector& w) {
        seen.push_back(w);
        return std::vector<double>{1.0};
    };
    run_calibration(probe, 2);
    ASSERT_EQ(seen.size(), 4u);
    const Complex j(0.0, 1.0);
    const std::vector<std::vector<Complex>> expected{{1, 0}, {0, 1}, {1, 1}, {1, j}};
    for (std::size_t i = 0; i < 4; ++i)
        for (Eigen::Index m = 0; m < 2; ++m) EXPECT_EQ(seen[i](m), expected[i][static_cast<std::size_t>(m)]);
}

TEST(RunCalibration, ThreeElementsUseSevenTransmissions) {
    EXPECT_EQ(calibration_schedule(3).size(), 7u);
    EXPECT_EQ(calibration_schedule(2).size(), 4u);
}

TEST(RunCalibration, IdentityChannelHitsMeasurementFloor) {
    EXPECT_THROW(run_calibration(exact_probe(CMatrix::Identity(2, 2)), 2), MeasurementFloor);
}

TEST(RunCalibration, OppositePhaseRowRecoversPi) {
    CMatrix h(2, 2);
    h << 1, 1, 1, -1;
    const auto meas = run_calibration(exact_probe(h), 2);
    EXPECT_DOUBLE_EQ(meas.amp_both_zero()[0], 2.0);
    EXPECT_DOUBLE_EQ(meas.amp_both_zero()[1], 0.0);
    const auto csi = estimate_csi(meas);
    EXPECT_NEAR(std::abs(csi.theta(1, 0)), kPi, 1e-12);
    EXPECT_NEAR(csi.theta(0, 0), 0.0, 1e-12);
}

TEST(RunCalibration, SingleElementAmplitudesAreExactMagnitudes) {
    std::mt19937_64 rng(21);
    const CMatrix h = oracle::random_channel(rng, 3, 2);
    const auto meas = run_calibration(exact_probe(h), 2);
    for (Eigen::Index n = 0; n < 3; ++n) {
        EXPECT_DOUBLE_EQ(meas.amp_tx1_only()[static_cast<std::size_t>(n)], std::abs(h(n, 0)));
        EXPECT_DOUBLE_EQ(meas.amp_tx2_only()[static_cast<std::size_t>(n)], std::abs(h(n, 1)));
    }
}

TEST(RunCalibration, RejectsInconsistentReceiverCounts) {
    int calls = 0;
    auto probe = [&](const CVector&) { return std::vector<double>(++calls == 2 ? 1 : 2, 1.0); };
    EXPECT_THROW(run_calibration(probe, 2), DimensionMismatch);
}

TEST(SolveAbsPhase, WorkedValues) {
    EXPECT_NEAR(solve_abs_phase(1.0, 1.0, 2.0), 0.0, 1e-12);
    EXPECT_NEAR(solve_abs_phase(1.0, 1.0, std::sqrt(2.0)), kPi / 2.0, 1e-12);
    const double both = oracle::combined_amplitude(1.0, 0.5, kPi / 3.0);
    EXPECT_NEAR(both, 1.3228757, 5e-8);
    EXPECT_NEAR(rad_to_deg(solve_abs_phase(1.0, 0.5, both)), 60.0, 1e-6);
    EXPECT_NEAR(solve_abs_phase(1.0, 0.5, both), 1.0471976, 5e-8);
    // The 7-digit literal sits 4.4e-8 above the oracle; d|theta|/d(both) = -both / (t1 t2 sin theta).
    const double slope = -both / (0.5 * std::sin(kPi / 3.0));
    EXPECT_NEAR(solve_abs_phase(1.0, 0.5, 1.3228757), kPi / 3.0 + slope * (1.3228757 - both), 1e-12);
}

TEST(SolveAbsPhase, DegenerateMagnitudes) {
    EXPECT_THROW(solve_abs_phase(0.0, 1.0, 1.0), DegenerateMagnitude);
    EXPECT_THROW(solve_abs_phase(1.0, 1e-7, 1.0), DegenerateMagnitude);
}

TEST(SolveAbsPhase, InvertsTheForwardAmplitude) {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> amp(0.1, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double t1 = amp(rng), t2 = amp(rng);
        for (int i = 0; i <= 1000; ++i) {
            const double theta = kPi * i / 1000.0;
            EXPECT_NEAR(solve_abs_phase(t1, t2, oracle::combined_amplitude(t1, t2, theta)), theta, 1e-9)
                << "t1=" << t1 << " t2=" << t2;
        }
    }
}

TEST(SolveAbsPhase, ClampsSlightlyInconsistentInputs) {
    for (double eps : {1e-9, 1e-6, 1e-4, 5e-4}) {
        EXPECT_EQ(solve_abs_phase(1.0, 1.0, 2.0 + eps), 0.0);
        EXPECT_EQ(solve_abs_phase(1.0, 0.5, 0.5 - eps), kPi);
    }
    EXPECT_TRUE(std::isfinite(solve_abs_phase(1.0, 1.0, 0.0)));
}

TEST(ResolveSign, WorkedValues) {
    EXPECT_EQ(resolve_sign(1.0, 1.0, kPi / 3.0, 0.5176381), +1);
    EXPECT_EQ(resolve_sign(1.0, 1.0, kPi / 3.0, 1.9318517), -1);
    EXPECT_EQ(resolve_sign(1.0, 1.0, 0.0, std::sqrt(2.0)), +1);
    EXPECT_NEAR(oracle::combined_amplitude(1.0, 1.0, kPi / 2.0 + kPi / 3.0), 0.5176381, 1e-7);
    EXPECT_NEAR(oracle::combined_amplitude(1.0, 1.0, kPi / 2.0 - kPi / 3.0), 1.9318517, 1e-7);
}

TEST(ResolveSign, GridOfSignedPhases) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> amp(0.1, 2.0);
    int correct = 0;
    for (int i = 0; i < 1000; ++i) {
        const double mag = 0.01 + (kPi - 0.02) * (i % 500) / 499.0;
        const double theta = i < 500 ? mag : -mag;
        const double t1 = amp(rng), t2 = amp(rng);
        const double both = oracle::combined_amplitude(t1, t2, theta);
        const double quad = oracle::combined_amplitude(t1, t2, theta + kPi / 2.0);
        const double abs_theta = solve_abs_phase(t1, t2, both);
        correct += resolve_sign(t1, t2, abs_theta, quad) == (theta > 0 ? 1 : -1);
    }
    EXPECT_EQ(correct, 1000);
}

TEST(AssembleH, WorkedValues) {
    EstimatedCsi a;
    a.magnitudes.resize(2, 2);
    a.magnitudes << 1, 1, 1, 1;
    a.theta.resize(2, 1);
    a.theta << kPi / 2.0, -kPi / 2.0;
    const auto ha = assemble_h(a);
    EXPECT_NEAR(std::abs(ha(0, 0) - Complex(1, 0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(ha(0, 1) - Complex(0, 1)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(ha(1, 1) - Complex(0, -1)), 0.0, 1e-15);

    EstimatedCsi b;
    b.magnitudes.resize(2, 2);
    b.magnitudes << 1, 0.5, 2, 1;
    b.theta.resize(2, 1);
    b.theta << 0.0, kPi;
    const auto hb = assemble_h(b);
    EXPECT_NEAR(std::abs(hb(0, 1) - Complex(0.5, 0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(hb(1, 0) - Complex(2, 0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(hb(1, 1) - Complex(-1, 0)), 0.0, 1e-15);

    b.theta.resize(1, 1);
    EXPECT_THROW(assemble_h(b), DimensionMismatch);
}

TEST(Calibrate, RealFirstColumnIsRecoveredExactly) {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 200; ++trial) {
        CMatrix h = oracle::random_channel(rng, 2, 2);
        for (Eigen::Index n = 0; n < 2; ++n) h.row(n) *= std::abs(h(n, 0)) / h(n, 0);
        const auto est = calibrate(exact_probe(h), 2);
        EXPECT_LE((est.entries() - h).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Calibrate, GaugeProperty) {
    std::mt19937_64 rng(25);
    for (int m : {2, 3, 4}) {
        for (int trial = 0; trial < 200; ++trial) {
            const CMatrix h = oracle::random_channel(rng, 2, m);
            const auto est = calibrate(exact_probe(h), static_cast<std::size_t>(m)).entries();
            for (Eigen::Index n = 0; n < 2; ++n) {
                EXPECT_GE(est(n, 0).real(), 0.0);
                EXPECT_EQ(est(n, 0).imag(), 0.0);
                for (Eigen::Index c = 0; c < m; ++c) {
                    EXPECT_NEAR(std::abs(est(n, c)) / std::abs(h(n, c)), 1.0, 1e-9);
                    if (c > 0) {
                        EXPECT_NEAR(wrap_pi(std::arg(est(n, c) / est(n, 0)) - std::arg(h(n, c) / h(n, 0))), 0.0,
                                    1e-9);
                    }
                }
            }
        }
    }
}

TEST(Calibrate, NoisyMeasurementsStayFinite) {
    std::mt19937_64 rng(26);
    std::normal_distribution<double> noise(0.0, 1e-3);
    for (int trial = 0; trial < 200; ++trial) {
        const CMatrix h = oracle::random_channel(rng, 2, 2);
        auto probe = [&](const CVector& w) {
            auto amps = exact_probe(h)(w);
            for (auto& a : amps) a = std::max(0.0, a + noise(rng));
            return amps;
        };
        const auto est = calibrate(probe, 2);
        EXPECT_TRUE(est.entries().allFinite());
    }
}

TEST(SimulatedProbe, NoiselessProbeMatchesExactCalibration) {
    std::mt19937_64 rng(27);
    const CMatrix h = oracle::random_channel(rng, 2, 2);
    SimulatedProbe probe(ChannelMatrix(h), NoiseConfig{}, 16000.0, 256);
    const auto est = calibrate(probe, 2);
    const auto ref = calibrate(exact_probe(h), 2);
    EXPECT_LE((est.entries() - ref.entries()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(probe.calls(), 4u);
    EXPECT_DOUBLE_EQ(probe.clock(), 4 * 256 / 16000.0);
}

TEST(SimulatedProbe, SteadyStateDiscardsTheFirstTenPercent) {
    std::vector<Complex> s(100, Complex(2.0, 0.0));
    for (int i = 0; i < 10; ++i) s[static_cast<std::size_t>(i)] = 100.0;
    EXPECT_DOUBLE_EQ(steady_state_amplitude(s), 2.0);
}

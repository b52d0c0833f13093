#pragma once

// Amplitude-only over-the-air calibration of the channel matrix.
//
// Element 1 is the phase reference. For each further element m the procedure
// transmits m alone, then elements 1 and m together with 0 and 90 degrees of
// programmed offset. With two elements this is exactly four transmissions:
// [1,0], [0,1], [1,1], [1,j].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "dmtb/array_channel.hpp"
#include "dmtb/errors.hpp"
#include "dmtb/rng.hpp"
#include "dmtb/types.hpp"

namespace dmtb {

inline constexpr double kDefaultMeasurementFloor = 1e-6;

struct CalibrationMeasurements {
    // Each inner vector holds one amplitude per receiver.
    std::vector<std::vector<double>> tx_only;         // [m], m = 0..M-1
    std::vector<std::vector<double>> both_zero;       // [m-1], elements 1 and m in phase
    std::vector<std::vector<double>> both_quadrature; // [m-1], element m advanced by 90 degrees

    std::size_t elements() const noexcept { return tx_only.size(); }
    std::size_t receivers() const noexcept { return tx_only.empty() ? 0 : tx_only.front().size(); }

    const std::vector<double>& amp_tx1_only() const { return tx_only.at(0); }
    const std::vector<double>& amp_tx2_only() const { return tx_only.at(1); }
    const std::vector<double>& amp_both_zero() const { return both_zero.at(0); }
    const std::vector<double>& amp_both_quadrature() const { return both_quadrature.at(0); }

    void validate() const {
        if (tx_only.size() < 2 || both_zero.size() != tx_only.size() - 1 ||
            both_quadrature.size() != tx_only.size() - 1)
            throw InvalidArgument("calibration measurements have inconsistent element count");
        const std::size_t n = receivers();
        auto check = [n](const std::vector<std::vector<double>>& sets) {
            for (const auto& s : sets) {
                if (s.size() != n) throw InvalidArgument("calibration amplitude sets differ in length");
                for (double a : s)
                    if (!(a >= 0.0) || !std::isfinite(a))
                        throw InvalidArgument("calibration amplitudes must be finite and >= 0");
            }
        };
        check(tx_only);
        check(both_zero);
        check(both_quadrature);
    }
};

struct EstimatedCsi {
    Eigen::MatrixXd magnitudes;  // N x M, |T_n,m|
    Eigen::MatrixXd theta;       // N x (M-1), signed phase of element m+1 relative to element 1
};

/// The transmission schedule; weight vectors in the order they are issued.
inline std::vector<CVector> calibration_schedule(std::size_t elements) {
    if (elements < 2) throw InvalidArgument("calibration needs at least 2 elements");
    const auto M = static_cast<Eigen::Index>(elements);
    std::vector<CVector> out;
    auto unit = [M](Eigen::Index m) {
        CVector w = CVector::Zero(M);
        w(m) = 1.0;
        return w;
    };
    out.push_back(unit(0));
    for (Eigen::Index m = 1; m < M; ++m) {
        out.push_back(unit(m));
        CVector zero = unit(0);
        zero(m) = 1.0;
        out.push_back(zero);
        CVector quad = unit(0);
        quad(m) = Complex(0.0, 1.0);
        out.push_back(quad);
    }
    return out;
}

/// Issues the calibration transmissions strictly in sequence and records amplitudes.
template <class TransmitAndMeasure>
CalibrationMeasurements run_calibration(TransmitAndMeasure&& transmit_and_measure, std::size_t elements,
                                        double floor = kDefaultMeasurementFloor) {
    const auto schedule = calibration_schedule(elements);
    CalibrationMeasurements meas;
    std::size_t receivers = 0;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        std::vector<double> amps = transmit_and_measure(schedule[i]);
        if (i == 0) receivers = amps.size();
        if (amps.size() != receivers || receivers == 0)
            throw DimensionMismatch("measurement callable returned an inconsistent receiver count");
        if (i == 0) {
            meas.tx_only.push_back(std::move(amps));
            continue;
        }
        switch ((i - 1) % 3) {
            case 0: meas.tx_only.push_back(std::move(amps)); break;
            case 1: meas.both_zero.push_back(std::move(amps)); break;
            default: meas.both_quadrature.push_back(std::move(amps)); break;
        }
    }
    meas.validate();
    for (std::size_t m = 0; m < meas.tx_only.size(); ++m)
        for (std::size_t n = 0; n < receivers; ++n)
            if (meas.tx_only[m][n] < floor)
                throw MeasurementFloor("receiver " + std::to_string(n + 1) + " amplitude from element " +
                                       std::to_string(m + 1) + " is below the measurement floor");
    return meas;
}

/// |theta| = arccos(clamp((both^2 - t1^2 - t2^2) / (2 t1 t2), -1, 1)).
///
/// Evaluated in half-angle form: (t1 + t2)^2 - both^2 = 4 t1 t2 sin^2(theta/2)
/// and both^2 - (t1 - t2)^2 = 4 t1 t2 cos^2(theta/2). Clamping a negative
/// side to zero is the same clamp, and the result stays accurate near 0 and pi
/// where arccos loses half its digits.
inline double solve_abs_phase(double t1, double t2, double both, double floor = kDefaultMeasurementFloor) {
    if (!(t1 > floor) || !(t2 > floor))
        throw DegenerateMagnitude("single-element amplitude at or below floor");
    const double sum = t1 + t2;
    const double diff = std::abs(t1 - t2);
    const double sin2 = std::max(0.0, (sum - both) * (sum + both));
    const double cos2 = std::max(0.0, (both - diff) * (both + diff));
    return 2.0 * std::atan2(std::sqrt(sin2), std::sqrt(cos2));
}

/// Picks the sign whose predicted quadrature amplitude is nearest the measurement; ties give +1.
inline int resolve_sign(double t1, double t2, double abs_theta, double quadrature_amp) {
    const double p_plus = std::abs(t1 + t2 * std::polar(1.0, kPi / 2.0 + abs_theta));
    const double p_minus = std::abs(t1 + t2 * std::polar(1.0, kPi / 2.0 - abs_theta));
    return std::abs(quadrature_amp - p_plus) <= std::abs(quadrature_amp - p_minus) ? +1 : -1;
}

inline EstimatedCsi estimate_csi(const CalibrationMeasurements& meas, double floor = kDefaultMeasurementFloor) {
    meas.validate();
    const auto N = static_cast<Eigen::Index>(meas.receivers());
    const auto M = static_cast<Eigen::Index>(meas.elements());
    EstimatedCsi csi;
    csi.magnitudes.resize(N, M);
    csi.theta.resize(N, M - 1);
    for (Eigen::Index n = 0; n < N; ++n) {
        const auto un = static_cast<std::size_t>(n);
        for (Eigen::Index m = 0; m < M; ++m) csi.magnitudes(n, m) = meas.tx_only[static_cast<std::size_t>(m)][un];
        const double t1 = csi.magnitudes(n, 0);
        for (Eigen::Index m = 1; m < M; ++m) {
            const auto pair = static_cast<std::size_t>(m - 1);
            const double t2 = csi.magnitudes(n, m);
            const double abs_theta = solve_abs_phase(t1, t2, meas.both_zero[pair][un], floor);
            const int sign = resolve_sign(t1, t2, abs_theta, meas.both_quadrature[pair][un]);
            // theta = pi is kept as +pi so it stays inside (-pi, pi].
            csi.theta(n, m - 1) = (sign < 0 && abs_theta < kPi) ? -abs_theta : abs_theta;
        }
    }
    return csi;
}

/// Row n = [ |T_n,1|, |T_n,2| e^{j theta_n}, ... ]; the first column is real and nonnegative.
inline ChannelMatrix assemble_h(const EstimatedCsi& csi) {
    const auto N = csi.magnitudes.rows();
    const auto M = csi.magnitudes.cols();
    if (csi.theta.rows() != N || csi.theta.cols() != M - 1)
        throw DimensionMismatch("theta shape does not match magnitudes");
    CMatrix h(N, M);
    for (Eigen::Index n = 0; n < N; ++n) {
        h(n, 0) = Complex(csi.magnitudes(n, 0), 0.0);
        for (Eigen::Index m = 1; m < M; ++m) h(n, m) = std::polar(csi.magnitudes(n, m), csi.theta(n, m - 1));
    }
    return ChannelMatrix(std::move(h));
}

struct CalibrationResult {
    CalibrationMeasurements measurements;
    EstimatedCsi csi;
    ChannelMatrix h;
};

template <class TransmitAndMeasure>
CalibrationResult calibrate_full(TransmitAndMeasure&& transmit_and_measure, std::size_t elements,
                                 double floor = kDefaultMeasurementFloor) {
    CalibrationResult r;
    r.measurements = run_calibration(std::forward<TransmitAndMeasure>(transmit_and_measure), elements, floor);
    r.csi = estimate_csi(r.measurements, floor);
    r.h = assemble_h(r.csi);
    return r;
}

template <class TransmitAndMeasure>
ChannelMatrix calibrate(TransmitAndMeasure&& transmit_and_measure, std::size_t elements,
                        double floor = kDefaultMeasurementFloor) {
    return calibrate_full(std::forward<TransmitAndMeasure>(transmit_and_measure), elements, floor).h;
}

/// Mean |sample| over the steady-state window (first 10% discarded).
inline double steady_state_amplitude(std::span<const Complex> samples) {
    const std::size_t skip = samples.size() / 10;
    if (samples.size() <= skip) return 0.0;
    double acc = 0.0;
    for (std::size_t i = skip; i < samples.size(); ++i) acc += std::abs(samples[i]);
    return acc / static_cast<double>(samples.size() - skip);
}

/// transmit_and_measure backed by the link simulator. Each call holds a constant
/// weight vector for `samples` samples, advances the simulated clock, and uses
/// a noise seed derived from the call index.
class SimulatedProbe {
public:
    SimulatedProbe(ChannelMatrix truth, NoiseConfig noise, double sample_rate, std::size_t samples,
                   double start_time = 0.0)
        : truth_(std::move(truth)), noise_(noise), sample_rate_(sample_rate), samples_(samples),
          clock_(start_time) {
        if (samples_ < 8) throw InvalidArgument("calibration window must hold at least 8 samples");
    }

    std::vector<double> operator()(const CVector& w) {
        WeightStream ws;
        ws.weights = {w};
        ws.symbol_duration = static_cast<double>(samples_) / sample_rate_;
        NoiseConfig nc = noise_;
        nc.seed = derive_seed(noise_.seed, {0xCA11ULL, calls_});
        const auto rx = propagate(truth_, ws, nc, sample_rate_, clock_);
        clock_ += ws.symbol_duration;
        ++calls_;
        std::vector<double> amps;
        amps.reserve(rx.receivers());
        for (const auto& s : rx.samples) amps.push_back(steady_state_amplitude(s));
        return amps;
    }

    double clock() const noexcept { return clock_; }
    std::uint64_t calls() const noexcept { return calls_; }

private:
    ChannelMatrix truth_;
    NoiseConfig noise_;
    double sample_rate_;
    std::size_t samples_;
    double clock_;
    std::uint64_t calls_ = 0;
};

}  // namespace dmtb

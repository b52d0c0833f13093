#pragma once

// Far-field channel synthesis for a linear array and the sample-level link
// simulator that turns weight streams into received complex baseband.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dmtb/errors.hpp"
#include "dmtb/rng.hpp"
#include "dmtb/types.hpp"

namespace dmtb {

class ArrayGeometry {
public:
    ArrayGeometry(std::vector<double> element_positions_m, double carrier_hz)
        : positions_(std::move(element_positions_m)), carrier_hz_(carrier_hz) {
        if (positions_.size() < 2) throw InvalidArgument("array needs at least 2 elements");
        if (!(carrier_hz_ > 0.0) || !std::isfinite(carrier_hz_))
            throw InvalidArgument("carrier_frequency must be positive");
        for (std::size_t i = 1; i < positions_.size(); ++i)
            if (!(positions_[i] > positions_[i - 1]))
                throw InvalidArgument("element positions must be strictly increasing");
    }

    /// Positions given in wavelengths of the carrier.
    static ArrayGeometry from_wavelengths(std::span<const double> positions_wl, double carrier_hz) {
        if (!(carrier_hz > 0.0)) throw InvalidArgument("carrier_frequency must be positive");
        const double lambda = kSpeedOfLight / carrier_hz;
        std::vector<double> pos;
        pos.reserve(positions_wl.size());
        for (double p : positions_wl) pos.push_back(p * lambda);
        return ArrayGeometry(std::move(pos), carrier_hz);
    }

    /// M elements at a uniform spacing (half a wavelength unless given).
    static ArrayGeometry uniform(std::size_t elements, double carrier_hz, double spacing_wl = 0.5) {
        std::vector<double> wl(elements);
        for (std::size_t m = 0; m < elements; ++m) wl[m] = spacing_wl * static_cast<double>(m);
        return from_wavelengths(wl, carrier_hz);
    }

    std::size_t elements() const noexcept { return positions_.size(); }
    const std::vector<double>& positions() const noexcept { return positions_; }
    double carrier_hz() const noexcept { return carrier_hz_; }
    double wavelength() const noexcept { return kSpeedOfLight / carrier_hz_; }

private:
    std::vector<double> positions_;
    double carrier_hz_;
};

/// A simulated receiver; angle is measured from endfire (+x along the array axis).
struct ReceiverSpec {
    double angle = 0.0;  // radians, [0, pi]
    double range = 1.0;  // meters
    double gain = 1.0;   // linear

    void validate() const {
        if (!(angle >= 0.0 && angle <= kPi)) throw InvalidArgument("receiver angle must lie in [0, pi]");
        if (!(range >= 0.0) || !std::isfinite(range)) throw InvalidArgument("receiver range must be >= 0");
        if (!(gain >= 0.0) || !std::isfinite(gain)) throw InvalidArgument("receiver gain must be >= 0");
    }
};

struct NoiseConfig {
    double awgn_sigma = 0.0;         // complex std per sample
    double phase_noise_sigma = 0.0;  // radians per sample
    double timing_jitter = 0.0;      // std, fraction of a symbol period
    double drift_rate = 0.0;         // rad/s applied to column 2
    std::uint64_t seed = 0;

    void validate() const {
        if (!(awgn_sigma >= 0.0) || !(phase_noise_sigma >= 0.0) || !(timing_jitter >= 0.0))
            throw InvalidArgument("noise standard deviations must be >= 0");
        if (!std::isfinite(drift_rate)) throw InvalidArgument("drift_rate must be finite");
    }
    bool noiseless() const noexcept {
        return awgn_sigma == 0.0 && phase_noise_sigma == 0.0 && timing_jitter == 0.0;
    }
};

struct RxSampleStream {
    double sample_rate = 0.0;
    double start_time = 0.0;
    std::vector<std::vector<Complex>> samples;  // [receiver][sample]

    std::size_t receivers() const noexcept { return samples.size(); }
    std::size_t length() const noexcept { return samples.empty() ? 0 : samples.front().size(); }
};

/// h_nm = (g_n / r_n) exp(-j 2 pi (r_n - x_m cos(theta_n)) / lambda)
inline ChannelMatrix synth_channel(const ArrayGeometry& geometry, std::span<const ReceiverSpec> receivers) {
    if (receivers.empty()) throw InvalidArgument("at least one receiver required");
    const double lambda = geometry.wavelength();
    const auto& x = geometry.positions();
    CMatrix h(static_cast<Eigen::Index>(receivers.size()), static_cast<Eigen::Index>(x.size()));
    for (std::size_t n = 0; n < receivers.size(); ++n) {
        const auto& rx = receivers[n];
        rx.validate();
        if (rx.range == 0.0) throw InvalidArgument("receiver range of 0 is singular");
        const double amp = rx.gain / rx.range;
        const double c = std::cos(rx.angle);
        for (std::size_t m = 0; m < x.size(); ++m) {
            const double path = rx.range - x[m] * c;
            h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) =
                std::polar(amp, -2.0 * kPi * path / lambda);
        }
    }
    return ChannelMatrix(std::move(h));
}

namespace detail {

/// Integer samples per symbol, or throws when sample_rate * T is not (close to) integral.
inline std::size_t samples_per_symbol(double sample_rate, double symbol_duration) {
    if (!(sample_rate > 0.0) || !(symbol_duration > 0.0))
        throw InvalidArgument("sample_rate and symbol duration must be positive");
    const double sps = sample_rate * symbol_duration;
    const double rounded = std::round(sps);
    if (std::abs(sps - rounded) > 1e-6 * std::max(1.0, sps))
        throw InvalidArgument("sample_rate * symbol duration must be an integer");
    if (rounded < 8.0) throw InvalidArgument("sample_rate must be at least 8x the symbol rate");
    return static_cast<std::size_t>(rounded);
}

}  // namespace detail

/// Per sample t, receiver n receives sum_m h_nm(t) w_m(t) plus impairments.
///
/// Each receiver draws from its own seeded streams (jitter, phase noise, AWGN),
/// so its output depends only on (H row, weights, noise, n). Timing jitter
/// shifts every element's switching instant independently per receiver, which
/// briefly mixes old and new weights across elements at a symbol boundary.
inline RxSampleStream propagate(const ChannelMatrix& h, const WeightStream& weights, const NoiseConfig& noise,
                                double sample_rate, double start_time = 0.0) {
    noise.validate();
    const std::size_t elements = h.elements();
    for (const auto& w : weights.weights)
        if (static_cast<std::size_t>(w.size()) != elements)
            throw DimensionMismatch("weight vector length does not match channel elements");
    const std::size_t sps = detail::samples_per_symbol(sample_rate, weights.symbol_duration);
    const std::size_t symbols = weights.symbols();
    const std::size_t total = symbols * sps;

    RxSampleStream out;
    out.sample_rate = sample_rate;
    out.start_time = start_time;
    out.samples.assign(h.receivers(), std::vector<Complex>(total));

    const double dt = 1.0 / sample_rate;
    const double max_shift = 0.49 * static_cast<double>(sps);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (std::size_t n = 0; n < h.receivers(); ++n) {
        Rng jitter_rng(derive_seed(noise.seed, {n, 0}));
        Rng phase_rng(derive_seed(noise.seed, {n, 1}));
        Rng awgn_rng(derive_seed(noise.seed, {n, 2}));

        // boundary[m][k]: sample position where element m switches to symbol k (k >= 1).
        std::vector<std::vector<double>> boundary(elements, std::vector<double>(symbols + 1));
        for (std::size_t m = 0; m < elements; ++m) {
            for (std::size_t k = 0; k <= symbols; ++k) {
                double shift = 0.0;
                if (k > 0 && k < symbols) {
                    shift = gauss(jitter_rng) * noise.timing_jitter * static_cast<double>(sps);
                    shift = std::clamp(shift, -max_shift, max_shift);
                }
                boundary[m][k] = static_cast<double>(k * sps) + shift;
            }
        }

        std::vector<std::size_t> current(elements, 0);
        auto& rx = out.samples[n];
        for (std::size_t i = 0; i < total; ++i) {
            const double pos = static_cast<double>(i);
            const double t = start_time + pos * dt;
            Complex y{0.0, 0.0};
            for (std::size_t m = 0; m < elements; ++m) {
                while (current[m] + 1 < symbols && boundary[m][current[m] + 1] <= pos) ++current[m];
                Complex hnm = h(n, m);
                if (m == 1 && noise.drift_rate != 0.0) hnm *= std::polar(1.0, -noise.drift_rate * t);
                y += hnm * weights.weights[current[m]](static_cast<Eigen::Index>(m));
            }
            if (noise.phase_noise_sigma > 0.0) y *= std::polar(1.0, noise.phase_noise_sigma * gauss(phase_rng));
            if (noise.awgn_sigma > 0.0) {
                const double s = noise.awgn_sigma / std::sqrt(2.0);
                const double re = gauss(awgn_rng);
                const double im = gauss(awgn_rng);
                y += Complex(s * re, s * im);
            }
            rx[i] = y;
        }
    }
    return out;
}

}  // namespace dmtb

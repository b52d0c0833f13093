#pragma once

// One end-to-end transmission over the simulated testbed:
// pad -> ASCII bits -> optional LDPC -> DPSK phases -> precode with the
// calibrated estimate -> propagate over the true channel -> detect -> decode.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmtb/array_channel.hpp"
#include "dmtb/calibration.hpp"
#include "dmtb/fec.hpp"
#include "dmtb/metrics.hpp"
#include "dmtb/modem.hpp"
#include "dmtb/precoder.hpp"
#include "dmtb/scenario.hpp"

namespace dmtb {

enum class DetectorKind { Sync, Async };

inline std::string_view to_string(DetectorKind d) noexcept { return d == DetectorKind::Sync ? "sync" : "async"; }

inline DetectorKind parse_detector(std::string_view s) {
    if (s == "sync") return DetectorKind::Sync;
    if (s == "async") return DetectorKind::Async;
    throw InvalidArgument("detector must be \"sync\" or \"async\"");
}

inline constexpr std::uint64_t kDefaultFecSeed = 7;

struct LinkOptions {
    int bits_per_symbol = 1;
    bool fec = false;
    DetectorKind detector = DetectorKind::Sync;
    DetectorConfig detector_config;
    std::uint64_t fec_seed = kDefaultFecSeed;
    std::size_t fec_length = kDefaultCodeLength;
    bool terminator = false;  // append one NUL to every message after padding

    void validate() const {
        if (bits_per_symbol < 1 || bits_per_symbol > 4) throw InvalidArgument("bits_per_symbol must be in 1..4");
        detector_config.validate();
    }
};

/// Process-wide cache; codes are immutable once built.
inline std::shared_ptr<const LdpcCode> shared_ldpc_code(std::uint64_t seed, std::size_t n) {
    static std::mutex mu;
    static std::map<std::pair<std::uint64_t, std::size_t>, std::shared_ptr<const LdpcCode>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[{seed, n}];
    if (!slot) slot = std::make_shared<const LdpcCode>(ldpc_build(seed, n));
    return slot;
}

struct ChannelOutcome {
    std::string message;
    std::string padded;
    Bits tx_bits;       // padded (and terminated) message bits, what the error counts refer to
    Bits air_bits;      // bits on the air (after FEC when enabled)
    Bits rx_bits;       // detector output, modulation tail padding removed
    Bits decoded_bits;  // after FEC when enabled, otherwise rx_bits
    std::string decoded_text;
    std::size_t bit_errors = 0;
    ErrorBreakdown breakdown;
    bool fec_framing_lost = false;
    std::size_t fec_blocks_failed = 0;

    std::size_t message_bits() const noexcept { return message.size() * 8; }
    std::size_t padding_chars() const noexcept { return tx_bits.size() / 8 - message.size(); }
};

struct Transmission {
    DpskConfig dpsk;
    LinkOptions options;
    std::uint64_t noise_seed = 0;
    double start_time = 0.0;
    double end_time = 0.0;
    std::size_t samples_per_symbol = 0;
    WeightStream weights;
    std::vector<PhaseTrace> traces;
    std::vector<ChannelOutcome> channels;
};

inline double transmission_duration(std::size_t air_bits, int bits_per_symbol, const LinkTiming& timing) {
    const auto b = static_cast<std::size_t>(bits_per_symbol);
    const std::size_t symbols = (air_bits + b - 1) / b + 1;
    return static_cast<double>(symbols) / timing.symbol_rate;
}

inline Transmission transmit(const Scenario& scenario, const ChannelMatrix& estimate,
                             std::span<const std::string> messages, const LinkOptions& options,
                             std::uint64_t noise_seed, double start_time) {
    options.validate();
    const ChannelMatrix truth = scenario.channel();
    if (messages.size() != truth.receivers())
        throw InvalidArgument("need exactly one message per receiver (" + std::to_string(truth.receivers()) + ")");
    if (estimate.receivers() != truth.receivers() || estimate.elements() != truth.elements())
        throw DimensionMismatch("calibration does not match the scenario dimensions");

    Transmission tx;
    tx.options = options;
    tx.noise_seed = noise_seed;
    tx.start_time = start_time;
    tx.samples_per_symbol = scenario.link.samples_per_symbol;
    tx.dpsk.bits_per_symbol = options.bits_per_symbol;
    tx.dpsk.symbol_rate = scenario.link.symbol_rate;
    tx.dpsk.initial_phase = scenario.link.initial_phase;

    std::shared_ptr<const LdpcCode> code;
    if (options.fec) code = shared_ldpc_code(options.fec_seed, options.fec_length);

    auto padded = pad_messages(messages);
    if (options.terminator)
        for (auto& p : padded) p.push_back('\0');
    std::vector<std::vector<double>> phases;
    std::size_t tail_padding = 0;
    for (std::size_t n = 0; n < messages.size(); ++n) {
        ChannelOutcome ch;
        ch.message = messages[n];
        ch.padded = padded[n];
        ch.tx_bits = encode_ascii(ch.padded).bits;
        ch.air_bits = code ? fec_encode_stream(*code, ch.tx_bits).coded : ch.tx_bits;
        auto sym = dpsk_modulate(ch.air_bits, tx.dpsk);
        tail_padding = sym.tail_padding;
        phases.push_back(std::move(sym.phases));
        tx.channels.push_back(std::move(ch));
    }

    tx.weights = build_weight_stream(estimate, phases, tx.dpsk.symbol_duration());
    NoiseConfig noise = scenario.noise;
    noise.seed = noise_seed;
    const double fs = scenario.link.sample_rate();
    const auto rx = propagate(truth, tx.weights, noise, fs, start_time);
    tx.traces = phase_traces(rx);
    tx.end_time = start_time + static_cast<double>(rx.length()) / fs;

    const auto boundaries = uniform_boundaries(tx.weights.symbols(), tx.samples_per_symbol);
    for (std::size_t n = 0; n < tx.channels.size(); ++n) {
        auto& ch = tx.channels[n];
        Bits raw = options.detector == DetectorKind::Sync
                       ? sync_detect(tx.traces[n], tx.dpsk, boundaries)
                       : async_detect(tx.traces[n], tx.dpsk, options.detector_config);
        if (raw.size() >= tail_padding) raw.resize(raw.size() - tail_padding);
        ch.rx_bits = std::move(raw);
        if (code) {
            try {
                auto dec = fec_decode_stream(*code, ch.rx_bits, ch.tx_bits.size());
                ch.decoded_bits = std::move(dec.bits);
                ch.fec_blocks_failed = dec.blocks_failed;
            } catch (const LengthMismatch&) {
                // Framing lost: pass the systematic positions through uncorrected.
                ch.fec_framing_lost = true;
                for (std::size_t b = 0; b * code->n() < ch.rx_bits.size(); ++b)
                    for (std::size_t i = 0; i < code->k() && b * code->n() + i < ch.rx_bits.size(); ++i)
                        ch.decoded_bits.push_back(ch.rx_bits[b * code->n() + i]);
                if (ch.decoded_bits.size() > ch.tx_bits.size()) ch.decoded_bits.resize(ch.tx_bits.size());
            }
        } else {
            ch.decoded_bits = ch.rx_bits;
        }
        ch.decoded_text = decode_ascii(ch.decoded_bits).text;
        ch.bit_errors = positional_bit_errors(ch.tx_bits, ch.decoded_bits);
        ch.breakdown = classify_errors(ch.tx_bits, ch.decoded_bits);
    }
    return tx;
}

/// Calibration against the scenario's true channel using the simulated probe.
struct SimulatedCalibration {
    CalibrationResult result;
    double started_at = 0.0;
    double completed_at = 0.0;
    std::uint64_t seed = 0;
};

inline SimulatedCalibration simulate_calibration(const Scenario& scenario, std::uint64_t seed, double start_time = 0.0) {
    NoiseConfig noise = scenario.noise;
    noise.seed = seed;
    SimulatedProbe probe(scenario.channel(), noise, scenario.link.sample_rate(), scenario.calibration.samples,
                         start_time);
    SimulatedCalibration c;
    c.seed = seed;
    c.started_at = start_time;
    c.result = calibrate_full(probe, scenario.geometry().elements(), scenario.calibration.floor);
    c.completed_at = probe.clock();
    return c;
}

}  // namespace dmtb

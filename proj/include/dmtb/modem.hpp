#pragma once

// DPSK framing, modulation and detection.
//
// Constellation: the 2^B differential increments (2j+1) pi / 2^B, j = 0..2^B-1,
// labelled by a Gray code along the circle. No increment is zero, so every
// symbol produces an observable phase step. For B = 1 the labels follow the
// project polarity: bit 1 -> +90 degrees, bit 0 -> -90 degrees.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmtb/array_channel.hpp"
#include "dmtb/errors.hpp"
#include "dmtb/types.hpp"

namespace dmtb {

using Bits = std::vector<std::uint8_t>;

struct BitStream {
    Bits bits;
    std::vector<std::size_t> message_offsets;  // start index of each framed message
    std::size_t padding = 0;                   // trailing filler bits

    std::size_t size() const noexcept { return bits.size(); }
};

inline std::string bits_to_string(std::span<const std::uint8_t> bits) {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
}

inline Bits bits_from_string(std::string_view s) {
    Bits out;
    out.reserve(s.size());
    for (char c : s) {
        if (c != '0' && c != '1') throw InvalidArgument("bit strings may contain only 0 and 1");
        out.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    return out;
}

struct DpskConfig {
    int bits_per_symbol = 1;
    double symbol_rate = 1000.0;  // symbols per second
    double initial_phase = 0.0;

    void validate() const {
        if (bits_per_symbol < 1 || bits_per_symbol > 4)
            throw InvalidArgument("bits_per_symbol must be in 1..4");
        if (!(symbol_rate > 0.0)) throw InvalidArgument("symbol_rate must be positive");
    }
    std::size_t points() const noexcept { return std::size_t{1} << bits_per_symbol; }
    double symbol_duration() const noexcept { return 1.0 / symbol_rate; }
};

namespace detail {

inline unsigned label_at_position(unsigned j, int bits_per_symbol) {
    if (bits_per_symbol == 1) return j == 0 ? 1u : 0u;
    return j ^ (j >> 1);
}

}  // namespace detail

/// Increment for each B-bit label, wrapped to (-pi, pi]; index = label value.
inline std::vector<double> constellation(int bits_per_symbol) {
    if (bits_per_symbol < 1 || bits_per_symbol > 4) throw InvalidArgument("bits_per_symbol must be in 1..4");
    const unsigned count = 1u << bits_per_symbol;
    std::vector<double> inc(count);
    for (unsigned j = 0; j < count; ++j)
        inc[detail::label_at_position(j, bits_per_symbol)] =
            wrap_pi((2.0 * j + 1.0) * kPi / static_cast<double>(count));
    return inc;
}

/// Nearest constellation label to a phase step; ties go to the smaller label.
inline unsigned nearest_label(double delta, std::span<const double> increments) {
    unsigned best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (unsigned v = 0; v < increments.size(); ++v) {
        const double d = std::abs(wrap_pi(delta - increments[v]));
        if (d < best_d - 1e-12) {
            best_d = d;
            best = v;
        }
    }
    return best;
}

inline BitStream encode_ascii(std::string_view text) {
    BitStream out;
    out.bits.reserve(text.size() * 8);
    out.message_offsets.push_back(0);
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c > 127) throw NonAscii("character code " + std::to_string(c) + " is not 7-bit ASCII");
        for (int b = 7; b >= 0; --b) out.bits.push_back(static_cast<std::uint8_t>((c >> b) & 1u));
    }
    return out;
}

/// NUL-pads every text to the longest length.
inline std::vector<std::string> pad_messages(std::span<const std::string> texts) {
    if (texts.empty()) throw InvalidArgument("pad_messages needs at least one text");
    std::size_t longest = 0;
    for (const auto& t : texts) longest = std::max(longest, t.size());
    std::vector<std::string> out(texts.begin(), texts.end());
    for (auto& t : out) t.resize(longest, '\0');
    return out;
}

struct DecodedText {
    std::string text;
    std::size_t dropped_bits = 0;  // trailing partial byte
    std::size_t padding = 0;       // trailing NULs stripped
};

inline DecodedText decode_ascii(std::span<const std::uint8_t> bits) {
    DecodedText out;
    const std::size_t chars = bits.size() / 8;
    out.dropped_bits = bits.size() % 8;
    out.text.reserve(chars);
    for (std::size_t i = 0; i < chars; ++i) {
        unsigned c = 0;
        for (std::size_t b = 0; b < 8; ++b) c = (c << 1) | (bits[i * 8 + b] & 1u);
        out.text.push_back(static_cast<char>(c));
    }
    while (!out.text.empty() && out.text.back() == '\0') {
        out.text.pop_back();
        ++out.padding;
    }
    return out;
}

struct DpskSymbols {
    std::vector<double> phases;  // K + 1 values, initial reference first; unwrapped
    std::size_t tail_padding = 0;
};

inline DpskSymbols dpsk_modulate(std::span<const std::uint8_t> bits, const DpskConfig& cfg) {
    cfg.validate();
    const auto B = static_cast<std::size_t>(cfg.bits_per_symbol);
    const auto inc = constellation(cfg.bits_per_symbol);
    DpskSymbols out;
    out.tail_padding = (B - bits.size() % B) % B;
    const std::size_t symbols = (bits.size() + out.tail_padding) / B;
    out.phases.reserve(symbols + 1);
    double phase = cfg.initial_phase;
    out.phases.push_back(phase);
    for (std::size_t k = 0; k < symbols; ++k) {
        unsigned label = 0;
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t idx = k * B + b;
            label = (label << 1) | (idx < bits.size() ? (bits[idx] & 1u) : 0u);
        }
        phase += inc[label];
        out.phases.push_back(phase);
    }
    return out;
}

inline void append_label(Bits& out, unsigned label, int bits_per_symbol) {
    for (int b = bits_per_symbol - 1; b >= 0; --b) out.push_back(static_cast<std::uint8_t>((label >> b) & 1u));
}

/// Received phase (radians, unwrapped) of one receiver on a uniform time grid.
struct PhaseTrace {
    double start_time = 0.0;
    double sample_rate = 1.0;
    std::vector<double> phase;

    std::size_t size() const noexcept { return phase.size(); }
    double time(std::size_t i) const noexcept { return start_time + static_cast<double>(i) / sample_rate; }
};

inline std::vector<double> unwrap(std::span<const double> wrapped) {
    std::vector<double> out(wrapped.begin(), wrapped.end());
    for (std::size_t i = 1; i < out.size(); ++i) out[i] = out[i - 1] + wrap_pi(wrapped[i] - wrapped[i - 1]);
    return out;
}

inline PhaseTrace phase_trace(std::span<const Complex> samples, double sample_rate, double start_time = 0.0) {
    std::vector<double> wrapped;
    wrapped.reserve(samples.size());
    for (const auto& s : samples) wrapped.push_back(std::arg(s));
    PhaseTrace t;
    t.start_time = start_time;
    t.sample_rate = sample_rate;
    t.phase = unwrap(wrapped);
    return t;
}

inline std::vector<PhaseTrace> phase_traces(const RxSampleStream& rx) {
    std::vector<PhaseTrace> out;
    out.reserve(rx.receivers());
    for (const auto& s : rx.samples) out.push_back(phase_trace(s, rx.sample_rate, rx.start_time));
    return out;
}

/// Noiseless trace holding each symbol phase for samples_per_symbol samples.
inline PhaseTrace ideal_trace(std::span<const double> symbol_phases, std::size_t samples_per_symbol,
                              double sample_rate) {
    PhaseTrace t;
    t.sample_rate = sample_rate;
    t.phase.reserve(symbol_phases.size() * samples_per_symbol);
    for (double p : symbol_phases) t.phase.insert(t.phase.end(), samples_per_symbol, p);
    return t;
}

/// Symbol start indices for K + 1 back-to-back symbols of equal length.
inline std::vector<std::size_t> uniform_boundaries(std::size_t symbols, std::size_t samples_per_symbol) {
    std::vector<std::size_t> b(symbols);
    for (std::size_t k = 0; k < symbols; ++k) b[k] = k * samples_per_symbol;
    return b;
}

/// Decodes with known symbol boundaries: the step between the circular mean
/// phases of consecutive intervals. Interval k spans [boundaries[k], boundaries[k+1]),
/// the last one runs to the end of the trace.
inline Bits sync_detect(const PhaseTrace& trace, const DpskConfig& cfg, std::span<const std::size_t> boundaries) {
    cfg.validate();
    const auto inc = constellation(cfg.bits_per_symbol);
    std::vector<double> means;
    means.reserve(boundaries.size());
    for (std::size_t k = 0; k < boundaries.size(); ++k) {
        const std::size_t lo = boundaries[k];
        const std::size_t hi = k + 1 < boundaries.size() ? boundaries[k + 1] : trace.size();
        if (hi > trace.size() || lo >= hi)
            throw EmptyInterval("symbol interval " + std::to_string(k) + " contains no samples");
        Complex acc{0.0, 0.0};
        for (std::size_t i = lo; i < hi; ++i) acc += std::polar(1.0, trace.phase[i]);
        means.push_back(std::arg(acc));
    }
    Bits out;
    out.reserve(means.empty() ? 0 : (means.size() - 1) * static_cast<std::size_t>(cfg.bits_per_symbol));
    for (std::size_t k = 1; k < means.size(); ++k)
        append_label(out, nearest_label(means[k] - means[k - 1], inc), cfg.bits_per_symbol);
    return out;
}

struct DetectorConfig {
    double transition_threshold = 0.0;  // radians; <= 0 selects the default for B
    std::size_t confirmation_window = 3;
    double refractory = 0.5;            // fraction of a symbol period

    /// Half the smallest transition magnitude, pi / 2^(B+1).
    static double default_threshold(int bits_per_symbol) {
        return kPi / static_cast<double>(std::size_t{1} << (bits_per_symbol + 1));
    }
    double threshold_for(int bits_per_symbol) const {
        return transition_threshold > 0.0 ? transition_threshold : default_threshold(bits_per_symbol);
    }
    void validate() const {
        if (!std::isfinite(transition_threshold)) throw InvalidArgument("transition_threshold must be finite");
        if (confirmation_window < 1) throw InvalidArgument("confirmation_window must be >= 1");
        if (!(refractory >= 0.0 && refractory < 1.0)) throw InvalidArgument("refractory must be in [0, 1)");
    }
};

/// Infers symbols from phase transitions alone, without a shared clock.
///
/// An event fires once the phase has stayed more than the threshold away from
/// the current reference level for confirmation_window consecutive samples.
/// A hold-off span of max(window, refractory) samples starts at the first
/// sample of the run; no new run can start inside it. The new level is the
/// mean phase over the trailing half of the span (never fewer than `window`
/// samples). The output may be longer or shorter than what was sent.
inline Bits async_detect(const PhaseTrace& trace, const DpskConfig& cfg, const DetectorConfig& det = {}) {
    cfg.validate();
    det.validate();
    Bits out;
    if (trace.size() == 0) return out;
    const auto inc = constellation(cfg.bits_per_symbol);
    const double threshold = det.threshold_for(cfg.bits_per_symbol);
    const double sps = trace.sample_rate / cfg.symbol_rate;
    const auto refractory_samples = static_cast<std::size_t>(std::floor(det.refractory * sps));
    const std::size_t hold = std::max(det.confirmation_window, refractory_samples);
    const std::size_t tail = std::max(det.confirmation_window, hold / 2);
    const auto& ph = trace.phase;

    auto mean_over = [&](std::size_t lo, std::size_t hi) {
        hi = std::min(hi, ph.size());
        lo = std::min(lo, hi - 1);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += ph[i];
        return acc / static_cast<double>(hi - lo);
    };

    double level = mean_over(0, hold);
    std::size_t run = 0;
    std::size_t run_start = 0;
    std::size_t i = std::min(hold, ph.size());
    while (i < ph.size()) {
        if (std::abs(ph[i] - level) > threshold) {
            if (run++ == 0) run_start = i;
            if (run >= det.confirmation_window) {
                const double next = mean_over(run_start + hold - tail, run_start + hold);
                append_label(out, nearest_label(next - level, inc), cfg.bits_per_symbol);
                level = next;
                run = 0;
                i = run_start + hold;
                continue;
            }
        } else {
            run = 0;
        }
        ++i;
    }
    return out;
}

}  // namespace dmtb

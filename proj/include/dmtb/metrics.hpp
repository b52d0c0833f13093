#pragma once

// Bit error accounting: positional counts, edit-distance error breakdown and
// per-channel summary statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmtb/errors.hpp"

namespace dmtb {

/// Index-by-index comparison over the transmitted length. Missing received
/// positions count as errors; extra received bits are ignored.
inline std::size_t positional_bit_errors(std::span<const std::uint8_t> tx, std::span<const std::uint8_t> rx) {
    std::size_t errors = 0;
    for (std::size_t i = 0; i < tx.size(); ++i)
        if (i >= rx.size() || (tx[i] & 1u) != (rx[i] & 1u)) ++errors;
    return errors;
}

struct ErrorBreakdown {
    std::size_t insertions = 0;     // extra received bits
    std::size_t deletions = 0;      // transmitted bits missing from the received stream
    std::size_t substitutions = 0;  // flips

    std::size_t distance() const noexcept { return insertions + deletions + substitutions; }
    ErrorBreakdown& operator+=(const ErrorBreakdown& o) noexcept {
        insertions += o.insertions;
        deletions += o.deletions;
        substitutions += o.substitutions;
        return *this;
    }
    bool operator==(const ErrorBreakdown&) const = default;
};

namespace detail {

// Banded unit-cost edit distance with traceback. Any alignment of cost <= band
// stays inside the band, so a result <= band is exact.
inline std::optional<ErrorBreakdown> banded_alignment(std::span<const std::uint8_t> tx,
                                                      std::span<const std::uint8_t> rx, std::size_t band) {
    const std::size_t a = tx.size(), b = rx.size();
    const std::size_t width = 2 * band + 1;
    constexpr std::uint32_t kInf = std::numeric_limits<std::uint32_t>::max() / 2;
    std::vector<std::uint32_t> d((a + 1) * width, kInf);
    // Cell (i, j) lives at row i, column j - i + band.
    auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return d[i * width + (j + band - i)]; };
    auto get = [&](std::size_t i, std::size_t j) -> std::uint32_t {
        if (j + band < i || j > i + band || j > b) return kInf;
        return d[i * width + (j + band - i)];
    };
    for (std::size_t i = 0; i <= a; ++i) {
        const std::size_t jlo = i > band ? i - band : 0;
        const std::size_t jhi = std::min(b, i + band);
        for (std::size_t j = jlo; j <= jhi; ++j) {
            if (i == 0 && j == 0) {
                at(0, 0) = 0;
                continue;
            }
            std::uint32_t best = kInf;
            if (i > 0 && j > 0) best = get(i - 1, j - 1) + ((tx[i - 1] & 1u) != (rx[j - 1] & 1u) ? 1u : 0u);
            if (i > 0) best = std::min(best, get(i - 1, j) + 1);
            if (j > 0) best = std::min(best, get(i, j - 1) + 1);
            at(i, j) = best;
        }
    }
    const std::uint32_t total = get(a, b);
    if (total > band) return std::nullopt;

    ErrorBreakdown out;
    std::size_t i = a, j = b;
    while (i > 0 || j > 0) {
        const std::uint32_t here = get(i, j);
        if (i > 0 && j > 0) {
            const std::uint32_t cost = (tx[i - 1] & 1u) != (rx[j - 1] & 1u) ? 1u : 0u;
            if (get(i - 1, j - 1) + cost == here) {
                out.substitutions += cost;
                --i;
                --j;
                continue;
            }
        }
        if (i > 0 && get(i - 1, j) + 1 == here) {
            ++out.deletions;
            --i;
            continue;
        }
        ++out.insertions;
        --j;
    }
    return out;
}

}  // namespace detail

/// Minimal unit-cost alignment of rx against tx. Traceback prefers
/// substitution (or match), then deletion, then insertion.
inline ErrorBreakdown classify_errors(std::span<const std::uint8_t> tx, std::span<const std::uint8_t> rx) {
    const std::size_t diff = tx.size() > rx.size() ? tx.size() - rx.size() : rx.size() - tx.size();
    const std::size_t cap = std::max(tx.size(), rx.size());
    for (std::size_t band = std::max<std::size_t>(diff, 16);; band *= 2) {
        band = std::min(band, cap);
        if (auto r = detail::banded_alignment(tx, rx, band)) return *r;
        if (band == cap) break;
    }
    // A band of max(len) always contains the full matrix.
    throw Error("edit alignment failed to converge");
}

/// Decimal rendering of numerator / denominator to 2 places, halves rounded up.
inline std::string fixed2_ratio(std::uint64_t numerator, std::uint64_t denominator) {
    if (denominator == 0) throw InvalidArgument("zero denominator");
    const std::uint64_t hundredths = (numerator * 200 + denominator) / (2 * denominator);
    std::string frac = std::to_string(hundredths % 100);
    if (frac.size() < 2) frac.insert(frac.begin(), '0');
    return std::to_string(hundredths / 100) + "." + frac;
}

struct BerStats {
    std::uint64_t total_bit_errors = 0;
    std::uint64_t total_bits = 0;
    std::uint64_t num_messages = 0;
    double percent_bit_error = 0.0;
    double mean_bit_errors = 0.0;
    double std_bit_errors = 0.0;  // sample standard deviation (n - 1)
    std::vector<std::uint64_t> per_message;

    std::string percent_2dp() const { return fixed2_ratio(total_bit_errors * 100, total_bits); }
    std::string mean_2dp() const { return fixed2_ratio(total_bit_errors, num_messages); }
    double ber() const noexcept {
        return total_bits ? static_cast<double>(total_bit_errors) / static_cast<double>(total_bits) : 0.0;
    }
};

inline BerStats ber_stats(std::span<const std::uint64_t> per_message_counts, std::uint64_t total_bits,
                          std::uint64_t num_messages) {
    if (per_message_counts.size() != num_messages)
        throw InvalidArgument("per-message count length must equal num_messages");
    if (total_bits == 0) throw InvalidArgument("total_bits must be positive");
    if (num_messages == 0) throw InvalidArgument("num_messages must be positive");
    BerStats s;
    s.per_message.assign(per_message_counts.begin(), per_message_counts.end());
    s.total_bits = total_bits;
    s.num_messages = num_messages;
    s.total_bit_errors = std::accumulate(s.per_message.begin(), s.per_message.end(), std::uint64_t{0});
    s.percent_bit_error = 100.0 * static_cast<double>(s.total_bit_errors) / static_cast<double>(total_bits);
    s.mean_bit_errors = static_cast<double>(s.total_bit_errors) / static_cast<double>(num_messages);
    if (num_messages > 1) {
        double ss = 0.0;
        for (auto c : s.per_message) {
            const double d = static_cast<double>(c) - s.mean_bit_errors;
            ss += d * d;
        }
        s.std_bit_errors = std::sqrt(ss / static_cast<double>(num_messages - 1));
    }
    return s;
}

}  // namespace dmtb

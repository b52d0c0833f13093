#pragma once

// Regular (3,6) Gallager LDPC code with systematic encoding and a hard-decision
// bit-flipping decoder.
//
// The Gallager parity matrix has two redundant rows (each band sums to the
// all-ones vector), so its rank is n/2 - 2 when 6 | n. Message bits fill the
// first k = n/2 information positions; the remaining information positions are
// fixed to zero and travel with the parity bits. Codewords are laid out as
// [k message bits | n-k redundancy bits].

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dmtb/errors.hpp"
#include "dmtb/modem.hpp"
#include "dmtb/rng.hpp"

namespace dmtb {

namespace detail {

class BitRow {
public:
    explicit BitRow(std::size_t bits = 0) : words_((bits + 63) / 64, 0) {}
    bool get(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1u; }
    void set(std::size_t i) noexcept { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
    void flip(std::size_t i) noexcept { words_[i >> 6] ^= std::uint64_t{1} << (i & 63); }
    BitRow& operator^=(const BitRow& o) noexcept {
        for (std::size_t w = 0; w < words_.size(); ++w) words_[w] ^= o.words_[w];
        return *this;
    }

private:
    std::vector<std::uint64_t> words_;
};

}  // namespace detail

inline constexpr std::size_t kDefaultCodeLength = 816;
inline constexpr std::size_t kLdpcColumnWeight = 3;
inline constexpr std::size_t kLdpcRowWeight = 6;

class LdpcCode {
public:
    /// Builds from an explicit parity-check matrix given as column lists per
    /// check row, already in systematic column order. Used by ldpc_build and
    /// the alist reader.
    LdpcCode(std::size_t n, std::vector<std::vector<std::uint32_t>> checks, std::uint64_t seed = 0,
             std::vector<std::uint32_t> permutation = {})
        : n_(n), k_(n / 2), seed_(seed), checks_(std::move(checks)), permutation_(std::move(permutation)) {
        if (n_ < 2) throw InvalidArgument("code length too small");
        vars_.assign(n_, {});
        for (std::uint32_t c = 0; c < checks_.size(); ++c) {
            auto& row = checks_[c];
            std::sort(row.begin(), row.end());
            for (auto v : row) {
                if (v >= n_) throw InvalidArgument("parity-check column index out of range");
                vars_[v].push_back(c);
            }
        }
        if (permutation_.empty()) {
            permutation_.resize(n_);
            std::iota(permutation_.begin(), permutation_.end(), 0u);
        }
        setup_encoder();
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t k() const noexcept { return k_; }
    std::size_t check_count() const noexcept { return checks_.size(); }
    std::size_t rank() const noexcept { return parity_rows_.size(); }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<std::vector<std::uint32_t>>& checks() const noexcept { return checks_; }
    const std::vector<std::vector<std::uint32_t>>& variables() const noexcept { return vars_; }
    /// Systematic position -> column index of the unpermuted construction.
    const std::vector<std::uint32_t>& permutation() const noexcept { return permutation_; }

    std::vector<std::uint8_t> syndrome(std::span<const std::uint8_t> word) const {
        if (word.size() != n_) throw LengthMismatch("word length differs from code length");
        std::vector<std::uint8_t> s(checks_.size(), 0);
        for (std::size_t c = 0; c < checks_.size(); ++c)
            for (auto v : checks_[c]) s[c] ^= word[v] & 1u;
        return s;
    }

    bool is_codeword(std::span<const std::uint8_t> word) const {
        const auto s = syndrome(word);
        return std::all_of(s.begin(), s.end(), [](auto b) { return b == 0; });
    }

    Bits encode(std::span<const std::uint8_t> message) const {
        if (message.size() != k_)
            throw LengthMismatch("message length " + std::to_string(message.size()) + " != k = " +
                                 std::to_string(k_));
        if (!pivots_trailing_) throw ConstructionFailed("parity block is not invertible in systematic order");
        Bits word(n_, 0);
        for (std::size_t i = 0; i < k_; ++i) word[i] = message[i] & 1u;
        const std::size_t info = n_ - parity_rows_.size();
        for (std::size_t r = 0; r < parity_rows_.size(); ++r) {
            std::uint8_t p = 0;
            for (std::size_t j = 0; j < k_; ++j)
                if (word[j] && parity_rows_[r].get(j)) p ^= 1u;
            word[info + r] = p;
        }
        return word;
    }

private:
    // Reduces H over GF(2) with pivots in the trailing columns. The pivot
    // columns must be exactly the last rank() positions for encode() to be
    // systematic, which ldpc_build arranges through its column permutation.
    void setup_encoder() {
        std::vector<detail::BitRow> rows;
        rows.reserve(checks_.size());
        for (const auto& c : checks_) {
            detail::BitRow r(n_);
            for (auto v : c) r.flip(v);
            rows.push_back(std::move(r));
        }
        std::size_t placed = 0;
        std::vector<std::size_t> pivot_cols;
        for (std::size_t col = n_; col-- > 0 && placed < rows.size();) {
            std::size_t pick = placed;
            while (pick < rows.size() && !rows[pick].get(col)) ++pick;
            if (pick == rows.size()) continue;
            std::swap(rows[placed], rows[pick]);
            for (std::size_t r = 0; r < rows.size(); ++r)
                if (r != placed && rows[r].get(col)) rows[r] ^= rows[placed];
            pivot_cols.push_back(col);
            ++placed;
        }
        const std::size_t rank = placed;
        // Pivots must occupy the trailing block, in ascending order.
        std::vector<std::size_t> sorted = pivot_cols;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t info = n_ - rank;
        pivots_trailing_ = info >= k_;
        for (std::size_t i = 0; i < sorted.size() && pivots_trailing_; ++i)
            pivots_trailing_ = sorted[i] == info + i;
        if (!pivots_trailing_) return;
        parity_rows_.assign(rank, detail::BitRow(k_));
        for (std::size_t r = 0; r < rank; ++r) {
            const std::size_t slot = pivot_cols[r] - info;
            for (std::size_t j = 0; j < k_; ++j)
                if (rows[r].get(j)) parity_rows_[slot].set(j);
        }
    }

public:
    /// True when the trailing rank() columns form an invertible parity block.
    bool systematic() const noexcept { return pivots_trailing_; }

private:
    std::size_t n_;
    std::size_t k_;
    std::uint64_t seed_;
    std::vector<std::vector<std::uint32_t>> checks_;
    std::vector<std::vector<std::uint32_t>> vars_;
    std::vector<std::uint32_t> permutation_;
    std::vector<detail::BitRow> parity_rows_;  // parity_rows_[i]: message taps of redundancy bit i
    bool pivots_trailing_ = false;
};

namespace detail {

/// Gallager (3,6) construction: three bands, the first in natural order, the
/// others column-permuted. The last row of a band absorbs any remainder.
inline std::vector<std::vector<std::uint32_t>> gallager_checks(std::size_t n, Rng& rng) {
    const std::size_t rows_per_band = n / kLdpcRowWeight;
    std::vector<std::vector<std::uint32_t>> checks;
    checks.reserve(rows_per_band * kLdpcColumnWeight);
    std::vector<std::uint32_t> cols(n);
    for (std::size_t band = 0; band < kLdpcColumnWeight; ++band) {
        std::iota(cols.begin(), cols.end(), 0u);
        if (band > 0) std::shuffle(cols.begin(), cols.end(), rng);
        for (std::size_t r = 0; r < rows_per_band; ++r) {
            const std::size_t lo = r * kLdpcRowWeight;
            const std::size_t hi = (r + 1 == rows_per_band) ? n : lo + kLdpcRowWeight;
            checks.emplace_back(cols.begin() + static_cast<std::ptrdiff_t>(lo),
                                cols.begin() + static_cast<std::ptrdiff_t>(hi));
        }
    }
    return checks;
}

/// Column order putting GF(2) pivot columns last, found by elimination from the right.
inline std::vector<std::uint32_t> systematic_order(std::size_t n,
                                                   const std::vector<std::vector<std::uint32_t>>& checks) {
    std::vector<BitRow> rows;
    for (const auto& c : checks) {
        BitRow r(n);
        for (auto v : c) r.flip(v);
        rows.push_back(std::move(r));
    }
    std::vector<bool> is_pivot(n, false);
    std::size_t placed = 0;
    for (std::size_t col = n; col-- > 0 && placed < rows.size();) {
        std::size_t pick = placed;
        while (pick < rows.size() && !rows[pick].get(col)) ++pick;
        if (pick == rows.size()) continue;
        std::swap(rows[placed], rows[pick]);
        for (std::size_t r = 0; r < rows.size(); ++r)
            if (r != placed && rows[r].get(col)) rows[r] ^= rows[placed];
        is_pivot[col] = true;
        ++placed;
    }
    std::vector<std::uint32_t> order;
    order.reserve(n);
    for (std::uint32_t c = 0; c < n; ++c)
        if (!is_pivot[c]) order.push_back(c);
    for (std::uint32_t c = 0; c < n; ++c)
        if (is_pivot[c]) order.push_back(c);
    return order;
}

}  // namespace detail

inline constexpr int kLdpcPermutationAttempts = 100;

/// Deterministic (3,6)-regular code of length n from a seed.
inline LdpcCode ldpc_build(std::uint64_t seed, std::size_t n = kDefaultCodeLength) {
    if (n < 48 || n % 2 != 0) throw InvalidArgument("code length must be even and >= 48");
    for (std::uint64_t s : {seed, seed + 1}) {
        Rng rng(derive_seed(s, {n}));
        for (int attempt = 0; attempt < kLdpcPermutationAttempts; ++attempt) {
            auto checks = detail::gallager_checks(n, rng);
            const auto order = detail::systematic_order(n, checks);
            std::vector<std::uint32_t> position(n);
            for (std::uint32_t p = 0; p < n; ++p) position[order[p]] = p;
            for (auto& row : checks)
                for (auto& v : row) v = position[v];
            LdpcCode code(n, std::move(checks), s, order);
            if (code.systematic()) return code;
        }
    }
    throw ConstructionFailed("no invertible parity block found");
}

inline Bits ldpc_encode(const LdpcCode& code, std::span<const std::uint8_t> message) { return code.encode(message); }

struct LdpcDecodeResult {
    Bits message;
    bool converged = false;
    int iterations = 0;
};

inline constexpr int kDefaultLdpcIterations = 50;

/// Bit flipping: each iteration flips the single bit in the most unsatisfied
/// checks (lowest index on ties) until the syndrome clears.
inline LdpcDecodeResult ldpc_decode(const LdpcCode& code, std::span<const std::uint8_t> received,
                                    int max_iterations = kDefaultLdpcIterations) {
    if (received.size() != code.n())
        throw LengthMismatch("received " + std::to_string(received.size()) + " bits, code length is " +
                             std::to_string(code.n()));
    Bits word(received.begin(), received.end());
    for (auto& b : word) b &= 1u;
    auto syn = code.syndrome(word);
    std::size_t unsatisfied = static_cast<std::size_t>(std::count(syn.begin(), syn.end(), 1));
    std::vector<int> votes(code.n(), 0);
    for (std::size_t c = 0; c < syn.size(); ++c)
        if (syn[c])
            for (auto v : code.checks()[c]) ++votes[v];

    LdpcDecodeResult r;
    while (unsatisfied > 0 && r.iterations < max_iterations) {
        const auto best = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
        word[best] ^= 1u;
        for (auto c : code.variables()[best]) {
            syn[c] ^= 1u;
            const int delta = syn[c] ? 1 : -1;
            unsatisfied = syn[c] ? unsatisfied + 1 : unsatisfied - 1;
            for (auto v : code.checks()[c]) votes[v] += delta;
        }
        ++r.iterations;
    }
    r.converged = unsatisfied == 0 && code.is_codeword(word);
    r.message.assign(word.begin(), word.begin() + static_cast<std::ptrdiff_t>(code.k()));
    return r;
}

/// Message bits chunked into k-bit blocks (last block zero-padded) and encoded.
struct FecFrame {
    Bits coded;
    std::size_t message_bits = 0;
    std::size_t blocks = 0;
    std::size_t padding = 0;
};

inline FecFrame fec_encode_stream(const LdpcCode& code, std::span<const std::uint8_t> bits) {
    FecFrame f;
    f.message_bits = bits.size();
    f.blocks = (bits.size() + code.k() - 1) / code.k();
    f.padding = f.blocks * code.k() - bits.size();
    f.coded.reserve(f.blocks * code.n());
    Bits block(code.k());
    for (std::size_t b = 0; b < f.blocks; ++b) {
        for (std::size_t i = 0; i < code.k(); ++i) {
            const std::size_t idx = b * code.k() + i;
            block[i] = idx < bits.size() ? bits[idx] : 0;
        }
        const auto cw = code.encode(block);
        f.coded.insert(f.coded.end(), cw.begin(), cw.end());
    }
    return f;
}

struct FecDecoded {
    Bits bits;                      // message_bits long
    std::size_t blocks_failed = 0;  // blocks whose decoder did not converge
};

/// Requires the exact framed length; a stream corrupted by insertions or
/// deletions is rejected with LengthMismatch.
inline FecDecoded fec_decode_stream(const LdpcCode& code, std::span<const std::uint8_t> received,
                                    std::size_t message_bits, int max_iterations = kDefaultLdpcIterations) {
    const std::size_t blocks = (message_bits + code.k() - 1) / code.k();
    if (received.size() != blocks * code.n())
        throw LengthMismatch("framed length " + std::to_string(blocks * code.n()) + " expected, got " +
                             std::to_string(received.size()));
    FecDecoded out;
    out.bits.reserve(blocks * code.k());
    for (std::size_t b = 0; b < blocks; ++b) {
        const auto res = ldpc_decode(code, received.subspan(b * code.n(), code.n()), max_iterations);
        if (!res.converged) ++out.blocks_failed;
        out.bits.insert(out.bits.end(), res.message.begin(), res.message.end());
    }
    out.bits.resize(message_bits);
    return out;
}

/// Parity-check matrix in alist format (1-based indices, zero padded).
inline void write_alist(std::ostream& os, const LdpcCode& code) {
    const auto& checks = code.checks();
    const auto& vars = code.variables();
    std::size_t max_col = 0, max_row = 0;
    for (const auto& v : vars) max_col = std::max(max_col, v.size());
    for (const auto& c : checks) max_row = std::max(max_row, c.size());
    os << code.n() << ' ' << checks.size() << '\n' << max_col << ' ' << max_row << '\n';
    auto join_sizes = [&os](const auto& lists) {
        for (std::size_t i = 0; i < lists.size(); ++i) os << (i ? " " : "") << lists[i].size();
        os << '\n';
    };
    join_sizes(vars);
    join_sizes(checks);
    auto rows = [&os](const auto& lists, std::size_t width) {
        for (const auto& l : lists) {
            for (std::size_t i = 0; i < width; ++i) os << (i ? " " : "") << (i < l.size() ? l[i] + 1 : 0);
            os << '\n';
        }
    };
    rows(vars, max_col);
    rows(checks, max_row);
}

inline LdpcCode read_alist(std::istream& is) {
    std::size_t n = 0, m = 0, max_col = 0, max_row = 0;
    if (!(is >> n >> m >> max_col >> max_row)) throw ParseError("alist: bad header");
    std::vector<std::size_t> col_w(n), row_w(m);
    for (auto& w : col_w)
        if (!(is >> w)) throw ParseError("alist: bad column weights");
    for (auto& w : row_w)
        if (!(is >> w)) throw ParseError("alist: bad row weights");
    std::vector<std::vector<std::uint32_t>> from_cols(m);
    for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t i = 0; i < max_col; ++i) {
            std::size_t c = 0;
            if (!(is >> c)) throw ParseError("alist: truncated column lists");
            if (c == 0) continue;
            if (c > m || i >= col_w[v]) throw ParseError("alist: column entry out of range");
            from_cols[c - 1].push_back(static_cast<std::uint32_t>(v));
        }
    }
    std::vector<std::vector<std::uint32_t>> checks(m);
    for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t i = 0; i < max_row; ++i) {
            std::size_t v = 0;
            if (!(is >> v)) throw ParseError("alist: truncated row lists");
            if (v == 0) continue;
            if (v > n || i >= row_w[c]) throw ParseError("alist: row entry out of range");
            checks[c].push_back(static_cast<std::uint32_t>(v - 1));
        }
        auto sorted = checks[c];
        std::sort(sorted.begin(), sorted.end());
        if (sorted != from_cols[c]) throw ParseError("alist: row and column lists disagree");
    }
    return LdpcCode(n, std::move(checks));
}

}  // namespace dmtb

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace eegmtl {

namespace detail {

// SplitMix64 finalizer. Bijective on 64-bit words; the whole RNG is built
// from it so draws are pure functions of (key, counter) on every platform.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

} // namespace detail

class RngCursor;

/// Counter-based random stream. A stream is just a 64-bit key; every draw is
/// a pure function of (key, counter), so replaying a draw needs no state.
/// Substreams are derived by name or index, which keeps independent parts of
/// a run (init of one parameter, dropout of one layer at one step, shuffling
/// of one epoch) on collision-free streams regardless of evaluation order.
class RngStream {
public:
    RngStream() : key_(detail::mix64(detail::kGolden)) {}
    explicit RngStream(std::uint64_t seed) : key_(detail::mix64(seed + detail::kGolden)) {}

    RngStream child(std::string_view name) const {
        return RngStream(FromKey{}, detail::mix64(key_ ^ detail::fnv1a64(name)));
    }

    RngStream child(std::uint64_t index) const {
        return RngStream(FromKey{}, detail::mix64(key_ + detail::kGolden * (index + 1)));
    }

    std::uint64_t key() const noexcept { return key_; }

    std::uint64_t bits(std::uint64_t counter) const noexcept {
        return detail::mix64(key_ + detail::kGolden * counter);
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    double uniform(std::uint64_t counter) const noexcept {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consumes counters 2c and 2c+1.
    double normal(std::uint64_t counter) const noexcept {
        const double u1 = uniform(2 * counter);
        const double u2 = uniform(2 * counter + 1);
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Integer in [0, bound) by multiply-shift; bias is < 2^-32 and the draw
    /// stays a pure function of the counter.
    std::uint64_t below(std::uint64_t counter, std::uint64_t bound) const noexcept {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(bits(counter)) * bound) >> 64);
    }

    RngCursor cursor() const;

private:
    struct FromKey {};
    RngStream(FromKey, std::uint64_t key) : key_(key) {}

    std::uint64_t key_;
};

/// Sequential view over a stream for bulk fills.
class RngCursor {
public:
    explicit RngCursor(const RngStream& s) : stream_(s) {}
    std::uint64_t next_bits() { return stream_.bits(counter_++); }
    double next_uniform() { return stream_.uniform(counter_++); }
    double next_normal() { return stream_.normal(counter_++); }
    std::uint64_t next_below(std::uint64_t bound) { return stream_.below(counter_++, bound); }

private:
    RngStream stream_;
    std::uint64_t counter_ = 0;
};

inline RngCursor RngStream::cursor() const { return RngCursor(*this); }

/// Deterministic Fisher-Yates permutation of 0..n-1 driven by one stream.
inline std::vector<int> random_permutation(int n, const RngStream& stream) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    auto cur = stream.cursor();
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(cur.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    return perm;
}

} // namespace eegmtl

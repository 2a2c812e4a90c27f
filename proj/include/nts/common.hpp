#pragma once

// Shared plumbing: error types, stable hashing, and the seeded RNG helpers
// every stage draws from. All randomness in the library flows through
// mt19937_64 plus the explicit bounded-draw below, so runs are reproducible
// across platforms for a fixed seed.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nts {

// ----------------------------- errors -----------------------------

struct NtsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : NtsError {
    using NtsError::NtsError;
};
struct ShapeError : NtsError {
    using NtsError::NtsError;
};
struct IndexError : NtsError {
    using NtsError::NtsError;
};
struct IoError : NtsError {
    using NtsError::NtsError;
};
struct CorruptCheckpoint : NtsError {
    using NtsError::NtsError;
};
struct UnsupportedVersion : NtsError {
    using NtsError::NtsError;
};
struct VocabMismatch : NtsError {
    using NtsError::NtsError;
};
struct TrainingDiverged : NtsError {
    using NtsError::NtsError;
};
struct ConfigError : NtsError {
    using NtsError::NtsError;
};

// ----------------------------- hashing -----------------------------

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Named per-stage seed derived from the single global seed.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage) {
    return splitmix64(global_seed ^ fnv1a64(stage));
}

inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage,
                                 std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t h = fnv1a64(stage);
    h = splitmix64(h ^ splitmix64(a));
    h = splitmix64(h ^ splitmix64(b + 0x6a09e667f3bcc909ull));
    return splitmix64(global_seed ^ h);
}

// ----------------------------- rng helpers -----------------------------

// Unbiased draw in [0, n). Rejection sampling keeps the result independent
// of the standard library's distribution implementation.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw InvalidArgument("bounded_draw: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(bounded_draw(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// First n entries of a seeded permutation of 0..total-1.
inline std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n,
                                               std::uint64_t seed) {
    if (n > total) throw InvalidArgument("sample_indices: n exceeds population size");
    std::vector<std::size_t> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(bounded_draw(rng, total - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    return idx;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace nts

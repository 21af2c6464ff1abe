// Shared plumbing: error types, deterministic RNG, string normalization.
//
// Everything downstream assumes the RNG here is bit-stable across platforms,
// which is why we do not use <random> distributions (their output is
// implementation-defined). splitmix64 + explicit scaling is enough.

#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kinn {

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: config -> 1, data/input -> 2,
// backend -> 3.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad run configuration or CLI usage.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Malformed input data. Carries a line number when one is known (1-based,
/// 0 = not applicable).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg, std::size_t line = 0)
        : Error(line ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

/// Invalid argument to an operation (shape mismatch, empty phrase, ...).
class InputError : public Error {
public:
    explicit InputError(const std::string& msg) : Error(msg) {}
};

/// A pluggable backend (encoder, UMLS, LLM) failed. `retriable` distinguishes
/// transient failures (unreachable service) from permanent ones.
class BackendError : public Error {
public:
    explicit BackendError(const std::string& msg, bool retriable = true)
        : Error(msg), retriable_(retriable) {}
    bool retriable() const { return retriable_; }

private:
    bool retriable_;
};

/// Non-finite value encountered inside the network; names the block.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& block)
        : Error("non-finite value in block '" + block + "'"), block_(block) {}
    const std::string& block() const { return block_; }

private:
    std::string block_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic hashing / RNG.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Small seeded RNG used for parameter init, shuffles and synthetic data.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0, 1).
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Phrase normalization: lowercase, collapse internal whitespace to single
// spaces, strip punctuation at the edges of the phrase. ASCII-only case
// folding; other bytes pass through untouched.
// ---------------------------------------------------------------------------

inline bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }
inline bool is_punct_byte(unsigned char c) { return std::ispunct(c) != 0; }

inline std::string normalize_phrase(const std::string& raw) {
    std::size_t begin = 0;
    std::size_t end = raw.size();
    while (begin < end && (is_space_byte(raw[begin]) || is_punct_byte(raw[begin]))) ++begin;
    while (end > begin && (is_space_byte(raw[end - 1]) || is_punct_byte(raw[end - 1]))) --end;

    std::string out;
    out.reserve(end - begin);
    bool pending_space = false;
    for (std::size_t i = begin; i < end; ++i) {
        unsigned char c = static_cast<unsigned char>(raw[i]);
        if (is_space_byte(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

/// Lowercase copy (ASCII).
inline std::string to_lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace kinn

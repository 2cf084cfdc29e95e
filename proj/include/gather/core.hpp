#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace gather {

using Label = std::uint32_t;
using Step = std::int64_t;

inline constexpr Label kNoLabel = std::numeric_limits<Label>::max();
inline constexpr Step kNever = std::numeric_limits<Step>::max();

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, std::string field, const std::string& what)
        : Error("parse error at line " + std::to_string(line) + ", field '" + field + "': " + what),
          line_(line), field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

class ConstructionFailed : public Error {
public:
    using Error::Error;
};

class Unsupported : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

namespace math {

// Saturating a^b for small nonnegative integers.
inline std::uint64_t ipow_sat(std::uint64_t base, unsigned exp) {
    std::uint64_t r = 1;
    for (unsigned i = 0; i < exp; ++i) {
        if (base != 0 && r > std::numeric_limits<std::uint64_t>::max() / base)
            return std::numeric_limits<std::uint64_t>::max();
        r *= base;
    }
    return r;
}

// Smallest d >= 0 with base^d >= x (ceil of log_base x for x >= 1).
inline unsigned ceil_log(std::uint64_t base, std::uint64_t x) {
    if (base < 2)
        throw std::invalid_argument("ceil_log: base must be >= 2");
    unsigned d = 0;
    std::uint64_t p = 1;
    while (p < x) {
        if (p > std::numeric_limits<std::uint64_t>::max() / base)
            return d + 1;
        p *= base;
        ++d;
    }
    return d;
}

inline unsigned ceil_log2(std::uint64_t x) { return ceil_log(2, x); }

inline unsigned floor_log2(std::uint64_t x) {
    unsigned r = 0;
    while (x > 1) {
        x >>= 1;
        ++r;
    }
    return r;
}

inline double log2n(std::size_t n) { return std::log2(static_cast<double>(std::max<std::size_t>(n, 1))); }

// Binomial coefficient, saturating at uint64 max.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n)
        return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > std::numeric_limits<std::uint64_t>::max())
            return std::numeric_limits<std::uint64_t>::max();
    }
    return static_cast<std::uint64_t>(r);
}

// Smallest integer K >= 1 with K^e >= n, i.e. ceil(n^(1/e)) computed exactly.
inline std::uint64_t ceil_root(std::uint64_t n, std::uint64_t e) {
    if (e == 0)
        throw std::invalid_argument("ceil_root: zero exponent");
    if (n <= 1)
        return 1;
    auto guess = static_cast<std::uint64_t>(std::ceil(std::pow(static_cast<long double>(n), 1.0L / e)));
    guess = std::max<std::uint64_t>(guess, 1);
    auto pw = [&](std::uint64_t k) {
        return e > 64 ? (k >= 2 ? std::numeric_limits<std::uint64_t>::max() : k)
                      : ipow_sat(k, static_cast<unsigned>(e));
    };
    while (guess > 1 && pw(guess - 1) >= n)
        --guess;
    while (pw(guess) < n)
        ++guess;
    return guess;
}

}  // namespace math
}  // namespace gather
